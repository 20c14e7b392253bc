// Tiny decoder-only transformer with hand-written backward passes.
//
// Attention is causal AND block-diagonal over document segments: a query at
// position i only sees keys j with segStart(i) <= j <= i inside the same
// segment. Padded positions attend to nothing and produce zero output.
// GELU (tanh form) keeps the whole model smooth, so finite-difference
// gradient checks converge cleanly.

import { gauss, type Rng } from "./rng.js";
import { matmulAcc, matmulGradA, matmulGradB, tensor, type Tensor } from "./tensor.js";

export interface ModelConfig {
  vocabSize: number;
  dim: number;
  heads: number;
  layers: number;
  contextLength: number;
}

const LN_EPS = 1e-5;
const GELU_C = 0.7978845608028654; // sqrt(2/pi)
const GELU_A = 0.044715;

function gelu(x: number): number {
  return 0.5 * x * (1 + Math.tanh(GELU_C * (x + GELU_A * x * x * x)));
}

function geluGrad(x: number): number {
  const u = GELU_C * (x + GELU_A * x * x * x);
  const t = Math.tanh(u);
  return 0.5 * (1 + t) + 0.5 * x * (1 - t * t) * GELU_C * (1 + 3 * GELU_A * x * x);
}

interface Block {
  ln1g: Tensor; ln1b: Tensor;
  wq: Tensor; wk: Tensor; wv: Tensor; wo: Tensor;
  ln2g: Tensor; ln2b: Tensor;
  w1: Tensor; b1: Tensor; w2: Tensor; b2: Tensor;
}

export class TinyGpt {
  cfg: ModelConfig;
  wte: Tensor;
  wpe: Tensor;
  blocks: Block[];
  lnfg: Tensor; lnfb: Tensor;
  lmHead: Tensor;
  params: Tensor[];

  constructor(cfg: ModelConfig, rng: Rng) {
    if (cfg.dim % cfg.heads !== 0) throw new Error("hidden width must divide into heads");
    this.cfg = cfg;
    const d = cfg.dim;
    this.wte = tensor("wte", [cfg.vocabSize, d], true);
    this.wpe = tensor("wpe", [cfg.contextLength, d], true);
    this.blocks = [];
    for (let l = 0; l < cfg.layers; l++) {
      const block: Block = {
        ln1g: tensor(`b${l}.ln1g`, [d]), ln1b: tensor(`b${l}.ln1b`, [d]),
        wq: tensor(`b${l}.wq`, [d, d], true), wk: tensor(`b${l}.wk`, [d, d], true),
        wv: tensor(`b${l}.wv`, [d, d], true), wo: tensor(`b${l}.wo`, [d, d], true),
        ln2g: tensor(`b${l}.ln2g`, [d]), ln2b: tensor(`b${l}.ln2b`, [d]),
        w1: tensor(`b${l}.w1`, [d, 4 * d], true), b1: tensor(`b${l}.b1`, [4 * d]),
        w2: tensor(`b${l}.w2`, [4 * d, d], true), b2: tensor(`b${l}.b2`, [d]),
      };
      this.blocks.push(block);
    }
    this.lnfg = tensor("lnfg", [d]);
    this.lnfb = tensor("lnfb", [d]);
    this.lmHead = tensor("lm_head", [d, cfg.vocabSize], true);

    this.params = [this.wte, this.wpe];
    for (const b of this.blocks) {
      this.params.push(b.ln1g, b.ln1b, b.wq, b.wk, b.wv, b.wo, b.ln2g, b.ln2b, b.w1, b.b1, b.w2, b.b2);
    }
    this.params.push(this.lnfg, this.lnfb, this.lmHead);

    const std = 0.02;
    for (const p of this.params) {
      if (p.name.includes("ln") && p.name.endsWith("g")) p.data.fill(1);
      else if (p.shape.length === 2) {
        for (let i = 0; i < p.data.length; i++) p.data[i] = gauss(rng, 0, std);
      }
    }
  }

  zeroGrad(): void {
    for (const p of this.params) p.grad.fill(0);
  }

  paramCount(): number {
    return this.params.reduce((n, p) => n + p.data.length, 0);
  }
}

/**
 * For each position, the first attendable key index. Derived from segment
 * spans; padded positions get -1 (attend to nothing).
 */
export function segmentStarts(segments: Array<[number, number]>, T: number): Int32Array {
  const starts = new Int32Array(T).fill(-1);
  let pos = 0;
  for (const [start, length] of segments) {
    if (start !== pos || length <= 0) throw new Error("segments must be contiguous from 0");
    for (let i = start; i < start + length; i++) starts[i] = start;
    pos = start + length;
  }
  return starts;
}

/**
 * Dense additive attention mask (0 allowed, -Infinity blocked) for one
 * sequence. Mostly for inspection/tests; the forward pass uses segmentStarts
 * directly, which realizes the same mask.
 */
export function blockMask(segments: Array<[number, number]>, T: number): Float64Array {
  const starts = segmentStarts(segments, T);
  const mask = new Float64Array(T * T).fill(Number.NEGATIVE_INFINITY);
  for (let i = 0; i < T; i++) {
    if (starts[i] < 0) continue;
    for (let j = starts[i]; j <= i; j++) mask[i * T + j] = 0;
  }
  return mask;
}

export function allowedPairCount(segments: Array<[number, number]>): number {
  let count = 0;
  for (const [, length] of segments) count += (length * (length + 1)) / 2;
  return count;
}

export interface ForwardCache {
  B: number;
  T: number;
  ids: Uint32Array[];
  segStarts: Int32Array[];
  x0: Float64Array;
  perLayer: Array<{
    xIn: Float64Array;
    xhat1: Float64Array; rstd1: Float64Array; a1: Float64Array;
    q: Float64Array; k: Float64Array; v: Float64Array;
    probs: Float64Array; // [B, H, T, T]
    att: Float64Array;
    xMid: Float64Array;
    xhat2: Float64Array; rstd2: Float64Array; a2: Float64Array;
    hPre: Float64Array; hAct: Float64Array;
  }>;
  xOut: Float64Array;
  xhatF: Float64Array; rstdF: Float64Array; aF: Float64Array;
  logits: Float64Array; // [B, T, V]
}

function layerNormForward(
  x: Float64Array, g: Float64Array, b: Float64Array, rows: number, d: number,
  xhat: Float64Array, rstdOut: Float64Array, out: Float64Array
): void {
  for (let r = 0; r < rows; r++) {
    const o = r * d;
    let mean = 0;
    for (let i = 0; i < d; i++) mean += x[o + i];
    mean /= d;
    let variance = 0;
    for (let i = 0; i < d; i++) {
      const c = x[o + i] - mean;
      variance += c * c;
    }
    variance /= d;
    const rstd = 1 / Math.sqrt(variance + LN_EPS);
    rstdOut[r] = rstd;
    for (let i = 0; i < d; i++) {
      const xh = (x[o + i] - mean) * rstd;
      xhat[o + i] = xh;
      out[o + i] = xh * g[i] + b[i];
    }
  }
}

function layerNormBackward(
  dOut: Float64Array, xhat: Float64Array, rstd: Float64Array,
  g: Tensor, b: Tensor, rows: number, d: number, dx: Float64Array
): void {
  for (let r = 0; r < rows; r++) {
    const o = r * d;
    let sumDxhat = 0;
    let sumDxhatXhat = 0;
    for (let i = 0; i < d; i++) {
      const dy = dOut[o + i];
      g.grad[i] += dy * xhat[o + i];
      b.grad[i] += dy;
      const dxh = dy * g.data[i];
      sumDxhat += dxh;
      sumDxhatXhat += dxh * xhat[o + i];
    }
    const inv = rstd[r] / d;
    for (let i = 0; i < d; i++) {
      const dxh = dOut[o + i] * g.data[i];
      dx[o + i] += inv * (d * dxh - sumDxhat - xhat[o + i] * sumDxhatXhat);
    }
  }
}

/** Full-batch forward. segStarts comes from segmentStarts() per sequence. */
export function forward(
  model: TinyGpt, ids: Uint32Array[], segStarts: Int32Array[]
): ForwardCache {
  const { dim: d, heads: H, vocabSize: V } = model.cfg;
  const hd = d / H;
  const scale = 1 / Math.sqrt(hd);
  const B = ids.length;
  const T = ids[0].length;
  if (T > model.cfg.contextLength) throw new Error(`sequence length ${T} exceeds context`);
  const rows = B * T;

  const x0 = new Float64Array(rows * d);
  for (let b = 0; b < B; b++) {
    for (let t = 0; t < T; t++) {
      const o = (b * T + t) * d;
      const te = ids[b][t] * d;
      const pe = t * d;
      for (let i = 0; i < d; i++) x0[o + i] = model.wte.data[te + i] + model.wpe.data[pe + i];
    }
  }

  const cache: ForwardCache = {
    B, T, ids, segStarts, x0,
    perLayer: [],
    xOut: new Float64Array(0),
    xhatF: new Float64Array(rows * d),
    rstdF: new Float64Array(rows),
    aF: new Float64Array(rows * d),
    logits: new Float64Array(rows * V),
  };

  let x = x0;
  for (const block of model.blocks) {
    const xIn = x;
    const xhat1 = new Float64Array(rows * d);
    const rstd1 = new Float64Array(rows);
    const a1 = new Float64Array(rows * d);
    layerNormForward(xIn, block.ln1g.data, block.ln1b.data, rows, d, xhat1, rstd1, a1);

    const q = new Float64Array(rows * d);
    const k = new Float64Array(rows * d);
    const v = new Float64Array(rows * d);
    matmulAcc(q, a1, block.wq.data, rows, d, d);
    matmulAcc(k, a1, block.wk.data, rows, d, d);
    matmulAcc(v, a1, block.wv.data, rows, d, d);

    const probs = new Float64Array(B * H * T * T);
    const att = new Float64Array(rows * d);
    for (let b = 0; b < B; b++) {
      const starts = segStarts[b];
      for (let h = 0; h < H; h++) {
        const ho = h * hd;
        for (let i = 0; i < T; i++) {
          const s0 = starts[i];
          if (s0 < 0) continue; // pad: attends to nothing, output stays 0
          const qo = (b * T + i) * d + ho;
          const po = ((b * H + h) * T + i) * T;
          let maxScore = -Infinity;
          for (let j = s0; j <= i; j++) {
            const ko = (b * T + j) * d + ho;
            let score = 0;
            for (let c = 0; c < hd; c++) score += q[qo + c] * k[ko + c];
            score *= scale;
            probs[po + j] = score;
            if (score > maxScore) maxScore = score;
          }
          let total = 0;
          for (let j = s0; j <= i; j++) {
            const e = Math.exp(probs[po + j] - maxScore);
            probs[po + j] = e;
            total += e;
          }
          const ao = (b * T + i) * d + ho;
          for (let j = s0; j <= i; j++) {
            const p = probs[po + j] / total;
            probs[po + j] = p;
            const vo = (b * T + j) * d + ho;
            for (let c = 0; c < hd; c++) att[ao + c] += p * v[vo + c];
          }
        }
      }
    }

    const attOut = new Float64Array(rows * d);
    matmulAcc(attOut, att, block.wo.data, rows, d, d);
    const xMid = new Float64Array(rows * d);
    for (let i = 0; i < rows * d; i++) xMid[i] = xIn[i] + attOut[i];

    const xhat2 = new Float64Array(rows * d);
    const rstd2 = new Float64Array(rows);
    const a2 = new Float64Array(rows * d);
    layerNormForward(xMid, block.ln2g.data, block.ln2b.data, rows, d, xhat2, rstd2, a2);

    const hPre = new Float64Array(rows * 4 * d);
    matmulAcc(hPre, a2, block.w1.data, rows, d, 4 * d);
    for (let r = 0; r < rows; r++) {
      const o = r * 4 * d;
      for (let i = 0; i < 4 * d; i++) hPre[o + i] += block.b1.data[i];
    }
    const hAct = new Float64Array(rows * 4 * d);
    for (let i = 0; i < hPre.length; i++) hAct[i] = gelu(hPre[i]);

    const mlpOut = new Float64Array(rows * d);
    matmulAcc(mlpOut, hAct, block.w2.data, rows, 4 * d, d);
    const xNext = new Float64Array(rows * d);
    for (let r = 0; r < rows; r++) {
      const o = r * d;
      for (let i = 0; i < d; i++) xNext[o + i] = xMid[o + i] + mlpOut[o + i] + block.b2.data[i];
    }

    cache.perLayer.push({ xIn, xhat1, rstd1, a1, q, k, v, probs, att, xMid, xhat2, rstd2, a2, hPre, hAct });
    x = xNext;
  }

  cache.xOut = x;
  layerNormForward(x, model.lnfg.data, model.lnfb.data, rows, d, cache.xhatF, cache.rstdF, cache.aF);
  matmulAcc(cache.logits, cache.aF, model.lmHead.data, rows, d, V);
  return cache;
}

/** Backward from dLogits; accumulates into model.params[*].grad. */
export function backward(model: TinyGpt, cache: ForwardCache, dLogits: Float64Array): void {
  const { dim: d, heads: H, vocabSize: V } = model.cfg;
  const hd = d / H;
  const scale = 1 / Math.sqrt(hd);
  const { B, T } = cache;
  const rows = B * T;

  const dAF = new Float64Array(rows * d);
  matmulGradA(dAF, dLogits, model.lmHead.data, rows, d, V);
  matmulGradB(model.lmHead.grad, cache.aF, dLogits, rows, d, V);

  let dX = new Float64Array(rows * d);
  layerNormBackward(dAF, cache.xhatF, cache.rstdF, model.lnfg, model.lnfb, rows, d, dX);

  for (let l = model.blocks.length - 1; l >= 0; l--) {
    const block = model.blocks[l];
    const c = cache.perLayer[l];

    // mlp: xNext = xMid + hAct*W2 + b2
    const dMlpOut = dX; // alias: gradient wrt mlp output equals dX
    for (let r = 0; r < rows; r++) {
      const o = r * d;
      for (let i = 0; i < d; i++) block.b2.grad[i] += dMlpOut[o + i];
    }
    const dHAct = new Float64Array(rows * 4 * d);
    matmulGradA(dHAct, dMlpOut, block.w2.data, rows, 4 * d, d);
    matmulGradB(block.w2.grad, c.hAct, dMlpOut, rows, 4 * d, d);
    const dHPre = dHAct; // reuse buffer
    for (let i = 0; i < dHPre.length; i++) dHPre[i] = dHAct[i] * geluGrad(c.hPre[i]);
    for (let r = 0; r < rows; r++) {
      const o = r * 4 * d;
      for (let i = 0; i < 4 * d; i++) block.b1.grad[i] += dHPre[o + i];
    }
    const dA2 = new Float64Array(rows * d);
    matmulGradA(dA2, dHPre, block.w1.data, rows, d, 4 * d);
    matmulGradB(block.w1.grad, c.a2, dHPre, rows, d, 4 * d);

    const dXMid = new Float64Array(rows * d);
    dXMid.set(dX); // residual path
    layerNormBackward(dA2, c.xhat2, c.rstd2, block.ln2g, block.ln2b, rows, d, dXMid);

    // attention: xMid = xIn + att*Wo
    const dAtt = new Float64Array(rows * d);
    matmulGradA(dAtt, dXMid, block.wo.data, rows, d, d);
    matmulGradB(block.wo.grad, c.att, dXMid, rows, d, d);

    const dQ = new Float64Array(rows * d);
    const dK = new Float64Array(rows * d);
    const dV = new Float64Array(rows * d);
    for (let b = 0; b < B; b++) {
      const starts = cache.segStarts[b];
      for (let h = 0; h < H; h++) {
        const ho = h * hd;
        for (let i = 0; i < T; i++) {
          const s0 = starts[i];
          if (s0 < 0) continue;
          const po = ((b * H + h) * T + i) * T;
          const io = (b * T + i) * d + ho;
          let dot = 0; // sum_j p_j * dp_j
          for (let j = s0; j <= i; j++) {
            const vo = (b * T + j) * d + ho;
            let dp = 0;
            for (let cc = 0; cc < hd; cc++) {
              dp += dAtt[io + cc] * c.v[vo + cc];
              dV[vo + cc] += c.probs[po + j] * dAtt[io + cc];
            }
            dot += c.probs[po + j] * dp;
            // stash dp in a register-free way: recompute below
          }
          for (let j = s0; j <= i; j++) {
            const vo = (b * T + j) * d + ho;
            let dp = 0;
            for (let cc = 0; cc < hd; cc++) dp += dAtt[io + cc] * c.v[vo + cc];
            const dScore = c.probs[po + j] * (dp - dot) * scale;
            const ko = (b * T + j) * d + ho;
            for (let cc = 0; cc < hd; cc++) {
              dQ[io + cc] += dScore * c.k[ko + cc];
              dK[ko + cc] += dScore * c.q[io + cc];
            }
          }
        }
      }
    }

    const dA1 = new Float64Array(rows * d);
    matmulGradA(dA1, dQ, block.wq.data, rows, d, d);
    matmulGradB(block.wq.grad, c.a1, dQ, rows, d, d);
    matmulGradA(dA1, dK, block.wk.data, rows, d, d);
    matmulGradB(block.wk.grad, c.a1, dK, rows, d, d);
    matmulGradA(dA1, dV, block.wv.data, rows, d, d);
    matmulGradB(block.wv.grad, c.a1, dV, rows, d, d);

    const dXIn = new Float64Array(rows * d);
    dXIn.set(dXMid); // residual path
    layerNormBackward(dA1, c.xhat1, c.rstd1, block.ln1g, block.ln1b, rows, d, dXIn);
    dX = dXIn;
  }

  for (let b = 0; b < B; b++) {
    for (let t = 0; t < T; t++) {
      const o = (b * T + t) * d;
      const te = cache.ids[b][t] * d;
      const pe = t * d;
      for (let i = 0; i < d; i++) {
        model.wte.grad[te + i] += dX[o + i];
        model.wpe.grad[pe + i] += dX[o + i];
      }
    }
  }
}
