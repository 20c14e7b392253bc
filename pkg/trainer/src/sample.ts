// Incremental decoding with a KV cache, temperature + nucleus sampling.

import { TinyGpt } from "./model.js";
import type { Rng } from "./rng.js";

const LN_EPS = 1e-5;
const GELU_C = 0.7978845608028654;
const GELU_A = 0.044715;

function layerNormVec(x: Float64Array, g: Float64Array, b: Float64Array, out: Float64Array): void {
  const d = x.length;
  let mean = 0;
  for (let i = 0; i < d; i++) mean += x[i];
  mean /= d;
  let variance = 0;
  for (let i = 0; i < d; i++) {
    const c = x[i] - mean;
    variance += c * c;
  }
  const rstd = 1 / Math.sqrt(variance / d + LN_EPS);
  for (let i = 0; i < d; i++) out[i] = (x[i] - mean) * rstd * g[i] + b[i];
}

function vecMat(x: Float64Array, W: Float64Array, dIn: number, dOut: number, out: Float64Array): void {
  out.fill(0);
  for (let i = 0; i < dIn; i++) {
    const a = x[i];
    if (a === 0) continue;
    const row = i * dOut;
    for (let j = 0; j < dOut; j++) out[j] += a * W[row + j];
  }
}

/** Streaming single-sequence decoder; feed() appends one token, returns logits. */
export class Decoder {
  private model: TinyGpt;
  private kCache: Float64Array[];
  private vCache: Float64Array[];
  private t = 0;

  constructor(model: TinyGpt) {
    this.model = model;
    const size = model.cfg.contextLength * model.cfg.dim;
    this.kCache = model.blocks.map(() => new Float64Array(size));
    this.vCache = model.blocks.map(() => new Float64Array(size));
  }

  get length(): number {
    return this.t;
  }

  feed(tokenId: number): Float64Array {
    const m = this.model;
    const { dim: d, heads: H, vocabSize: V, contextLength } = m.cfg;
    if (this.t >= contextLength) throw new Error("context window exhausted");
    const hd = d / H;
    const scale = 1 / Math.sqrt(hd);
    const pos = this.t;

    const x = new Float64Array(d);
    for (let i = 0; i < d; i++) x[i] = m.wte.data[tokenId * d + i] + m.wpe.data[pos * d + i];

    const a = new Float64Array(d);
    const q = new Float64Array(d);
    const attOut = new Float64Array(d);
    const proj = new Float64Array(d);
    const h = new Float64Array(4 * d);
    const mlp = new Float64Array(d);

    for (let l = 0; l < m.blocks.length; l++) {
      const blk = m.blocks[l];
      layerNormVec(x, blk.ln1g.data, blk.ln1b.data, a);
      vecMat(a, blk.wq.data, d, d, q);
      const kRow = this.kCache[l].subarray(pos * d, (pos + 1) * d);
      const vRow = this.vCache[l].subarray(pos * d, (pos + 1) * d);
      vecMat(a, blk.wk.data, d, d, kRow);
      vecMat(a, blk.wv.data, d, d, vRow);

      attOut.fill(0);
      for (let head = 0; head < H; head++) {
        const ho = head * hd;
        let maxScore = -Infinity;
        const scores = new Float64Array(pos + 1);
        for (let j = 0; j <= pos; j++) {
          const ko = j * d + ho;
          let s = 0;
          for (let c = 0; c < hd; c++) s += q[ho + c] * this.kCache[l][ko + c];
          s *= scale;
          scores[j] = s;
          if (s > maxScore) maxScore = s;
        }
        let total = 0;
        for (let j = 0; j <= pos; j++) {
          scores[j] = Math.exp(scores[j] - maxScore);
          total += scores[j];
        }
        for (let j = 0; j <= pos; j++) {
          const p = scores[j] / total;
          const vo = j * d + ho;
          for (let c = 0; c < hd; c++) attOut[ho + c] += p * this.vCache[l][vo + c];
        }
      }
      vecMat(attOut, blk.wo.data, d, d, proj);
      for (let i = 0; i < d; i++) x[i] += proj[i];

      layerNormVec(x, blk.ln2g.data, blk.ln2b.data, a);
      vecMat(a, blk.w1.data, d, 4 * d, h);
      for (let i = 0; i < 4 * d; i++) {
        const z = h[i] + blk.b1.data[i];
        h[i] = 0.5 * z * (1 + Math.tanh(GELU_C * (z + GELU_A * z * z * z)));
      }
      vecMat(h, blk.w2.data, 4 * d, d, mlp);
      for (let i = 0; i < d; i++) x[i] += mlp[i] + blk.b2.data[i];
    }

    layerNormVec(x, m.lnfg.data, m.lnfb.data, a);
    const logits = new Float64Array(V);
    vecMat(a, m.lmHead.data, d, V, logits);
    this.t += 1;
    return logits;
  }
}

export interface SamplingConfig {
  temperature: number; // > 0; values ~0 degrade to greedy
  topP: number; // (0, 1]
  minTokens: number;
  maxTokens: number;
}

export const DEFAULT_SAMPLING: SamplingConfig = {
  temperature: 0.7,
  topP: 0.9,
  minTokens: 10,
  maxTokens: 128,
};

export function sampleToken(
  logits: Float64Array, cfg: SamplingConfig, rng: Rng, banned: number[] = []
): number {
  const V = logits.length;
  const work = Float64Array.from(logits);
  for (const b of banned) work[b] = -Infinity;
  if (cfg.temperature <= 1e-6) {
    let best = 0;
    for (let j = 1; j < V; j++) if (work[j] > work[best]) best = j;
    return best;
  }
  let maxLogit = -Infinity;
  for (let j = 0; j < V; j++) {
    work[j] /= cfg.temperature;
    if (work[j] > maxLogit) maxLogit = work[j];
  }
  let total = 0;
  for (let j = 0; j < V; j++) {
    work[j] = Math.exp(work[j] - maxLogit);
    total += work[j];
  }
  for (let j = 0; j < V; j++) work[j] /= total;

  const order = Array.from({ length: V }, (_, j) => j).sort((a, b) => work[b] - work[a]);
  let cum = 0;
  let cut = V;
  for (let r = 0; r < V; r++) {
    cum += work[order[r]];
    if (cum >= cfg.topP) {
      cut = r + 1;
      break;
    }
  }
  let nucleusTotal = 0;
  for (let r = 0; r < cut; r++) nucleusTotal += work[order[r]];
  let u = rng() * nucleusTotal;
  for (let r = 0; r < cut; r++) {
    u -= work[order[r]];
    if (u <= 0) return order[r];
  }
  return order[cut - 1];
}

/**
 * Generate one sample continuation. Lengths land in [minTokens, maxTokens]:
 * the terminator is suppressed until minTokens tokens have been produced.
 * Returns generated ids only (prompt and terminator excluded).
 */
export function generate(
  model: TinyGpt, promptIds: number[], cfg: SamplingConfig, rng: Rng, eosId: number
): number[] {
  if (promptIds.length === 0) throw new Error("prompt must include at least the bos token");
  const decoder = new Decoder(model);
  let logits: Float64Array | null = null;
  for (const id of promptIds) logits = decoder.feed(id);
  const out: number[] = [];
  while (out.length < cfg.maxTokens) {
    const banned = out.length < cfg.minTokens ? [eosId] : [];
    const next = sampleToken(logits!, cfg, rng, banned);
    if (next === eosId) break;
    out.push(next);
    if (decoder.length >= model.cfg.contextLength) break;
    logits = decoder.feed(next);
  }
  return out;
}
