// Two-stage training loop over pipeline shards.
//
// Steps 1..b draw batches from the conditioning shards, steps b+1..T from
// the cooldown shards, in shard order. The learning-rate schedule and the
// optimizer state pass through the boundary untouched; the only thing that
// changes at step b+1 is which shard set feeds the batches.

import { AdamW, DEFAULT_ADAMW, type AdamWConfig } from "./adamw.js";
import { maskedCrossEntropy, shiftTargets } from "./loss.js";
import { backward, forward, segmentStarts, TinyGpt, type ModelConfig } from "./model.js";
import { lrAt, type Plan } from "./plan.js";
import { mulberry32 } from "./rng.js";
import type { PackedSequence } from "./shards.js";

export interface StepRecord {
  step: number;
  stage: "conditioning" | "cooldown";
  loss: number;
  lr: number;
  momentNorm: number;
}

export interface TrainReport {
  steps: StepRecord[];
  stageTokens: { conditioning: number; cooldown: number };
  batchSequences: number;
  paramCount: number;
}

export interface TrainOptions {
  peakLrOverride?: number; // toy runs scale the preset peak down
  adam?: AdamWConfig;
  maxSteps?: number; // optionally stop early (still in-plan)
  onStep?: (record: StepRecord) => void;
}

function takeBatch(seqs: PackedSequence[], step0: number, batchSeqs: number): PackedSequence[] {
  const start = step0 * batchSeqs;
  const batch = seqs.slice(start, start + batchSeqs);
  if (batch.length < batchSeqs) {
    throw new Error(`shard set exhausted at batch ${step0}: have ${seqs.length} sequences`);
  }
  return batch;
}

export function trainStep(
  model: TinyGpt, optimizer: AdamW, batch: PackedSequence[], lr: number
): number {
  const T = batch[0].ids.length;
  const ids = batch.map((s) => s.ids);
  const starts = batch.map((s) => segmentStarts(s.segments, T));
  const cache = forward(model, ids, starts);

  const rows = batch.length * T;
  const targets = new Uint32Array(rows);
  const weights = new Uint8Array(rows);
  for (let b = 0; b < batch.length; b++) {
    const shifted = shiftTargets(batch[b].ids, batch[b].lossMask);
    targets.set(shifted.targets, b * T);
    weights.set(shifted.weights, b * T);
  }
  const { loss, dLogits } = maskedCrossEntropy(cache.logits, targets, weights, model.cfg.vocabSize);
  if (!Number.isFinite(loss)) throw new Error(`non-finite loss (${loss})`);
  model.zeroGrad();
  backward(model, cache, dLogits!);
  optimizer.step(model.params, lr);
  return loss;
}

export function runTwoStage(
  condSeqs: PackedSequence[],
  coolSeqs: PackedSequence[],
  plan: Plan,
  modelCfg: ModelConfig,
  seed: number,
  opts: TrainOptions = {}
): { model: TinyGpt; optimizer: AdamW; report: TrainReport } {
  const L = condSeqs.length ? condSeqs[0].ids.length : coolSeqs[0].ids.length;
  const batchSeqs = Math.floor(plan.batch_tokens / L);
  if (batchSeqs < 1) throw new Error(`batch_tokens ${plan.batch_tokens} below one sequence`);
  const effectivePlan: Plan = opts.peakLrOverride
    ? { ...plan, lr: { ...plan.lr, peak: opts.peakLrOverride } }
    : plan;

  const model = new TinyGpt(modelCfg, mulberry32(seed));
  const optimizer = new AdamW(model.params, opts.adam ?? DEFAULT_ADAMW);
  const report: TrainReport = {
    steps: [],
    stageTokens: { conditioning: 0, cooldown: 0 },
    batchSequences: batchSeqs,
    paramCount: model.paramCount(),
  };

  const lastStep = Math.min(plan.T, opts.maxSteps ?? plan.T);
  for (let t = 1; t <= lastStep; t++) {
    const stage = t <= plan.b ? "conditioning" : "cooldown";
    const pool = stage === "conditioning" ? condSeqs : coolSeqs;
    const stageStep = stage === "conditioning" ? t - 1 : t - plan.b - 1;
    const batch = takeBatch(pool, stageStep, batchSeqs);
    const lr = lrAt(t, effectivePlan);
    let loss: number;
    try {
      loss = trainStep(model, optimizer, batch, lr);
    } catch (err) {
      throw new Error(`training aborted at step ${t}: ${(err as Error).message}`);
    }
    report.stageTokens[stage] += batchSeqs * L;
    const record: StepRecord = { step: t, stage, loss, lr, momentNorm: optimizer.momentNorm() };
    report.steps.push(record);
    opts.onStep?.(record);
  }
  return { model, optimizer, report };
}
