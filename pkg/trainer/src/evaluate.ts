// Held-out evaluation: token-mean masked NLL with no metadata prefix,
// matching how the model is used after cooldown.

import { maskedCrossEntropy, shiftTargets } from "./loss.js";
import { forward, segmentStarts, TinyGpt } from "./model.js";
import type { PackedSequence } from "./shards.js";

export function meanMaskedNll(model: TinyGpt, seqs: PackedSequence[], batchSeqs = 8): number {
  let lossSum = 0;
  let nTargets = 0;
  for (let start = 0; start < seqs.length; start += batchSeqs) {
    const batch = seqs.slice(start, start + batchSeqs);
    const T = batch[0].ids.length;
    const cache = forward(
      model,
      batch.map((s) => s.ids),
      batch.map((s) => segmentStarts(s.segments, T))
    );
    const rows = batch.length * T;
    const targets = new Uint32Array(rows);
    const weights = new Uint8Array(rows);
    for (let b = 0; b < batch.length; b++) {
      const shifted = shiftTargets(batch[b].ids, batch[b].lossMask);
      targets.set(shifted.targets, b * T);
      weights.set(shifted.weights, b * T);
    }
    const res = maskedCrossEntropy(cache.logits, targets, weights, model.cfg.vocabSize, false);
    lossSum += res.loss * res.nTargets;
    nTargets += res.nTargets;
  }
  return nTargets ? lossSum / nTargets : 0;
}

/** Per-source evaluation over {source name -> sequences} (standard rendering). */
export function evaluatePerSource(
  model: TinyGpt, bySource: Record<string, PackedSequence[]>
): Record<string, number> {
  const out: Record<string, number> = {};
  for (const [name, seqs] of Object.entries(bySource)) out[name] = meanMaskedNll(model, seqs);
  return out;
}
