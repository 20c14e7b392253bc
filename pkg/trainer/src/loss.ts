// Masked next-token cross entropy.
//
// The shard loss mask is positional: bit i governs token i as a *target*.
// After the causal shift, the model's logits at input position t are scored
// against token t+1 weighted by mask bit t+1. Masked-out targets contribute
// nothing, and their logit gradients are identically zero (not just small).

export interface MaskedLossResult {
  loss: number;
  nTargets: number;
  dLogits: Float64Array | null;
}

/**
 * logits: [rows, V]; targets/weights: [rows]. Positions with weight 0 are
 * excluded from the mean; an all-zero mask yields loss 0 with a warning.
 */
export function maskedCrossEntropy(
  logits: Float64Array,
  targets: Uint32Array,
  weights: Uint8Array,
  V: number,
  wantGrad = true
): MaskedLossResult {
  const rows = targets.length;
  let nTargets = 0;
  for (let r = 0; r < rows; r++) if (weights[r]) nTargets++;
  const dLogits = wantGrad ? new Float64Array(rows * V) : null;
  if (nTargets === 0) {
    console.warn("maskedCrossEntropy: loss mask is all zero; defining loss as 0");
    return { loss: 0, nTargets: 0, dLogits };
  }
  let loss = 0;
  const inv = 1 / nTargets;
  for (let r = 0; r < rows; r++) {
    if (!weights[r]) continue;
    const o = r * V;
    let maxLogit = -Infinity;
    for (let j = 0; j < V; j++) if (logits[o + j] > maxLogit) maxLogit = logits[o + j];
    let total = 0;
    for (let j = 0; j < V; j++) total += Math.exp(logits[o + j] - maxLogit);
    const logZ = maxLogit + Math.log(total);
    loss += logZ - logits[o + targets[r]];
    if (dLogits) {
      for (let j = 0; j < V; j++) {
        dLogits[o + j] = (Math.exp(logits[o + j] - logZ) - (j === targets[r] ? 1 : 0)) * inv;
      }
    }
  }
  return { loss: loss * inv, nTargets, dLogits };
}

/** Shift one packed sequence into (targets, weights) aligned to input positions. */
export function shiftTargets(
  ids: Uint32Array, lossMask: Uint8Array
): { targets: Uint32Array; weights: Uint8Array } {
  const T = ids.length;
  const targets = new Uint32Array(T);
  const weights = new Uint8Array(T);
  for (let t = 0; t < T - 1; t++) {
    targets[t] = ids[t + 1];
    weights[t] = lossMask[t + 1];
  }
  return { targets, weights };
}
