// AdamW with decoupled weight decay. Moment buffers live for the whole run;
// a stage boundary never resets them.

import type { Tensor } from "./tensor.js";

export interface AdamWConfig {
  beta1: number;
  beta2: number;
  eps: number;
  weightDecay: number;
}

export const DEFAULT_ADAMW: AdamWConfig = {
  beta1: 0.9,
  beta2: 0.95,
  eps: 1e-8,
  weightDecay: 0.033,
};

export class AdamW {
  cfg: AdamWConfig;
  m: Float64Array[];
  v: Float64Array[];
  stepCount = 0;

  constructor(params: Tensor[], cfg: AdamWConfig = DEFAULT_ADAMW) {
    this.cfg = cfg;
    this.m = params.map((p) => new Float64Array(p.data.length));
    this.v = params.map((p) => new Float64Array(p.data.length));
  }

  step(params: Tensor[], lr: number): void {
    const { beta1, beta2, eps, weightDecay } = this.cfg;
    this.stepCount += 1;
    const bc1 = 1 - Math.pow(beta1, this.stepCount);
    const bc2 = 1 - Math.pow(beta2, this.stepCount);
    for (let pi = 0; pi < params.length; pi++) {
      const p = params[pi];
      const m = this.m[pi];
      const v = this.v[pi];
      const wd = p.decay ? weightDecay : 0;
      for (let i = 0; i < p.data.length; i++) {
        const g = p.grad[i];
        m[i] = beta1 * m[i] + (1 - beta1) * g;
        v[i] = beta2 * v[i] + (1 - beta2) * g * g;
        const update = (m[i] / bc1) / (Math.sqrt(v[i] / bc2) + eps);
        p.data[i] -= lr * (update + wd * p.data[i]);
      }
    }
  }

  /** L2 norm over all first moments; used to observe state continuity. */
  momentNorm(): number {
    let total = 0;
    for (const m of this.m) for (let i = 0; i < m.length; i++) total += m[i] * m[i];
    return Math.sqrt(total);
  }
}
