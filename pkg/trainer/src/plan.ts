// Training plan as emitted by the pipeline (plan.json).

import { readFileSync } from "node:fs";

export interface Plan {
  T: number;
  w: number;
  b: number;
  strategy: string;
  cooldown_fraction: number;
  splits: Record<string, string>;
  lr: { peak: number; final_ratio: number };
  warmup_fraction: number;
  batch_tokens: number;
  seq_len?: number;
  interleave_p?: number;
  lr_table?: number[];
}

export function loadPlan(path: string): Plan {
  const plan = JSON.parse(readFileSync(path, "utf8")) as Plan;
  for (const key of ["T", "w", "b", "strategy", "splits", "lr"] as const) {
    if (plan[key] === undefined) throw new Error(`plan.json missing field ${key}`);
  }
  if (!(plan.w >= 0 && plan.w <= plan.b && plan.b <= plan.T)) {
    throw new Error(`plan bounds violated: w=${plan.w} b=${plan.b} T=${plan.T}`);
  }
  return plan;
}

/**
 * Learning rate at step t: linear warmup from 0 to peak over w steps, then
 * cosine decay to final_ratio * peak at T. One continuous function covers
 * both training stages; the cooldown never restarts the schedule.
 */
export function lrAt(t: number, plan: Plan): number {
  if (t < 0 || t > plan.T) throw new Error(`step ${t} outside [0, ${plan.T}]`);
  const peak = plan.lr.peak;
  if (t <= plan.w) return (peak * t) / plan.w;
  const floor = plan.lr.final_ratio * peak;
  return floor + 0.5 * (peak - floor) * (1 + Math.cos((Math.PI * (t - plan.w)) / (plan.T - plan.w)));
}
