// Bridge to the data pipeline: everything crosses process boundaries via
// the published interfaces (CLI, JSONL corpora, plan.json, .meco shards).

import { spawnSync } from "node:child_process";
import { join } from "node:path";
import { loadPlan, type Plan } from "./plan.js";
import { readShardDir, type PackedSequence, type ShardHeader } from "./shards.js";

const PYTHON = process.env.MECO_PYTHON ?? "python3";

export function mecoCli(args: string[]): string {
  const proc = spawnSync(PYTHON, ["-m", "meco", ...args], { encoding: "utf8" });
  if (proc.error) throw proc.error;
  if (proc.status !== 0) {
    throw new Error(`meco ${args[0]} exited ${proc.status}:\n${proc.stderr || proc.stdout}`);
  }
  return proc.stdout;
}

export interface BuildSpec {
  corpusDir: string;
  outDir: string;
  seqLen: number;
  batchTokens: number;
  strategy?: "standard" | "all-conditioned" | "interleaved" | "two-stage";
  metadata?: string;
  cooldownFrac?: number;
  seed?: number;
  peakLr?: number;
}

export interface BuiltDataset {
  plan: Plan;
  header: ShardHeader;
  stages: Record<string, PackedSequence[]>; // role name (conditioning/cooldown) -> sequences
}

export function buildDataset(spec: BuildSpec): BuiltDataset {
  const args = [
    "build", spec.corpusDir, spec.outDir,
    "--metadata", spec.metadata ?? "domain",
    "--strategy", spec.strategy ?? "two-stage",
    "--seq-len", String(spec.seqLen),
    "--batch-tokens", String(spec.batchTokens),
    "--seed", String(spec.seed ?? 0),
    "--seqs-per-shard", "256",
  ];
  if (spec.cooldownFrac !== undefined) args.push("--cooldown-frac", String(spec.cooldownFrac));
  if (spec.peakLr !== undefined) args.push("--peak-lr", String(spec.peakLr));
  args.push("--lr-table"); // embed the planner's per-step lr for pointwise comparison
  mecoCli(args);

  const plan = loadPlan(join(spec.outDir, "plan.json"));
  const stages: Record<string, PackedSequence[]> = {};
  let header: ShardHeader | null = null;
  for (const [role, dir] of Object.entries(plan.splits)) {
    const loaded = readShardDir(join(spec.outDir, dir));
    stages[role] = loaded.seqs;
    header = header ?? loaded.header;
  }
  if (!header) throw new Error("build produced no shard stages");
  return { plan, header, stages };
}
