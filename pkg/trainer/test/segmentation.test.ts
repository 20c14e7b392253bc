// Attention segmentation over real packed sequences from the pipeline:
// allowed-pair counts match the closed form, and the attention probability
// mass outside a query's own segment is exactly zero.

import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { beforeAll, describe, expect, it } from "vitest";
import { generateCorpus } from "../src/corpus.js";
import { allowedPairCount, forward, segmentStarts, TinyGpt } from "../src/model.js";
import { buildDataset } from "../src/pipeline.js";
import { mulberry32 } from "../src/rng.js";
import type { PackedSequence } from "../src/shards.js";

const T = 64;
let seqs: PackedSequence[] = [];

beforeAll(() => {
  const work = mkdtempSync(join(tmpdir(), "meco-seg-"));
  const corpus = generateCorpus(
    join(work, "corpus"),
    { nSources: 4, docsPerSource: 120, wordsPerDoc: [3, 10], wordLength: [2, 6] },
    5,
    0
  );
  const data = buildDataset({
    corpusDir: corpus.trainDir,
    outDir: join(work, "out"),
    seqLen: T,
    batchTokens: T * 4,
    strategy: "all-conditioned",
    seed: 5,
  });
  seqs = data.stages.conditioning;
});

describe("criterion 11: attention segmentation", () => {
  it("allowed-pair counts match sum of s_k(s_k+1)/2 on 100 packed sequences", () => {
    expect(seqs.length).toBeGreaterThanOrEqual(100);
    let multiSegment = 0;
    for (const seq of seqs.slice(0, 100)) {
      const starts = segmentStarts(seq.segments, T);
      let brute = 0;
      for (let i = 0; i < T; i++) {
        if (starts[i] < 0) continue;
        brute += i - starts[i] + 1;
      }
      expect(brute).toBe(allowedPairCount(seq.segments));
      if (seq.segments.length > 1) multiSegment++;
    }
    expect(multiSegment).toBeGreaterThan(50); // the check must exercise real boundaries
  });

  it("cross-segment attention probabilities are exactly zero", () => {
    const model = new TinyGpt(
      { vocabSize: 259, dim: 16, heads: 2, layers: 2, contextLength: T },
      mulberry32(9)
    );
    const batch = seqs.filter((s) => s.segments.length > 1).slice(0, 8);
    expect(batch.length).toBe(8);
    const cache = forward(
      model,
      batch.map((s) => s.ids),
      batch.map((s) => segmentStarts(s.segments, T))
    );
    const H = model.cfg.heads;
    for (let b = 0; b < batch.length; b++) {
      const starts = segmentStarts(batch[b].segments, T);
      for (let l = 0; l < model.cfg.layers; l++) {
        const probs = cache.perLayer[l].probs;
        for (let h = 0; h < H; h++) {
          for (let i = 0; i < T; i++) {
            const po = ((b * H + h) * T + i) * T;
            let inside = 0;
            for (let j = 0; j < T; j++) {
              const allowed = starts[i] >= 0 && j >= starts[i] && j <= i;
              if (!allowed) {
                expect(probs[po + j]).toBe(0);
              } else {
                inside += probs[po + j];
              }
            }
            if (starts[i] >= 0) expect(inside).toBeCloseTo(1, 12);
          }
        }
      }
    }
  });
});
