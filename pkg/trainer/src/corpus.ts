// Synthetic multi-source corpus generator.
//
// Each source has its own unigram distribution over the 26 lowercase
// letters, built from a shifted window of favored letters so that any two
// sources are far apart in total variation (checked, not assumed). Documents
// are words of letters sampled iid from the source distribution, so the
// per-source letter distribution of the text equals the spec exactly in
// expectation.

import { mkdirSync, writeFileSync } from "node:fs";
import { join } from "node:path";
import { mulberry32, weightedChoice, type Rng } from "./rng.js";

export const LETTERS = "abcdefghijklmnopqrstuvwxyz";

export interface SourceSpec {
  name: string; // e.g. "src3"
  url: string; // e.g. "src3.example.org"
  letterProbs: Float64Array; // length 26, sums to 1
}

export interface CorpusOptions {
  nSources: number;
  docsPerSource: number;
  wordsPerDoc: [number, number];
  wordLength: [number, number];
  favoredWindow?: number; // favored letters per source
  favoredMass?: number; // total probability on favored letters
  minPairwiseTv?: number;
}

export function totalVariation(p: ArrayLike<number>, q: ArrayLike<number>): number {
  let tv = 0;
  for (let i = 0; i < p.length; i++) tv += Math.abs(p[i] - q[i]);
  return tv / 2;
}

export function makeSources(opts: CorpusOptions): SourceSpec[] {
  const window = opts.favoredWindow ?? 6;
  const mass = opts.favoredMass ?? 0.9;
  const minTv = opts.minPairwiseTv ?? 0.2;
  const shift = Math.floor(LETTERS.length / opts.nSources) || 1;
  const sources: SourceSpec[] = [];
  for (let i = 0; i < opts.nSources; i++) {
    const probs = new Float64Array(26).fill((1 - mass) / (26 - window));
    for (let k = 0; k < window; k++) {
      probs[(i * shift + k) % 26] = mass / window;
    }
    sources.push({ name: `src${i}`, url: `src${i}.example.org`, letterProbs: probs });
  }
  for (let i = 0; i < sources.length; i++) {
    for (let j = i + 1; j < sources.length; j++) {
      const tv = totalVariation(sources[i].letterProbs, sources[j].letterProbs);
      if (tv < minTv) {
        throw new Error(
          `sources ${i} and ${j} are too similar (TV=${tv.toFixed(3)} < ${minTv}); ` +
            "use fewer sources or a narrower favored window"
        );
      }
    }
  }
  return sources;
}

export function mixtureDistribution(sources: SourceSpec[]): Float64Array {
  const mix = new Float64Array(26);
  for (const src of sources) {
    for (let i = 0; i < 26; i++) mix[i] += src.letterProbs[i] / sources.length;
  }
  return mix;
}

function sampleWord(rng: Rng, probs: Float64Array, lengthRange: [number, number]): string {
  const n = lengthRange[0] + Math.floor(rng() * (lengthRange[1] - lengthRange[0] + 1));
  let word = "";
  for (let i = 0; i < n; i++) word += LETTERS[weightedChoice(rng, probs)];
  return word;
}

export interface GeneratedCorpus {
  sources: SourceSpec[];
  trainDir: string;
  heldOutDirs: Record<string, string>; // source name -> dir with standard docs
}

/** Write train JSONL (all sources shuffled round-robin) plus per-source held-out sets. */
export function generateCorpus(outDir: string, opts: CorpusOptions, seed: number, heldOutPerSource = 0): GeneratedCorpus {
  const sources = makeSources(opts);
  const rng = mulberry32(seed);
  mkdirSync(outDir, { recursive: true });

  const lines: string[] = [];
  for (let d = 0; d < opts.docsPerSource; d++) {
    for (const [si, src] of sources.entries()) {
      const nWords =
        opts.wordsPerDoc[0] + Math.floor(rng() * (opts.wordsPerDoc[1] - opts.wordsPerDoc[0] + 1));
      const words: string[] = [];
      for (let w = 0; w < nWords; w++) words.push(sampleWord(rng, src.letterProbs, opts.wordLength));
      lines.push(
        JSON.stringify({
          id: `${src.name}-doc-${d.toString().padStart(5, "0")}`,
          text: words.join(" "),
          url: `https://${src.url}/page/${d}`,
          source: src.name,
        })
      );
    }
  }
  const trainDir = join(outDir, "train");
  mkdirSync(trainDir, { recursive: true });
  writeFileSync(join(trainDir, "part-000.jsonl"), lines.join("\n") + "\n");

  const heldOutDirs: Record<string, string> = {};
  if (heldOutPerSource > 0) {
    for (const src of sources) {
      const dir = join(outDir, `heldout-${src.name}`);
      mkdirSync(dir, { recursive: true });
      const held: string[] = [];
      for (let d = 0; d < heldOutPerSource; d++) {
        const nWords =
          opts.wordsPerDoc[0] + Math.floor(rng() * (opts.wordsPerDoc[1] - opts.wordsPerDoc[0] + 1));
        const words: string[] = [];
        for (let w = 0; w < nWords; w++) words.push(sampleWord(rng, src.letterProbs, opts.wordLength));
        held.push(
          JSON.stringify({
            id: `${src.name}-held-${d.toString().padStart(5, "0")}`,
            text: words.join(" "),
            url: `https://${src.url}/held/${d}`,
            source: src.name,
          })
        );
      }
      writeFileSync(join(dir, "part-000.jsonl"), held.join("\n") + "\n");
      heldOutDirs[src.name] = dir;
    }
  }
  return { sources, trainDir, heldOutDirs };
}
