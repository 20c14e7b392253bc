// Conditional-inference steering measured distributionally: generate with a
// source URL prepended, compare the generated letter distribution against
// each source's ground-truth distribution (and the global mixture) by total
// variation.

import { LETTERS, mixtureDistribution, totalVariation, type SourceSpec } from "./corpus.js";
import { TinyGpt } from "./model.js";
import { mulberry32 } from "./rng.js";
import { generate, type SamplingConfig } from "./sample.js";
import { BYTE_OFFSET, EOS, conditionalPromptIds, decodeTokens } from "./tokens.js";

export interface SteeringReport {
  tv: number[][]; // tv[u][s]: conditioned on source u's URL vs source s truth
  tvMixture: number[]; // tv[u]: generated-u vs the global mixture
  diagonalWins: number; // #sources with tv[u][u] < tvMixture[u]
  diagonalDominant: number; // #sources where the own source is the argmin
  sampleLengths: { min: number; max: number };
  samplesPerSource: number;
  warnings: string[];
}

export function letterDistribution(texts: string[]): Float64Array {
  const counts = new Float64Array(26);
  let total = 0;
  for (const text of texts) {
    for (const ch of text) {
      const idx = LETTERS.indexOf(ch);
      if (idx >= 0) {
        counts[idx] += 1;
        total += 1;
      }
    }
  }
  if (total > 0) for (let i = 0; i < 26; i++) counts[i] /= total;
  return counts;
}

export function steeringReport(
  model: TinyGpt,
  sources: SourceSpec[],
  sampling: SamplingConfig,
  samplesPerSource: number,
  seed: number
): SteeringReport {
  const warnings: string[] = [];
  if (samplesPerSource < 100) {
    warnings.push(`only ${samplesPerSource} samples per source; distributions will be noisy`);
  }
  const mixture = mixtureDistribution(sources);
  const tv: number[][] = [];
  const tvMixture: number[] = [];
  let minLen = Infinity;
  let maxLen = 0;

  for (const [u, src] of sources.entries()) {
    const rng = mulberry32(seed * 1013 + u);
    const prompt = conditionalPromptIds(src.url);
    const texts: string[] = [];
    for (let s = 0; s < samplesPerSource; s++) {
      const ids = generate(model, prompt, sampling, rng, EOS);
      minLen = Math.min(minLen, ids.length);
      maxLen = Math.max(maxLen, ids.length);
      texts.push(decodeTokens(ids.filter((t) => t >= BYTE_OFFSET)));
    }
    const dist = letterDistribution(texts);
    tv.push(sources.map((other) => totalVariation(dist, other.letterProbs)));
    tvMixture.push(totalVariation(dist, mixture));
  }

  let diagonalWins = 0;
  let diagonalDominant = 0;
  for (let u = 0; u < sources.length; u++) {
    if (tv[u][u] < tvMixture[u]) diagonalWins++;
    if (tv[u].every((value, s) => s === u || tv[u][u] < value)) diagonalDominant++;
  }
  return {
    tv,
    tvMixture,
    diagonalWins,
    diagonalDominant,
    sampleLengths: { min: minLen, max: maxLen },
    samplesPerSource,
    warnings,
  };
}
