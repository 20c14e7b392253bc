// Byte-level token contract of the pipeline's built-in tokenizer:
// ids 0..2 are bos/eos/pad, each UTF-8 byte maps to byte+3 (vocab 259).
// The impl id below is the published fingerprint the shard headers carry;
// consuming other tokenizers would need the vocab file, which this toy
// trainer does not support.

export const BOS = 0;
export const EOS = 1;
export const PAD = 2;
export const BYTE_OFFSET = 3;
export const VOCAB_SIZE = 259;

export const BYTE_TOKENIZER_ID =
  "ccd652541f0a60622fe919d38b5387fd456264adc8ed11e573444d1a2dd4e136";

export function encodeText(text: string): number[] {
  return Array.from(Buffer.from(text, "utf8"), (b) => b + BYTE_OFFSET);
}

export function decodeTokens(ids: ArrayLike<number>): string {
  const bytes: number[] = [];
  for (let i = 0; i < ids.length; i++) {
    const id = ids[i];
    if (id >= BYTE_OFFSET) bytes.push(id - BYTE_OFFSET);
  }
  return Buffer.from(bytes).toString("utf8");
}

/** Conditional-inference prompt ids: bos + "URL: <url>\n\n" (+ extra text). */
export function conditionalPromptIds(url: string, text = ""): number[] {
  return [BOS, ...encodeText(`URL: ${url}\n\n${text}`)];
}
