// Reader for the .meco binary shard format.
//
// All integers little-endian. Per file:
//   header: "MECO" | version u16 | seq_len u32 | tokenizer id (32 raw bytes)
//           | count u32 | rendering u8 | bos u32 | eos u32 | pad u32
//   per sequence: seq_len x u32 ids | ceil(seq_len/8) mask bytes (LSB-first)
//                 | u16 segment count | (u32 start, u32 length) x count
//                 | u16 n_pad

import { readFileSync } from "node:fs";
import { join } from "node:path";

export interface ShardHeader {
  version: number;
  seqLen: number;
  tokenizerId: string; // 64 hex chars
  count: number;
  rendering: "standard" | "conditioned" | "interleaved";
  bosId: number;
  eosId: number;
  padId: number;
}

export interface PackedSequence {
  ids: Uint32Array;
  lossMask: Uint8Array;
  segments: Array<[number, number]>; // (start, length)
  nPad: number;
}

export interface ShardManifest {
  version: number;
  seq_len: number;
  tokenizer_id: string;
  rendering: string;
  files: Array<{ path: string; count: number; sha256: string }>;
  total_sequences: number;
  stats: Record<string, number> | null;
  plan: string | null;
}

const MAGIC = 0x4f43454d; // "MECO" read as LE u32
const HEADER_SIZE = 4 + 2 + 4 + 32 + 4 + 1 + 12;
const RENDERINGS = ["standard", "conditioned", "interleaved"] as const;

export function parseShard(buf: Buffer, name = "<shard>"): { header: ShardHeader; seqs: PackedSequence[] } {
  if (buf.length < HEADER_SIZE) throw new Error(`${name}: truncated header`);
  const view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  if (view.getUint32(0, true) !== MAGIC) throw new Error(`${name}: bad magic`);
  const version = view.getUint16(4, true);
  if (version !== 1) throw new Error(`${name}: unsupported version ${version}`);
  const seqLen = view.getUint32(6, true);
  const tokenizerId = buf.subarray(10, 42).toString("hex");
  const count = view.getUint32(42, true);
  const renderingTag = view.getUint8(46);
  const rendering = RENDERINGS[renderingTag];
  if (!rendering) throw new Error(`${name}: unknown rendering tag ${renderingTag}`);
  const header: ShardHeader = {
    version,
    seqLen,
    tokenizerId,
    count,
    rendering,
    bosId: view.getUint32(47, true),
    eosId: view.getUint32(51, true),
    padId: view.getUint32(55, true),
  };

  const maskBytes = Math.ceil(seqLen / 8);
  let off = HEADER_SIZE;
  const seqs: PackedSequence[] = [];
  for (let i = 0; i < count; i++) {
    if (off + seqLen * 4 + maskBytes + 2 > buf.length) {
      throw new Error(`${name}: truncated at byte offset ${off} (sequence ${i})`);
    }
    const ids = new Uint32Array(seqLen);
    for (let j = 0; j < seqLen; j++) ids[j] = view.getUint32(off + j * 4, true);
    off += seqLen * 4;
    const lossMask = new Uint8Array(seqLen);
    for (let j = 0; j < seqLen; j++) {
      lossMask[j] = (buf[off + (j >> 3)] >> (j & 7)) & 1;
    }
    off += maskBytes;
    const nSeg = view.getUint16(off, true);
    off += 2;
    if (off + nSeg * 8 + 2 > buf.length) {
      throw new Error(`${name}: truncated at byte offset ${off} (sequence ${i} segments)`);
    }
    const segments: Array<[number, number]> = [];
    for (let s = 0; s < nSeg; s++) {
      segments.push([view.getUint32(off, true), view.getUint32(off + 4, true)]);
      off += 8;
    }
    const nPad = view.getUint16(off, true);
    off += 2;
    seqs.push({ ids, lossMask, segments, nPad });
  }
  if (off !== buf.length) throw new Error(`${name}: ${buf.length - off} trailing bytes`);
  return { header, seqs };
}

export function loadManifest(dir: string): ShardManifest {
  return JSON.parse(readFileSync(join(dir, "manifest.json"), "utf8")) as ShardManifest;
}

/** Read every sequence of a shard directory in manifest order. */
export function readShardDir(dir: string): { header: ShardHeader; seqs: PackedSequence[] } {
  const manifest = loadManifest(dir);
  let header: ShardHeader | null = null;
  const seqs: PackedSequence[] = [];
  for (const entry of manifest.files) {
    const parsed = parseShard(readFileSync(join(dir, entry.path)), entry.path);
    if (header === null) {
      header = parsed.header;
    } else if (parsed.header.seqLen !== header.seqLen) {
      throw new Error(`${entry.path}: sequence length differs within one shard set`);
    } else if (parsed.header.tokenizerId !== header.tokenizerId) {
      throw new Error(`${entry.path}: tokenizer id differs within one shard set`);
    }
    seqs.push(...parsed.seqs);
  }
  if (header === null) throw new Error(`${dir}: manifest lists no shard files`);
  return { header, seqs };
}
