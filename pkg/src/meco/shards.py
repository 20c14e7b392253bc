"""Binary shard format for packed training sequences.

All integers little-endian. File layout:

    header:  magic "MECO" | version u16 | seq_len u32 | tokenizer id (32 bytes,
             raw SHA-256) | sequence count u32 | rendering u8 | bos u32 |
             eos u32 | pad u32
    per sequence:
             seq_len x u32 token ids
             ceil(seq_len/8) bytes loss mask, bit-packed LSB-first
             u16 segment count
             per segment: u32 start, u32 length
             u16 n_pad

Rendering tags: 0=standard, 1=conditioned, 2=interleaved. The manifest
(manifest.json) is written last and carries per-file SHA-256 checksums.
"""

from __future__ import annotations

import hashlib
import json
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from . import kernels
from .errors import ConfigError, DataError
from .packing import PackedSequence, PackingStats
from .tokenizer import TokenizerSpec

MAGIC = b"MECO"
VERSION = 1
_HEADER = struct.Struct("<4sHI32sIBIII")

RENDERING_TAGS = {"standard": 0, "conditioned": 1, "interleaved": 2}
RENDERING_NAMES = {v: k for k, v in RENDERING_TAGS.items()}

SHARD_PATTERN = "shard-{:05d}.meco"


@dataclass(frozen=True)
class ShardHeader:
    version: int
    seq_len: int
    tokenizer_id: str  # 64 hex chars
    count: int
    rendering: str
    bos_id: int
    eos_id: int
    pad_id: int

    def encode(self) -> bytes:
        return _HEADER.pack(
            MAGIC,
            self.version,
            self.seq_len,
            bytes.fromhex(self.tokenizer_id),
            self.count,
            RENDERING_TAGS[self.rendering],
            self.bos_id,
            self.eos_id,
            self.pad_id,
        )

    @classmethod
    def decode(cls, raw: bytes, path: str = "<bytes>") -> "ShardHeader":
        if len(raw) < _HEADER.size:
            raise DataError(f"{path}: truncated header ({len(raw)} bytes)")
        magic, version, seq_len, tok_id, count, tag, bos, eos, pad = _HEADER.unpack_from(raw)
        if magic != MAGIC:
            raise DataError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise DataError(f"{path}: unsupported shard version {version}")
        if seq_len <= 0:
            raise DataError(f"{path}: invalid sequence length {seq_len}")
        if tag not in RENDERING_NAMES:
            raise DataError(f"{path}: unknown rendering tag {tag}")
        return cls(version, seq_len, tok_id.hex(), count, RENDERING_NAMES[tag], bos, eos, pad)


HEADER_SIZE = _HEADER.size


@dataclass
class ShardManifest:
    version: int
    seq_len: int
    tokenizer_id: str
    rendering: str
    files: list[dict]  # {"path", "count", "sha256"}
    total_sequences: int
    stats: dict | None = None
    plan: str | None = None

    def to_json(self) -> dict:
        return {
            "version": self.version,
            "seq_len": self.seq_len,
            "tokenizer_id": self.tokenizer_id,
            "rendering": self.rendering,
            "files": self.files,
            "total_sequences": self.total_sequences,
            "stats": self.stats,
            "plan": self.plan,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ShardManifest":
        return cls(
            version=obj["version"],
            seq_len=obj["seq_len"],
            tokenizer_id=obj["tokenizer_id"],
            rendering=obj["rendering"],
            files=obj["files"],
            total_sequences=obj["total_sequences"],
            stats=obj.get("stats"),
            plan=obj.get("plan"),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )

    @classmethod
    def load(cls, path: str | Path) -> "ShardManifest":
        try:
            return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError, KeyError) as e:
            raise DataError(f"cannot load shard manifest from {path}: {e}") from e


def _encode_batch(seqs: list[PackedSequence], seq_len: int) -> bytes:
    ids = np.stack([s.ids for s in seqs]).astype("<u4")
    masks = kernels.bitpack_rows(np.stack([s.loss_mask for s in seqs]))
    parts = []
    for i, seq in enumerate(seqs):
        if len(seq.ids) != seq_len:
            raise DataError(f"sequence length {len(seq.ids)} != shard seq_len {seq_len}")
        parts.append(ids[i].tobytes())
        parts.append(masks[i].tobytes())
        parts.append(struct.pack("<H", len(seq.segments)))
        for start, length in seq.segments:
            parts.append(struct.pack("<II", start, length))
        parts.append(struct.pack("<H", seq.n_pad))
    return b"".join(parts)


class ShardWriter:
    """Incremental shard writer; call add/add_many, then close (manifest last)."""

    def __init__(
        self,
        out_dir: str | Path,
        seqs_per_shard: int,
        tokenizer: TokenizerSpec,
        rendering: str,
        seq_len: int,
    ):
        if seqs_per_shard < 1:
            raise ConfigError(f"seqs_per_shard must be >= 1, got {seqs_per_shard}")
        if rendering not in RENDERING_TAGS:
            raise ConfigError(f"unknown rendering tag {rendering!r}")
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.seqs_per_shard = seqs_per_shard
        self.tokenizer = tokenizer
        self.rendering = rendering
        self.seq_len = seq_len
        self.files: list[dict] = []
        self.total = 0
        self._batch: list[PackedSequence] = []
        self._shard_idx = 0

    def add(self, seq: PackedSequence) -> None:
        self._batch.append(seq)
        if len(self._batch) >= self.seqs_per_shard:
            self._emit()

    def add_many(self, seqs: Iterable[PackedSequence]) -> None:
        for seq in seqs:
            self.add(seq)

    def _emit(self) -> None:
        name = SHARD_PATTERN.format(self._shard_idx)
        header = ShardHeader(
            version=VERSION,
            seq_len=self.seq_len,
            tokenizer_id=self.tokenizer.impl_id,
            count=len(self._batch),
            rendering=self.rendering,
            bos_id=self.tokenizer.bos_id,
            eos_id=self.tokenizer.eos_id,
            pad_id=self.tokenizer.pad_id,
        )
        payload = header.encode() + _encode_batch(self._batch, self.seq_len)
        tmp_path = self.out / (name + ".tmp")
        try:
            tmp_path.write_bytes(payload)
            (self.out / name).unlink(missing_ok=True)
            tmp_path.rename(self.out / name)
        except BaseException:
            tmp_path.unlink(missing_ok=True)
            raise
        self.files.append(
            {"path": name, "count": len(self._batch), "sha256": hashlib.sha256(payload).hexdigest()}
        )
        self.total += len(self._batch)
        self._shard_idx += 1
        self._batch = []

    def close(self, stats: PackingStats | None = None, plan_ref: str | None = None) -> ShardManifest:
        if self._batch:
            self._emit()
        manifest = ShardManifest(
            version=VERSION,
            seq_len=self.seq_len,
            tokenizer_id=self.tokenizer.impl_id,
            rendering=self.rendering,
            files=self.files,
            total_sequences=self.total,
            stats=stats.to_json() if stats is not None else None,
            plan=plan_ref,
        )
        manifest.save(self.out / "manifest.json")
        return manifest


def write_shards(
    sequences: Iterable[PackedSequence],
    out_dir: str | Path,
    seqs_per_shard: int,
    tokenizer: TokenizerSpec,
    rendering: str,
    seq_len: int,
    stats: PackingStats | None = None,
    plan_ref: str | None = None,
) -> ShardManifest:
    """Write sequences as .meco shard files plus manifest.json (written last)."""
    writer = ShardWriter(out_dir, seqs_per_shard, tokenizer, rendering, seq_len)
    writer.add_many(sequences)
    return writer.close(stats=stats, plan_ref=plan_ref)


def _parse_shard(data: bytes, path: str) -> tuple[ShardHeader, list[PackedSequence]]:
    header = ShardHeader.decode(data, path)
    L = header.seq_len
    mask_bytes = (L + 7) // 8
    off = HEADER_SIZE
    seqs: list[PackedSequence] = []
    for i in range(header.count):
        need = L * 4 + mask_bytes + 2
        if off + need > len(data):
            raise DataError(f"{path}: truncated at byte offset {off} (sequence {i})")
        ids = np.frombuffer(data, dtype="<u4", count=L, offset=off).astype(np.uint32)
        off += L * 4
        packed = np.frombuffer(data, dtype=np.uint8, count=mask_bytes, offset=off)
        mask = kernels.bitunpack_rows(packed.reshape(1, -1), L)[0]
        off += mask_bytes
        (n_seg,) = struct.unpack_from("<H", data, off)
        off += 2
        if off + 8 * n_seg + 2 > len(data):
            raise DataError(f"{path}: truncated at byte offset {off} (sequence {i} segments)")
        segments = []
        for _ in range(n_seg):
            start, length = struct.unpack_from("<II", data, off)
            segments.append((start, length))
            off += 8
        (n_pad,) = struct.unpack_from("<H", data, off)
        off += 2
        seqs.append(PackedSequence(ids=ids, loss_mask=mask, segments=segments, n_pad=n_pad))
    if off != len(data):
        raise DataError(f"{path}: {len(data) - off} trailing bytes after sequence data")
    return header, seqs


def shard_files(source: str | Path | Iterable[str | Path]) -> list[Path]:
    """A directory is resolved through its manifest (manifest order)."""
    if isinstance(source, (str, Path)):
        p = Path(source)
        if p.is_dir():
            manifest = ShardManifest.load(p / "manifest.json")
            return [p / entry["path"] for entry in manifest.files]
        return [p]
    return [Path(x) for x in source]


def read_shards(
    source: str | Path | Iterable[str | Path],
    expected_tokenizer: TokenizerSpec | None = None,
) -> Iterator[PackedSequence]:
    """Stream sequences from shard files; headers must agree on seq_len."""
    expect_len: int | None = None
    for path in shard_files(source):
        try:
            data = path.read_bytes()
        except OSError as e:
            raise DataError(f"cannot read shard {path}: {e}") from e
        header, seqs = _parse_shard(data, str(path))
        if expect_len is None:
            expect_len = header.seq_len
        elif header.seq_len != expect_len:
            raise DataError(
                f"{path}: sequence length {header.seq_len} differs from earlier shards ({expect_len})"
            )
        if expected_tokenizer is not None and header.tokenizer_id != expected_tokenizer.impl_id:
            warnings.warn(
                f"{path}: shard tokenizer {header.tokenizer_id[:12]}... does not match the "
                f"active tokenizer {expected_tokenizer.impl_id[:12]}...",
                stacklevel=2,
            )
        yield from seqs


def read_header(path: str | Path) -> ShardHeader:
    with open(path, "rb") as fh:
        return ShardHeader.decode(fh.read(HEADER_SIZE), str(path))


@dataclass
class ShardReport:
    ok: bool
    failures: list[str]
    sequences: int


def verify_shards(dir_path: str | Path) -> ShardReport:
    """Re-hash files, re-count sequences, re-check per-sequence invariants."""
    out = Path(dir_path)
    failures: list[str] = []
    try:
        manifest = ShardManifest.load(out / "manifest.json")
    except DataError as e:
        return ShardReport(ok=False, failures=[str(e)], sequences=0)
    total = 0
    for entry in manifest.files:
        path = out / entry["path"]
        if not path.is_file():
            failures.append(f"missing shard {entry['path']}")
            continue
        data = path.read_bytes()
        if hashlib.sha256(data).hexdigest() != entry["sha256"]:
            failures.append(f"checksum mismatch for {entry['path']}")
            continue
        try:
            header, seqs = _parse_shard(data, entry["path"])
        except DataError as e:
            failures.append(str(e))
            continue
        if header.count != entry["count"]:
            failures.append(f"{entry['path']}: header count {header.count} != manifest {entry['count']}")
        if header.seq_len != manifest.seq_len:
            failures.append(f"{entry['path']}: seq_len {header.seq_len} != manifest {manifest.seq_len}")
        if header.tokenizer_id != manifest.tokenizer_id:
            failures.append(f"{entry['path']}: tokenizer id differs from manifest")
        for i, seq in enumerate(seqs):
            ref = f"{entry['path']}[{i}]"
            if seq.ids[0] != header.bos_id:
                failures.append(f"{ref}: first token {int(seq.ids[0])} is not bos {header.bos_id}")
            pos = 0
            for start, length in seq.segments:
                if start != pos or length <= 0:
                    failures.append(f"{ref}: segments not contiguous from 0")
                    break
                pos = start + length
            else:
                if pos != header.seq_len - seq.n_pad:
                    failures.append(
                        f"{ref}: segments cover {pos}, expected {header.seq_len - seq.n_pad}"
                    )
            if seq.n_pad:
                tail = slice(header.seq_len - seq.n_pad, None)
                if seq.loss_mask[tail].any():
                    failures.append(f"{ref}: padded positions carry loss mask")
                if (seq.ids[tail] != header.pad_id).any():
                    failures.append(f"{ref}: padded positions are not pad tokens")
        total += len(seqs)
    if total != manifest.total_sequences:
        failures.append(f"total sequences {total} != manifest {manifest.total_sequences}")
    return ShardReport(ok=not failures, failures=failures, sequences=total)
