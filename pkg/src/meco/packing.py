"""Greedy boundary-respecting sequence packing.

Every emitted sequence starts with a fresh document (never mid-document).
Under the default "truncate" policy, a document that does not fit the
remaining room is cut to exactly fill the sequence and its tail is discarded;
the next sequence starts with the next document. The "pad" policy instead
closes the sequence with padding and carries the document whole. Only the
final sequence of a stream is padded under "truncate".
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from . import kernels
from .conditioning import TokenizedDocument
from .errors import ConfigError

PACK_POLICIES = ("truncate", "pad")


@dataclass
class PackedSequence:
    ids: np.ndarray  # uint32, exactly L
    loss_mask: np.ndarray  # uint8, exactly L
    segments: list[tuple[int, int]]  # (start, length) per document span
    n_pad: int

    def __len__(self) -> int:
        return len(self.ids)


@dataclass
class PackingStats:
    input_tokens: int = 0
    emitted_tokens: int = 0
    discarded_tokens: int = 0
    padded_tokens: int = 0
    sequences: int = 0
    documents: int = 0
    documents_truncated: int = 0

    def conservation_holds(self) -> bool:
        return self.input_tokens == self.emitted_tokens - self.padded_tokens + self.discarded_tokens

    def merge(self, other: "PackingStats") -> "PackingStats":
        return PackingStats(*(a + b for a, b in zip(self.astuple(), other.astuple())))

    def astuple(self) -> tuple[int, ...]:
        return (
            self.input_tokens,
            self.emitted_tokens,
            self.discarded_tokens,
            self.padded_tokens,
            self.sequences,
            self.documents,
            self.documents_truncated,
        )

    def to_json(self) -> dict:
        return {
            "input_tokens": self.input_tokens,
            "emitted_tokens": self.emitted_tokens,
            "discarded_tokens": self.discarded_tokens,
            "padded_tokens": self.padded_tokens,
            "sequences": self.sequences,
            "documents": self.documents,
            "documents_truncated": self.documents_truncated,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PackingStats":
        return cls(**obj)


class SequencePacker:
    """Stateful streaming packer; feed document chunks, then flush."""

    def __init__(self, seq_len: int, pad_id: int, policy: str = "truncate"):
        if seq_len < 2:
            raise ConfigError(f"sequence length must be >= 2, got {seq_len}")
        if policy not in PACK_POLICIES:
            raise ConfigError(f"unknown pack policy {policy!r}; choose from {PACK_POLICIES}")
        self.seq_len = seq_len
        self.pad_id = pad_id
        self.policy = policy
        self.stats = PackingStats()
        self._cur_ids = np.zeros(seq_len, np.uint32)
        self._cur_mask = np.zeros(seq_len, np.uint8)
        self._cur_seg = np.zeros((kernels.max_segments(seq_len), 2), np.int64)
        self._state = np.zeros(2, np.int64)  # [fill, n_segments]

    def feed(self, docs: list[TokenizedDocument]) -> list[PackedSequence]:
        if not docs:
            return []
        lens = np.fromiter((len(d.ids) for d in docs), dtype=np.int64, count=len(docs))
        if lens.min() < 2:
            raise ConfigError("every tokenized document must have at least 2 tokens (bos+eos)")
        ids_cat = np.concatenate([d.ids for d in docs])
        mask_cat = np.concatenate([d.loss_mask for d in docs])
        out_ids, out_mask, out_npad, seg_flat, out_nseg, discarded, truncated = kernels.pack_chunk(
            ids_cat,
            mask_cat,
            lens,
            self.seq_len,
            self.policy == "pad",
            self.pad_id,
            self._cur_ids,
            self._cur_mask,
            self._cur_seg,
            self._state,
        )
        self.stats.input_tokens += int(lens.sum())
        self.stats.documents += len(docs)
        self.stats.discarded_tokens += int(discarded)
        self.stats.documents_truncated += int(truncated)
        self.stats.sequences += len(out_ids)
        self.stats.emitted_tokens += len(out_ids) * self.seq_len
        self.stats.padded_tokens += int(out_npad.sum())
        seg_off = 0
        out = []
        for i in range(len(out_ids)):
            k = int(out_nseg[i])
            out.append(
                PackedSequence(
                    ids=out_ids[i].copy(),
                    loss_mask=out_mask[i].copy(),
                    segments=[
                        (int(seg_flat[seg_off + j, 0]), int(seg_flat[seg_off + j, 1]))
                        for j in range(k)
                    ],
                    n_pad=int(out_npad[i]),
                )
            )
            seg_off += k
        return out

    def flush(self) -> PackedSequence | None:
        """Close the stream; pads and emits the open partial sequence, if any."""
        fill = int(self._state[0])
        if fill == 0:
            return None
        nseg = int(self._state[1])
        ids = self._cur_ids.copy()
        mask = self._cur_mask.copy()
        ids[fill:] = self.pad_id
        mask[fill:] = 0
        n_pad = self.seq_len - fill
        seq = PackedSequence(
            ids=ids,
            loss_mask=mask,
            segments=[(int(self._cur_seg[j, 0]), int(self._cur_seg[j, 1])) for j in range(nseg)],
            n_pad=n_pad,
        )
        self._state[:] = 0
        self.stats.sequences += 1
        self.stats.emitted_tokens += self.seq_len
        self.stats.padded_tokens += n_pad
        return seq


def pack(
    docs: Iterable[TokenizedDocument],
    seq_len: int,
    pad_id: int,
    policy: str = "truncate",
    chunk_docs: int = 512,
) -> tuple[Iterator[PackedSequence], PackingStats]:
    """Pack a document stream into fixed-length sequences.

    Returns (lazy sequence stream, live stats). Stats are final once the
    stream is exhausted.
    """
    packer = SequencePacker(seq_len, pad_id, policy)

    def gen() -> Iterator[PackedSequence]:
        chunk: list[TokenizedDocument] = []
        for doc in docs:
            chunk.append(doc)
            if len(chunk) >= chunk_docs:
                yield from packer.feed(chunk)
                chunk = []
        if chunk:
            yield from packer.feed(chunk)
        tail = packer.flush()
        if tail is not None:
            yield tail

    return gen(), packer.stats


def segment_spans(seq: PackedSequence) -> list[tuple[int, int]]:
    """Half-open (start, end) intervals partitioning the non-pad prefix."""
    return [(start, start + length) for start, length in seq.segments]


@dataclass
class PackReport:
    ok: bool
    failures: list[str] = field(default_factory=list)


def verify_pack(
    sequences: list[PackedSequence],
    stats: PackingStats,
    docs: list[TokenizedDocument],
    bos_id: int,
) -> PackReport:
    """Independent re-check of a packing run (test scale: inputs materialized).

    Re-derives stats from the sequences, checks the start-of-document rule,
    and replays the emitted segments against the input documents in order.
    """
    failures: list[str] = []
    derived = PackingStats(documents=len(docs))
    derived.input_tokens = sum(len(d.ids) for d in docs)
    di = 0
    for si, seq in enumerate(sequences):
        L = len(seq.ids)
        derived.sequences += 1
        derived.emitted_tokens += L
        derived.padded_tokens += seq.n_pad
        if len(seq.loss_mask) != L:
            failures.append(f"seq {si}: mask length {len(seq.loss_mask)} != {L}")
        if seq.ids[0] != bos_id:
            failures.append(f"seq {si}: first token {int(seq.ids[0])} is not bos {bos_id}")
        pos = 0
        for gi, (start, length) in enumerate(seq.segments):
            if start != pos or length <= 0:
                failures.append(f"seq {si}: segment {gi} ({start},{length}) not contiguous at {pos}")
                break
            pos = start + length
        if pos != L - seq.n_pad:
            failures.append(f"seq {si}: segments cover {pos}, expected {L - seq.n_pad}")
        if seq.n_pad and seq.loss_mask[L - seq.n_pad:].any():
            failures.append(f"seq {si}: padded positions carry loss mask")
        for gi, (start, length) in enumerate(seq.segments):
            if di >= len(docs):
                failures.append(f"seq {si}: segment {gi} has no corresponding input document")
                break
            doc = docs[di]
            expect = doc.ids[:length]
            if length > len(doc.ids) or not np.array_equal(seq.ids[start:start + length], expect):
                failures.append(f"seq {si}: segment {gi} does not match document {doc.doc_id}")
                di += 1
                continue
            if length < len(doc.ids):
                derived.discarded_tokens += len(doc.ids) - length
                derived.documents_truncated += 1
                if gi != len(seq.segments) - 1:
                    failures.append(
                        f"seq {si}: document {doc.doc_id} truncated mid-sequence (segment {gi})"
                    )
            di += 1
    if di != len(docs):
        failures.append(f"only {di} of {len(docs)} documents appear in the output")
    if not stats.conservation_holds():
        failures.append(
            "stats conservation violated: input != emitted - padded + discarded "
            f"({stats.input_tokens} != {stats.emitted_tokens} - {stats.padded_tokens} "
            f"+ {stats.discarded_tokens})"
        )
    if derived.astuple() != stats.astuple():
        failures.append(f"stats mismatch: derived {derived.astuple()} vs reported {stats.astuple()}")
    return PackReport(ok=not failures, failures=failures)
