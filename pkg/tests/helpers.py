"""Shared test fixtures: synthetic corpora and independent oracles.

The reference packer here is deliberately a from-scratch list-based
implementation (no numpy, no shared code with meco.packing) so it can serve
as the brute-force oracle the packer is checked against.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

WORDS = (
    "alpha bravo charlie delta echo foxtrot golf hotel india juliet kilo lima "
    "mike november oscar papa quebec romeo sierra tango uniform victor whiskey "
    "xray yankee zulu stone river cloud ember quartz willow harbor meadow"
).split()


def random_text(rng: np.random.Generator, n_words: int) -> str:
    idx = rng.integers(0, len(WORDS), size=n_words)
    return " ".join(WORDS[i] for i in idx)


def make_documents(
    n_docs: int,
    seed: int = 0,
    n_domains: int = 20,
    zipf_a: float | None = None,
    words_per_doc: tuple[int, int] = (5, 40),
    url_probability: float = 1.0,
):
    """Dicts in corpus record form: {id, text, url, source}."""
    rng = np.random.default_rng(seed)
    docs = []
    for i in range(n_docs):
        if zipf_a is not None:
            # bounded Zipf over domain ranks
            rank = min(int(rng.zipf(zipf_a)), n_domains) - 1
        else:
            rank = int(rng.integers(0, n_domains))
        record = {
            "id": f"doc-{i:06d}",
            "text": random_text(rng, int(rng.integers(*words_per_doc))),
        }
        if rng.random() < url_probability:
            record["url"] = f"https://src{rank}.example.org/page/{i}"
            record["source"] = f"src{rank}"
        docs.append(record)
    return docs


def write_corpus(path: Path, records: list[dict], files: int = 1) -> list[Path]:
    path.mkdir(parents=True, exist_ok=True)
    chunks = np.array_split(np.arange(len(records)), files)
    paths = []
    for fi, chunk in enumerate(chunks):
        p = path / f"part-{fi:03d}.jsonl"
        with open(p, "w", encoding="utf-8") as fh:
            for i in chunk:
                fh.write(json.dumps(records[int(i)], ensure_ascii=False) + "\n")
        paths.append(p)
    return paths


def reference_pack(docs, L: int, pad_id: int, policy: str = "truncate"):
    """Brute-force greedy packer over plain lists.

    Returns (sequences, stats) where each sequence is
    (ids, mask, segments, n_pad) and stats is a dict.
    """
    seqs = []
    cur_ids: list[int] = []
    cur_mask: list[int] = []
    cur_segs: list[tuple[int, int]] = []
    stats = {"input": 0, "discarded": 0, "padded": 0, "truncated": 0, "documents": 0}

    def emit(n_pad: int = 0):
        seqs.append(
            (cur_ids + [pad_id] * n_pad, cur_mask + [0] * n_pad, list(cur_segs), n_pad)
        )
        cur_ids.clear()
        cur_mask.clear()
        cur_segs.clear()

    for doc in docs:
        ids = [int(x) for x in doc.ids]
        mask = [int(x) for x in doc.loss_mask]
        n = len(ids)
        stats["input"] += n
        stats["documents"] += 1
        room = L - len(cur_ids)
        if n <= room:
            cur_segs.append((len(cur_ids), n))
            cur_ids.extend(ids)
            cur_mask.extend(mask)
            if len(cur_ids) == L:
                emit()
        elif policy == "truncate":
            cur_segs.append((len(cur_ids), room))
            cur_ids.extend(ids[:room])
            cur_mask.extend(mask[:room])
            stats["discarded"] += n - room
            stats["truncated"] += 1
            emit()
        else:
            if cur_ids:
                n_pad = L - len(cur_ids)
                stats["padded"] += n_pad
                emit(n_pad)
            if n > L:
                cur_segs.append((0, L))
                cur_ids.extend(ids[:L])
                cur_mask.extend(mask[:L])
                stats["discarded"] += n - L
                stats["truncated"] += 1
                emit()
            else:
                cur_segs.append((0, n))
                cur_ids.extend(ids)
                cur_mask.extend(mask)
                if len(cur_ids) == L:
                    emit()
    if cur_ids:
        n_pad = L - len(cur_ids)
        stats["padded"] += n_pad
        emit(n_pad)
    stats["sequences"] = len(seqs)
    stats["emitted"] = len(seqs) * L
    return seqs, stats


def assert_pack_equal(packed, reference):
    """Compare meco PackedSequences against reference tuples, field by field."""
    assert len(packed) == len(reference), f"{len(packed)} sequences vs oracle {len(reference)}"
    for i, (seq, (ids, mask, segs, n_pad)) in enumerate(zip(packed, reference)):
        assert seq.ids.tolist() == ids, f"sequence {i}: ids differ"
        assert seq.loss_mask.tolist() == mask, f"sequence {i}: masks differ"
        assert seq.segments == segs, f"sequence {i}: segments differ"
        assert seq.n_pad == n_pad, f"sequence {i}: n_pad differs"
