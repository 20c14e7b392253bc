"""Hot numeric kernels: greedy sequence packing and loss-mask bit packing.

The packing kernel has two semantically identical implementations: a numba
@njit build and a pure-numpy fallback (the same per-document loop with numpy
slice copies). Selection is automatic (numba when importable) and can be
forced off with MECO_NUMBA=0; both paths are tested against each other and
benchmarks/bench_kernels.py measures the gap.

Bit packing always uses np.packbits/np.unpackbits: the SIMD C routine beats
a scalar jitted loop by two orders of magnitude, so the numba variant exists
only for the benchmark comparison (use_numba=True).

Packing state is carried across chunk calls so a stream can be packed in
pieces: `cur_*` buffers hold the open (not yet emitted) sequence and `state`
is [fill, n_segments]. Emitted segments come back in one flat (start, length)
array; out_nseg holds per-sequence counts, cumulative offsets recover rows.
"""

from __future__ import annotations

import os

import numpy as np


def _numba_requested() -> bool:
    flag = os.environ.get("MECO_NUMBA", "").strip().lower()
    return flag not in ("0", "false", "off", "no")


NUMBA_ENABLED = False
if _numba_requested():
    try:
        from numba import njit

        NUMBA_ENABLED = True
    except ImportError:
        pass

if not NUMBA_ENABLED:

    def njit(*args, **kwargs):  # no-op decorator; paths are dispatched explicitly
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


def max_segments(seq_len: int) -> int:
    # shortest document is 2 tokens (bos+eos); one extra for a truncated head
    return seq_len // 2 + 1


# ---------------------------------------------------------------------------
# greedy packing
# ---------------------------------------------------------------------------
# Two implementations with identical semantics (tests enforce equality).
# The numba build uses explicit element loops, which LLVM vectorizes well;
# the numpy fallback uses slice assignment, which is a C memcpy. Each is the
# fastest formulation for its runtime.


def _pack_chunk_numba_impl(ids_cat, mask_cat, lens, L, pad_mode, pad_id,
                           cur_ids, cur_mask, cur_seg, state):
    n_docs = lens.shape[0]
    total = ids_cat.shape[0]
    max_segs = cur_seg.shape[0]
    cap = (state[0] + total) // L + 1
    if pad_mode:
        cap += n_docs
    out_ids = np.empty((cap, L), np.uint32)
    out_mask = np.empty((cap, L), np.uint8)
    out_npad = np.empty(cap, np.int64)
    out_nseg = np.empty(cap, np.int64)
    seg_flat = np.empty((n_docs + max_segs, 2), np.int64)

    s = 0
    seg_pos = 0
    fill = int(state[0])
    nseg = int(state[1])
    discarded = 0
    truncated = 0
    off = 0
    for d in range(n_docs):
        n = lens[d]
        room = L - fill
        if n <= room or pad_mode:
            if n <= room:
                take = n
            else:
                # pad mode, doc does not fit: close the open sequence first
                if fill > 0:
                    for i in range(fill, L):
                        cur_ids[i] = pad_id
                        cur_mask[i] = 0
                    for i in range(L):
                        out_ids[s, i] = cur_ids[i]
                        out_mask[s, i] = cur_mask[i]
                    out_npad[s] = L - fill
                    out_nseg[s] = nseg
                    for j in range(nseg):
                        seg_flat[seg_pos + j, 0] = cur_seg[j, 0]
                        seg_flat[seg_pos + j, 1] = cur_seg[j, 1]
                    seg_pos += nseg
                    s += 1
                    fill = 0
                    nseg = 0
                take = n if n <= L else L
                if take < n:
                    discarded += n - take
                    truncated += 1
            for i in range(take):
                cur_ids[fill + i] = ids_cat[off + i]
                cur_mask[fill + i] = mask_cat[off + i]
            cur_seg[nseg, 0] = fill
            cur_seg[nseg, 1] = take
            nseg += 1
            fill += take
            if fill == L:
                for i in range(L):
                    out_ids[s, i] = cur_ids[i]
                    out_mask[s, i] = cur_mask[i]
                out_npad[s] = 0
                out_nseg[s] = nseg
                for j in range(nseg):
                    seg_flat[seg_pos + j, 0] = cur_seg[j, 0]
                    seg_flat[seg_pos + j, 1] = cur_seg[j, 1]
                seg_pos += nseg
                s += 1
                fill = 0
                nseg = 0
        else:
            # truncate mode spillover: cut to exactly fill, discard the tail
            take = room
            for i in range(take):
                cur_ids[fill + i] = ids_cat[off + i]
                cur_mask[fill + i] = mask_cat[off + i]
            cur_seg[nseg, 0] = fill
            cur_seg[nseg, 1] = take
            nseg += 1
            discarded += n - take
            truncated += 1
            for i in range(L):
                out_ids[s, i] = cur_ids[i]
                out_mask[s, i] = cur_mask[i]
            out_npad[s] = 0
            out_nseg[s] = nseg
            for j in range(nseg):
                seg_flat[seg_pos + j, 0] = cur_seg[j, 0]
                seg_flat[seg_pos + j, 1] = cur_seg[j, 1]
            seg_pos += nseg
            s += 1
            fill = 0
            nseg = 0
        off += n
    state[0] = fill
    state[1] = nseg
    return (
        out_ids[:s],
        out_mask[:s],
        out_npad[:s],
        seg_flat[:seg_pos],
        out_nseg[:s],
        discarded,
        truncated,
    )


def _pack_chunk_impl(ids_cat, mask_cat, lens, L, pad_mode, pad_id,
                     cur_ids, cur_mask, cur_seg, state):
    n_docs = lens.shape[0]
    total = ids_cat.shape[0]
    max_segs = cur_seg.shape[0]
    # rows: every emitted sequence is L tokens except pad-mode closures, of
    # which there can be at most one per document
    cap = (state[0] + total) // L + 1
    if pad_mode:
        cap += n_docs
    out_ids = np.empty((cap, L), np.uint32)
    out_mask = np.empty((cap, L), np.uint8)
    out_npad = np.empty(cap, np.int64)
    out_nseg = np.empty(cap, np.int64)
    # every document contributes exactly one segment; carried-in segments add max_segs
    seg_flat = np.empty((n_docs + max_segs, 2), np.int64)

    s = 0
    seg_pos = 0
    fill = int(state[0])
    nseg = int(state[1])
    discarded = 0
    truncated = 0
    off = 0
    for d in range(n_docs):
        n = lens[d]
        room = L - fill
        if n <= room:
            cur_ids[fill:fill + n] = ids_cat[off:off + n]
            cur_mask[fill:fill + n] = mask_cat[off:off + n]
            cur_seg[nseg, 0] = fill
            cur_seg[nseg, 1] = n
            nseg += 1
            fill += n
            if fill == L:
                out_ids[s] = cur_ids
                out_mask[s] = cur_mask
                out_npad[s] = 0
                out_nseg[s] = nseg
                for j in range(nseg):
                    seg_flat[seg_pos + j, 0] = cur_seg[j, 0]
                    seg_flat[seg_pos + j, 1] = cur_seg[j, 1]
                seg_pos += nseg
                s += 1
                fill = 0
                nseg = 0
        elif not pad_mode:
            # spillover truncates to exactly fill; tail tokens are discarded
            take = room
            cur_ids[fill:fill + take] = ids_cat[off:off + take]
            cur_mask[fill:fill + take] = mask_cat[off:off + take]
            cur_seg[nseg, 0] = fill
            cur_seg[nseg, 1] = take
            nseg += 1
            discarded += n - take
            truncated += 1
            out_ids[s] = cur_ids
            out_mask[s] = cur_mask
            out_npad[s] = 0
            out_nseg[s] = nseg
            for j in range(nseg):
                seg_flat[seg_pos + j, 0] = cur_seg[j, 0]
                seg_flat[seg_pos + j, 1] = cur_seg[j, 1]
            seg_pos += nseg
            s += 1
            fill = 0
            nseg = 0
        else:
            if fill > 0:
                for i in range(fill, L):
                    cur_ids[i] = pad_id
                    cur_mask[i] = 0
                out_ids[s] = cur_ids
                out_mask[s] = cur_mask
                out_npad[s] = L - fill
                out_nseg[s] = nseg
                for j in range(nseg):
                    seg_flat[seg_pos + j, 0] = cur_seg[j, 0]
                    seg_flat[seg_pos + j, 1] = cur_seg[j, 1]
                seg_pos += nseg
                s += 1
                fill = 0
                nseg = 0
            if n > L:
                out_ids[s] = ids_cat[off:off + L]
                out_mask[s] = mask_cat[off:off + L]
                out_npad[s] = 0
                out_nseg[s] = 1
                seg_flat[seg_pos, 0] = 0
                seg_flat[seg_pos, 1] = L
                seg_pos += 1
                discarded += n - L
                truncated += 1
                s += 1
            else:
                cur_ids[:n] = ids_cat[off:off + n]
                cur_mask[:n] = mask_cat[off:off + n]
                cur_seg[0, 0] = 0
                cur_seg[0, 1] = n
                nseg = 1
                fill = n
                if fill == L:
                    out_ids[s] = cur_ids
                    out_mask[s] = cur_mask
                    out_npad[s] = 0
                    out_nseg[s] = 1
                    seg_flat[seg_pos, 0] = 0
                    seg_flat[seg_pos, 1] = n
                    seg_pos += 1
                    s += 1
                    fill = 0
                    nseg = 0
        off += n
    state[0] = fill
    state[1] = nseg
    return (
        out_ids[:s],
        out_mask[:s],
        out_npad[:s],
        seg_flat[:seg_pos],
        out_nseg[:s],
        discarded,
        truncated,
    )


_pack_chunk_nb = njit(cache=True)(_pack_chunk_numba_impl) if NUMBA_ENABLED else None
_pack_chunk_np = _pack_chunk_impl


def pack_chunk(ids_cat, mask_cat, lens, L, pad_mode, pad_id, cur_ids, cur_mask, cur_seg, state,
               use_numba: bool | None = None):
    """Pack one chunk of concatenated documents; see module docstring."""
    use = NUMBA_ENABLED if use_numba is None else (use_numba and NUMBA_ENABLED)
    fn = _pack_chunk_nb if use else _pack_chunk_np
    return fn(
        np.ascontiguousarray(ids_cat, dtype=np.uint32),
        np.ascontiguousarray(mask_cat, dtype=np.uint8),
        np.ascontiguousarray(lens, dtype=np.int64),
        np.int64(L),
        pad_mode,
        np.uint32(pad_id),
        cur_ids,
        cur_mask,
        cur_seg,
        state,
    )


# ---------------------------------------------------------------------------
# loss-mask bit packing (LSB-first, fixed order for cross-language readers)
# ---------------------------------------------------------------------------

def _bitpack_rows_impl(bits):
    n, L = bits.shape
    nbytes = (L + 7) // 8
    out = np.zeros((n, nbytes), np.uint8)
    for r in range(n):
        for i in range(L):
            if bits[r, i]:
                out[r, i >> 3] |= np.uint8(1 << (i & 7))
    return out


def _bitunpack_rows_impl(packed, L):
    n = packed.shape[0]
    out = np.zeros((n, L), np.uint8)
    for r in range(n):
        for i in range(L):
            out[r, i] = (packed[r, i >> 3] >> (i & 7)) & 1
    return out


_bitpack_nb = njit(cache=True)(_bitpack_rows_impl) if NUMBA_ENABLED else None
_bitunpack_nb = njit(cache=True)(_bitunpack_rows_impl) if NUMBA_ENABLED else None


def bitpack_rows(bits: np.ndarray, use_numba: bool = False) -> np.ndarray:
    """(n, L) 0/1 uint8 -> (n, ceil(L/8)) bytes, LSB-first within each byte."""
    bits = np.ascontiguousarray(bits, dtype=np.uint8)
    if use_numba and NUMBA_ENABLED:
        return _bitpack_nb(bits)
    return np.packbits(bits, axis=1, bitorder="little")


def bitunpack_rows(packed: np.ndarray, L: int, use_numba: bool = False) -> np.ndarray:
    """Inverse of bitpack_rows, truncated to L columns."""
    packed = np.ascontiguousarray(packed, dtype=np.uint8)
    if use_numba and NUMBA_ENABLED:
        return _bitunpack_nb(packed, np.int64(L))
    return np.unpackbits(packed, axis=1, bitorder="little", count=L)
