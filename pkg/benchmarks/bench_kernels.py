#!/usr/bin/env python3
"""Benchmark the numba kernels against their pure-numpy fallbacks.

Usage: python benchmarks/bench_kernels.py [--docs 200000] [--seq-len 8192]

Set MECO_NUMBA=0 to confirm the whole pipeline still works on the fallback
path; this script measures both paths in one process via the explicit
use_numba switch.
"""

import argparse
import time

import numpy as np

from meco import kernels


def time_fn(fn, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_pack(n_docs: int, doc_tokens: tuple[int, int], seq_len: int, rng) -> dict:
    lens = rng.integers(*doc_tokens, size=n_docs).astype(np.int64)
    total = int(lens.sum())
    ids_cat = rng.integers(0, 259, size=total).astype(np.uint32)
    mask_cat = rng.integers(0, 2, size=total).astype(np.uint8)

    def run(use_numba):
        cur_ids = np.zeros(seq_len, np.uint32)
        cur_mask = np.zeros(seq_len, np.uint8)
        cur_seg = np.zeros((kernels.max_segments(seq_len), 2), np.int64)
        state = np.zeros(2, np.int64)
        kernels.pack_chunk(
            ids_cat, mask_cat, lens, seq_len, False, 2,
            cur_ids, cur_mask, cur_seg, state, use_numba=use_numba,
        )

    out = {"tokens": total, "numpy_s": time_fn(lambda: run(False))}
    if kernels.NUMBA_ENABLED:
        run(True)  # compile outside the timer
        out["numba_s"] = time_fn(lambda: run(True))
    return out


def bench_bitpack(n_rows: int, seq_len: int, rng) -> dict:
    bits = rng.integers(0, 2, size=(n_rows, seq_len)).astype(np.uint8)
    out = {"bits": bits.size, "numpy_s": time_fn(lambda: kernels.bitpack_rows(bits))}
    if kernels.NUMBA_ENABLED:
        kernels.bitpack_rows(bits, use_numba=True)
        out["numba_s"] = time_fn(lambda: kernels.bitpack_rows(bits, use_numba=True))
    return out


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--docs", type=int, default=200_000)
    parser.add_argument("--rows", type=int, default=20_000)
    parser.add_argument("--seq-len", type=int, default=8192)
    args = parser.parse_args()
    rng = np.random.default_rng(0)

    print(f"numba available and enabled: {kernels.NUMBA_ENABLED}")
    regimes = [("short docs", (2, 48)), ("medium docs", (64, 900)), ("long docs", (2000, 9000))]
    for label, doc_tokens in regimes:
        n_docs = args.docs if doc_tokens[1] < 1000 else max(args.docs // 6, 1)
        pack = bench_pack(n_docs, doc_tokens, args.seq_len, rng)
        print(f"\npack_chunk, {label} ({n_docs} docs, {pack['tokens'] / 1e6:.1f}M tokens, "
              f"L={args.seq_len})")
        print(f"  numpy fallback: {pack['numpy_s'] * 1e3:9.1f} ms"
              f"  ({pack['tokens'] / pack['numpy_s'] / 1e6:7.1f} Mtok/s)")
        if "numba_s" in pack:
            print(f"  numba @njit:    {pack['numba_s'] * 1e3:9.1f} ms"
                  f"  ({pack['tokens'] / pack['numba_s'] / 1e6:7.1f} Mtok/s)"
                  f"  speedup x{pack['numpy_s'] / pack['numba_s']:.1f}")

    bp = bench_bitpack(args.rows, args.seq_len, rng)
    print(f"\nbitpack_rows over {args.rows} rows x {args.seq_len} bits "
          f"(np.packbits is the production default)")
    print(f"  np.packbits:    {bp['numpy_s'] * 1e3:9.1f} ms")
    if "numba_s" in bp:
        print(f"  numba @njit:    {bp['numba_s'] * 1e3:9.1f} ms"
              f"  speedup x{bp['numpy_s'] / bp['numba_s']:.2f}")


if __name__ == "__main__":
    main()
