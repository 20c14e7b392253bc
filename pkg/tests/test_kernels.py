"""Equivalence of the numba and pure-numpy kernel paths."""

import numpy as np
import pytest

from meco import kernels


def _random_batch(rng, n_docs, max_len=40):
    lens = rng.integers(2, max_len, size=n_docs).astype(np.int64)
    ids_cat = rng.integers(0, 1000, size=int(lens.sum())).astype(np.uint32)
    mask_cat = rng.integers(0, 2, size=int(lens.sum())).astype(np.uint8)
    return ids_cat, mask_cat, lens


def _fresh_state(L):
    return (
        np.zeros(L, np.uint32),
        np.zeros(L, np.uint8),
        np.zeros((kernels.max_segments(L), 2), np.int64),
        np.zeros(2, np.int64),
    )


@pytest.mark.parametrize("pad_mode", [False, True])
def test_pack_chunk_paths_agree_across_carry(pad_mode):
    rng = np.random.default_rng(9)
    L = 32
    chunks = [_random_batch(rng, n) for n in (17, 1, 40, 5)]

    def run(use_numba):
        cur_ids, cur_mask, cur_seg, state = _fresh_state(L)
        collected = []
        for ids_cat, mask_cat, lens in chunks:
            out = kernels.pack_chunk(
                ids_cat, mask_cat, lens, L, pad_mode, 2,
                cur_ids, cur_mask, cur_seg, state, use_numba=use_numba,
            )
            collected.append(out)
        return collected, state.copy(), cur_ids.copy(), cur_mask.copy()

    got_np, state_np, cur_np, curm_np = run(False)
    if not kernels.NUMBA_ENABLED:
        pytest.skip("numba unavailable; single path only")
    got_nb, state_nb, cur_nb, curm_nb = run(True)
    assert np.array_equal(state_np, state_nb)
    fill = int(state_np[0])
    assert np.array_equal(cur_np[:fill], cur_nb[:fill])
    assert np.array_equal(curm_np[:fill], curm_nb[:fill])
    for a, b in zip(got_np, got_nb):
        out_ids_a, out_mask_a, npad_a, seg_a, nseg_a, disc_a, trunc_a = a
        out_ids_b, out_mask_b, npad_b, seg_b, nseg_b, disc_b, trunc_b = b
        assert np.array_equal(out_ids_a, out_ids_b)
        assert np.array_equal(out_mask_a, out_mask_b)
        assert np.array_equal(npad_a, npad_b)
        assert np.array_equal(nseg_a, nseg_b)
        assert np.array_equal(seg_a, seg_b)
        assert int(disc_a) == int(disc_b)
        assert int(trunc_a) == int(trunc_b)


def test_bitpack_matches_numpy_oracle():
    rng = np.random.default_rng(3)
    for L in (1, 7, 8, 9, 64, 200):
        bits = rng.integers(0, 2, size=(5, L)).astype(np.uint8)
        expected = np.packbits(bits, axis=1, bitorder="little")
        assert np.array_equal(kernels.bitpack_rows(bits), expected)
        if kernels.NUMBA_ENABLED:
            assert np.array_equal(kernels.bitpack_rows(bits, use_numba=True), expected)


def test_bitunpack_round_trip():
    rng = np.random.default_rng(4)
    for L in (1, 8, 13, 128):
        bits = rng.integers(0, 2, size=(7, L)).astype(np.uint8)
        packed = kernels.bitpack_rows(bits)
        assert np.array_equal(kernels.bitunpack_rows(packed, L), bits)
        if kernels.NUMBA_ENABLED:
            assert np.array_equal(kernels.bitunpack_rows(packed, L, use_numba=True), bits)


def test_bit_order_is_lsb_first():
    bits = np.zeros((1, 8), np.uint8)
    bits[0, 0] = 1  # lowest position -> lowest bit
    assert kernels.bitpack_rows(bits)[0, 0] == 1
    bits[0, 0] = 0
    bits[0, 7] = 1
    assert kernels.bitpack_rows(bits)[0, 0] == 128
