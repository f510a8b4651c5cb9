import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from difl.encoding import (HistogramConfig, binarize, block_histograms, encode, encode_batch,
                           fuse_integer, integer_images)
from difl.patching import FeatureImage


def test_binarize_heaviside():
    assert binarize(np.array([-0.5, 0.0, 3.0])).tolist() == [0, 1, 1]
    assert binarize(np.full((3, 3), 2.0)).all()
    b = binarize(np.array([[-1.0, 1.0]]))
    # with H(0) = 1 a 0 bit re-binarizes to 1, so bits are read back as -1/+1
    np.testing.assert_array_equal(binarize(2.0 * b - 1.0), b)
    assert binarize(b.astype(float)).all()
    assert binarize(FeatureImage(np.array([[-1.0]]), (0, ()))).tolist() == [[0]]


def test_fuse_examples():
    planes = [np.array([[1]]), np.array([[0]]), np.array([[1]])]
    assert fuse_integer(planes).tolist() == [[5]]
    assert not fuse_integer([np.zeros((2, 2))] * 3).any()
    np.testing.assert_array_equal(fuse_integer([np.ones((2, 2))] * 8), np.full((2, 2), 255))
    with pytest.raises(ValueError):
        fuse_integer([np.zeros((2, 2)), np.zeros((2, 3))])


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**31))
def test_fuse_range(bits, seed):
    planes = np.random.default_rng(seed).integers(0, 2, (bits, 5, 4))
    T = fuse_integer(list(planes))
    assert T.min() >= 0 and T.max() <= 2 ** bits - 1
    # reading the bits back recovers the planes
    for l in range(bits):
        np.testing.assert_array_equal((T >> l) & 1, planes[l])


def test_block_count_mnist():
    cfg = HistogramConfig(7, 7, 0.5, 8)
    assert (cfg.step_r, cfg.step_c) == (3, 3)
    assert cfg.num_blocks(28, 28) == 64
    assert cfg.feature_dim(28, 28, 8) == 131072


def test_block_histogram_example(backend):
    cfg = HistogramConfig(2, 2, 0.0, 2)
    assert block_histograms(np.array([[0, 1], [2, 3]]), cfg).tolist() == [1, 1, 1, 1]


def test_block_histogram_errors():
    cfg = HistogramConfig(3, 3, 0.5, 2)
    with pytest.raises(ValueError):
        block_histograms(np.zeros((2, 5), dtype=int), cfg)
    with pytest.raises(ValueError):
        block_histograms(np.full((4, 4), 4), cfg)


def _hist_oracle(T, cfg):
    m, n = T.shape
    out = []
    for r in range(0, m - cfg.block_h1 + 1, cfg.step_r):
        for c in range(0, n - cfg.block_h2 + 1, cfg.step_c):
            h = [0] * cfg.bins
            for a in range(cfg.block_h1):
                for b in range(cfg.block_h2):
                    h[int(T[r + a][c + b])] += 1
            out += h
    return out


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 12), st.integers(3, 12), st.sampled_from([1, 3]), st.sampled_from([1, 3]),
       st.sampled_from([0.0, 0.25, 0.5, 0.9]), st.integers(1, 4), st.integers(0, 2**31))
def test_block_histograms_match_loop_oracle(m, n, bh1, bh2, cr, bits, seed):
    cfg = HistogramConfig(bh1, bh2, cr, bits)
    T = np.random.default_rng(seed).integers(0, 2 ** bits, (m, n))
    h = block_histograms(T, cfg)
    assert h.tolist() == _hist_oracle(T, cfg)
    assert (h.reshape(-1, cfg.bins).sum(axis=1) == bh1 * bh2).all()


def test_encode_single_group_length_and_sum():
    cfg = HistogramConfig(7, 7, 0.5, 4)
    maps = np.random.default_rng(0).normal(size=(4, 28, 28))
    f = encode(maps, cfg)
    assert f.shape == (2 ** 4 * 64,)
    assert f.sum() == 64 * 49


def test_encode_group_order_and_mismatch():
    cfg = HistogramConfig(3, 3, 0.5, 2)
    rng = np.random.default_rng(1)
    maps = rng.normal(size=(6, 6, 6))
    f = encode(maps, cfg, groups=3)
    per = cfg.feature_dim(6, 6)
    for g in range(3):
        T = fuse_integer([binarize(maps[2 * g]), binarize(maps[2 * g + 1])])
        np.testing.assert_array_equal(f[g * per:(g + 1) * per], block_histograms(T, cfg))
    assert f.sum() == 3 * cfg.num_blocks(6, 6) * 9
    with pytest.raises(ValueError):
        encode(maps, cfg, groups=2)
    with pytest.raises(ValueError):
        encode(maps[:5], cfg)


def test_encode_accepts_feature_images():
    cfg = HistogramConfig(3, 3, 0.5, 2)
    maps = np.random.default_rng(2).normal(size=(2, 5, 5))
    fi = [FeatureImage(mp, (0, (l,))) for l, mp in enumerate(maps)]
    np.testing.assert_array_equal(encode(fi, cfg), encode(maps, cfg))


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (4, 6, 6), elements=st.floats(-10, 10)), st.floats(0.0, 5.0))
def test_encode_invariant_iff_sign_pattern_kept(maps, shift):
    cfg = HistogramConfig(3, 3, 0.5, 2)
    moved = maps + shift
    same_signs = np.array_equal(moved >= 0, maps >= 0)
    same_features = np.array_equal(encode(maps, cfg), encode(moved, cfg))
    if same_signs:
        assert same_features
    np.testing.assert_array_equal(integer_images(moved[None], 2)[0] == integer_images(maps[None], 2)[0],
                                  np.all((moved >= 0).reshape(2, 2, 6, 6) == (maps >= 0).reshape(2, 2, 6, 6), axis=1))


def test_encode_batch_matches_encode():
    cfg = HistogramConfig(3, 3, 0.5, 3)
    maps = np.random.default_rng(3).normal(size=(5, 6, 7, 7))
    batch = encode_batch(maps, cfg)
    for i in range(5):
        np.testing.assert_array_equal(batch[i], encode(maps[i], cfg))


def test_config_validation():
    with pytest.raises(ValueError):
        HistogramConfig(cr=1.0)
    with pytest.raises(ValueError):
        HistogramConfig(block_h1=0)
    assert HistogramConfig(4, 4, 0.9, 2).step_r == 1
