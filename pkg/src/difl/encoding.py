"""Output layer: Heaviside binarization, power-of-two fusion of bit planes,
and overlapping block-wise histograms."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels


@dataclass(frozen=True)
class HistogramConfig:
    block_h1: int = 7
    block_h2: int = 7
    cr: float = 0.5
    bits: int = 8  # L_S, number of planes fused into each integer image

    def __post_init__(self):
        if self.block_h1 < 1 or self.block_h2 < 1:
            raise ValueError("block dims must be >= 1")
        if not 0.0 <= self.cr < 1.0:
            raise ValueError(f"overlap ratio must lie in [0, 1), got {self.cr}")
        if not 1 <= self.bits <= 24:
            raise ValueError(f"bits must lie in [1, 24], got {self.bits}")

    @property
    def step_r(self) -> int:
        return max(1, int(math.floor(self.block_h1 * (1.0 - self.cr))))

    @property
    def step_c(self) -> int:
        return max(1, int(math.floor(self.block_h2 * (1.0 - self.cr))))

    @property
    def bins(self) -> int:
        return 1 << self.bits

    def num_blocks(self, m: int, n: int) -> int:
        if self.block_h1 > m or self.block_h2 > n:
            raise ValueError(f"block {self.block_h1}x{self.block_h2} larger than image {m}x{n}")
        return ((m - self.block_h1) // self.step_r + 1) * ((n - self.block_h2) // self.step_c + 1)

    def feature_dim(self, m: int, n: int, groups: int = 1) -> int:
        return self.bins * self.num_blocks(m, n) * groups


def binarize(img) -> np.ndarray:
    """1 where value >= 0, else 0."""
    values = getattr(img, "values", img)
    return (np.asarray(values) >= 0).astype(np.uint8)


def fuse_integer(bitplanes) -> np.ndarray:
    """sum_l 2**(l-1) * plane_l, plane 1 being the least significant bit."""
    planes = [np.asarray(p) for p in bitplanes]
    if not planes:
        raise ValueError("need at least one bit plane")
    shape = planes[0].shape
    if any(p.shape != shape for p in planes):
        raise ValueError("bit planes differ in shape")
    out = np.zeros(shape, dtype=np.int64)
    for l, p in enumerate(planes):
        out += (p.astype(np.int64) & 1) << l
    return out


def block_histograms(T, cfg: HistogramConfig) -> np.ndarray:
    """Counts of every value in [0, 2**bits) per fully-inside block.

    Blocks start at multiples of the step sizes; the result is the blocks'
    histograms concatenated row-major over block positions, bins minor.
    """
    T = np.asarray(T)
    if T.ndim != 2:
        raise ValueError("expected a single 2-D integer image")
    cfg.num_blocks(*T.shape)
    if T.size and (T.min() < 0 or T.max() >= cfg.bins):
        raise ValueError(f"values must lie in [0, {cfg.bins - 1}]")
    return kernels.block_hist(T[None], cfg.block_h1, cfg.block_h2,
                              cfg.step_r, cfg.step_c, cfg.bins)[0]


def integer_images(maps: np.ndarray, bits: int) -> np.ndarray:
    """(..., groups*bits, m, n) real maps -> (..., groups, m, n) fused integers.

    Maps are ordered parent-major: consecutive runs of ``bits`` maps share a
    parent and are fused in that order.
    """
    maps = np.asarray(maps)
    *lead, G, m, n = maps.shape
    if G % bits:
        raise ValueError(f"{G} maps do not split into groups of {bits}")
    planes = (maps >= 0).reshape(*lead, G // bits, bits, m, n).astype(np.int64)
    weights = (np.int64(1) << np.arange(bits, dtype=np.int64))
    return np.einsum("...lmn,l->...mn", planes, weights)


def encode(feature_maps, cfg: HistogramConfig, groups: int | None = None) -> np.ndarray:
    """Feature vector of one image from its layer-S maps.

    ``feature_maps`` is a (groups*bits, m, n) array or a sequence of
    FeatureImages in parent-major order.
    """
    maps = np.stack([getattr(f, "values", f) for f in feature_maps]) \
        if not isinstance(feature_maps, np.ndarray) else feature_maps
    if maps.ndim != 3:
        raise ValueError("expected (groups*bits, m, n) maps")
    if groups is not None and maps.shape[0] != groups * cfg.bits:
        raise ValueError(f"expected {groups} groups of {cfg.bits} maps, got {maps.shape[0]} maps")
    if maps.shape[0] % cfg.bits:
        raise ValueError(f"{maps.shape[0]} maps do not split into groups of {cfg.bits}")
    return encode_batch(maps[None], cfg)[0]


def encode_batch(maps: np.ndarray, cfg: HistogramConfig) -> np.ndarray:
    """(N, groups*bits, m, n) maps -> (N, dim) int64 histogram counts."""
    N, G, m, n = maps.shape
    cfg.num_blocks(m, n)
    T = integer_images(maps, cfg.bits)
    hist = kernels.block_hist(T.reshape(-1, m, n), cfg.block_h1, cfg.block_h2,
                              cfg.step_r, cfg.step_c, cfg.bins)
    return hist.reshape(N, -1)
