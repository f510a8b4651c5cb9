"""Block column vectorization of images and reassembly of per-pixel outputs.

Patch layout: for pixel (r, c) the h1 x h2 window centred on it is read from
the zero-padded image and flattened row by row (window row index slowest,
window column index fastest), so the centre pixel sits at offset
(h1*h2 - 1) // 2. Pixels are scanned row-major and images are concatenated
image-major, matching the column order of the stacked patch matrix.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence, Tuple

import numpy as np

from . import kernels
from .imagery import ImageStack

# columns per streamed chunk; bounds memory when the patch matrix is huge
CHUNK_COLUMNS = 1 << 16


@dataclass(frozen=True)
class FeatureImage:
    values: np.ndarray
    parentage: Tuple[int, tuple] = (0, ())

    @property
    def shape(self):
        return self.values.shape


def _check_patch(h1: int, h2: int, m: int, n: int):
    for name, h in (("h1", h1), ("h2", h2)):
        if int(h) != h or h < 1:
            raise ValueError(f"{name} must be a positive integer, got {h}")
        if h % 2 == 0:
            raise ValueError(f"{name} must be odd, got {h}")


class PatchMatrix:
    """The (h1*h2) x (m*n*count) patch matrix of a stack of images.

    Built lazily: ``chunks`` streams blocks of columns (as rows, i.e. one
    patch per row) so that very large matrices never have to exist at once.
    ``data`` materializes the full matrix in the column layout.
    """

    def __init__(self, images: np.ndarray, h1: int, h2: int):
        images = np.asarray(images, dtype=np.float64)
        if images.ndim != 3:
            raise ValueError(f"expected (count, m, n) images, got {images.shape}")
        _check_patch(h1, h2, images.shape[1], images.shape[2])
        self.images = images
        self.h1, self.h2 = int(h1), int(h2)

    @property
    def count(self) -> int:
        return self.images.shape[0]

    @property
    def m(self) -> int:
        return self.images.shape[1]

    @property
    def n(self) -> int:
        return self.images.shape[2]

    @property
    def rows(self) -> int:
        return self.h1 * self.h2

    @property
    def cols(self) -> int:
        return self.m * self.n * self.count

    @property
    def shape(self):
        return (self.rows, self.cols)

    def columns(self, first_image: int, stop_image: int) -> np.ndarray:
        """Patches of images [first_image, stop_image) as a (cols, h1*h2) array."""
        return kernels.extract_patches(self.images[first_image:stop_image], self.h1, self.h2)

    def chunks(self, max_cols: int = CHUNK_COLUMNS) -> Iterator[Tuple[int, np.ndarray]]:
        per = max(1, max_cols // (self.m * self.n))
        for i in range(0, self.count, per):
            yield i * self.m * self.n, self.columns(i, min(i + per, self.count))

    @property
    def data(self) -> np.ndarray:
        return self.columns(0, self.count).T


def _as_array(images) -> np.ndarray:
    if isinstance(images, ImageStack):
        return images.pixels
    if isinstance(images, FeatureImage):
        return images.values[None]
    if isinstance(images, np.ndarray):
        return images if images.ndim == 3 else images[None]
    seq = list(images)
    if seq and isinstance(seq[0], FeatureImage):
        return np.stack([f.values for f in seq])
    return np.asarray(seq, dtype=np.float64)


def vectorize(images, h1: int, h2: int) -> PatchMatrix:
    """Patch matrix of an ImageStack, a sequence of FeatureImages or a (N, m, n) array."""
    return PatchMatrix(_as_array(images), h1, h2)


def reassemble(values: Sequence[float], m: int, n: int, parentage=(0, ())) -> FeatureImage:
    """Undo the row-major pixel scan: m*n values -> m x n FeatureImage."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size != m * n:
        raise ValueError(f"need {m * n} values for a {m}x{n} image, got {arr.size}")
    return FeatureImage(arr.reshape(m, n).copy(), parentage)
