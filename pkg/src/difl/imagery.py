"""Image datasets: IDX / PGM ingestion, stratified splits and corruptions."""
from __future__ import annotations

import gzip
import math
import os
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import FormatError

IDX_UBYTE_IMAGES = 0x00000803
IDX_DOUBLE_IMAGES = 0x00000D03
IDX_UBYTE_LABELS = 0x00000801


@dataclass(frozen=True)
class ImageStack:
    """N grayscale images of identical size, stored as float64 (N, m, n)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.array(self.pixels, dtype=np.float64, copy=True)
        if px.ndim == 2:
            px = px[None]
        if px.ndim != 3:
            raise ValueError(f"expected (N, m, n) pixels, got shape {px.shape}")
        if px.shape[0] < 1:
            raise ValueError("an ImageStack needs at least one image")
        if not np.all(np.isfinite(px)):
            raise ValueError("pixel values must be finite")
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @property
    def count(self) -> int:
        return self.pixels.shape[0]

    @property
    def m(self) -> int:
        return self.pixels.shape[1]

    @property
    def n(self) -> int:
        return self.pixels.shape[2]

    def __len__(self):
        return self.count

    def subset(self, idx) -> "ImageStack":
        return ImageStack(self.pixels[np.asarray(idx)])


@dataclass(frozen=True)
class LabeledImageSet:
    images: ImageStack
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.labels is not None:
            lab = np.array(self.labels, dtype=np.int64, copy=True)
            if lab.shape != (self.images.count,):
                raise ValueError(
                    f"{lab.shape[0] if lab.ndim else 0} labels for {self.images.count} images")
            if lab.size and lab.min() < 0:
                raise ValueError("labels must be non-negative")
            lab.flags.writeable = False
            object.__setattr__(self, "labels", lab)

    @property
    def num_classes(self) -> int:
        if self.labels is None:
            return 0
        return int(self.labels.max()) + 1

    def subset(self, idx) -> "LabeledImageSet":
        idx = np.asarray(idx, dtype=np.int64)
        labels = None if self.labels is None else self.labels[idx]
        return LabeledImageSet(self.images.subset(idx), labels)


_KINDS = ("saltPepper", "gaussian", "occlusion")
_KIND_ALIASES = {
    "saltpepper": "saltPepper", "salt_pepper": "saltPepper", "sp": "saltPepper",
    "gaussian": "gaussian", "gauss": "gaussian",
    "occlusion": "occlusion", "occlude": "occlusion",
}


@dataclass(frozen=True)
class CorruptionSpec:
    """One of the three corruptions used in the robustness experiments.

    ``param`` is the density for saltPepper, the standard deviation (pixel
    units) for gaussian and the covered area fraction for occlusion.
    """

    kind: str
    param: float
    seed: int = 0
    occluder: Optional[ImageStack] = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown corruption kind {self.kind!r}")
        if self.seed < 0:
            raise ValueError("seed must be unsigned")
        p = float(self.param)
        if self.kind == "saltPepper" and not 0.0 < p < 1.0:
            raise ValueError(f"salt&pepper density must lie in (0, 1), got {p}")
        if self.kind == "gaussian" and not p >= 0.0:
            raise ValueError(f"gaussian std must be >= 0, got {p}")
        if self.kind == "occlusion":
            if not 0.0 < p < 1.0:
                raise ValueError(f"occlusion fraction must lie in (0, 1), got {p}")
            if self.occluder is not None and self.occluder.count != 1:
                raise ValueError("occluder must be a single image")

    @classmethod
    def parse(cls, text: str, seed: int = 0, occluder: Optional[ImageStack] = None):
        """Parse ``kind:param`` such as ``gaussian:30`` or ``occlusion:0.2``."""
        kind, sep, value = text.partition(":")
        if not sep:
            raise ValueError(f"corruption must look like kind:param, got {text!r}")
        key = _KIND_ALIASES.get(kind.strip().lower().replace("&", ""))
        if key is None:
            raise ValueError(f"unknown corruption kind {kind!r}")
        return cls(key, float(value), seed, occluder)

    @property
    def applies_to_train(self) -> bool:
        # occlusion is a test-time-only protocol
        return self.kind != "occlusion"


# ---------------------------------------------------------------------------
# IDX
# ---------------------------------------------------------------------------

def _open(path):
    path = os.fspath(path)
    if path.endswith(".gz"):
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_all(path) -> bytes:
    try:
        with _open(path) as fh:
            return fh.read()
    except (OSError, EOFError) as exc:
        if isinstance(exc, FileNotFoundError):
            raise
        raise FormatError(f"{path}: cannot read ({exc})") from exc


def _parse_idx_images(buf: bytes, path) -> np.ndarray:
    if len(buf) < 16:
        raise FormatError(f"{path}: truncated IDX header")
    magic, count, rows, cols = struct.unpack(">IIII", buf[:16])
    if magic == IDX_UBYTE_IMAGES:
        dtype = np.dtype(np.uint8)
    elif magic == IDX_DOUBLE_IMAGES:
        dtype = np.dtype(">f8")
    else:
        raise FormatError(f"{path}: bad image magic 0x{magic:08X}")
    need = count * rows * cols * dtype.itemsize
    if len(buf) - 16 != need:
        raise FormatError(f"{path}: expected {need} pixel bytes, found {len(buf) - 16}")
    data = np.frombuffer(buf, dtype=dtype, offset=16)
    return data.reshape(count, rows, cols).astype(np.float64)


def _parse_idx_labels(buf: bytes, path) -> np.ndarray:
    if len(buf) < 8:
        raise FormatError(f"{path}: truncated IDX header")
    magic, count = struct.unpack(">II", buf[:8])
    if magic != IDX_UBYTE_LABELS:
        raise FormatError(f"{path}: bad label magic 0x{magic:08X}")
    if len(buf) - 8 != count:
        raise FormatError(f"{path}: expected {count} labels, found {len(buf) - 8}")
    return np.frombuffer(buf, dtype=np.uint8, offset=8).astype(np.int64)


def load_idx(image_path, label_path=None) -> LabeledImageSet:
    """Read an IDX image file (optionally gzipped) and its label file.

    Accepts unsigned-byte images (magic 0x803) and, for lossless round trips
    of corrupted data, big-endian float64 images (magic 0xD03).
    """
    pixels = _parse_idx_images(_read_all(image_path), image_path)
    if pixels.shape[0] == 0:
        raise FormatError(f"{image_path}: no images")
    labels = None
    if label_path is not None:
        labels = _parse_idx_labels(_read_all(label_path), label_path)
        if labels.shape[0] != pixels.shape[0]:
            raise FormatError(
                f"{label_path}: {labels.shape[0]} labels for {pixels.shape[0]} images")
    return LabeledImageSet(ImageStack(pixels), labels)


def _write_bytes(path, payload: bytes):
    path = os.fspath(path)
    if path.endswith(".gz"):
        # fixed mtime keeps the output byte-stable
        with open(path, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as fh:
            fh.write(payload)
    else:
        with open(path, "wb") as fh:
            fh.write(payload)


def write_idx_images(path, images: ImageStack, exact: bool = False):
    """Write images as IDX; ``exact`` stores float64 instead of rounding to bytes."""
    px = images.pixels
    N, m, n = px.shape
    if exact:
        header = struct.pack(">IIII", IDX_DOUBLE_IMAGES, N, m, n)
        body = px.astype(">f8").tobytes()
    else:
        header = struct.pack(">IIII", IDX_UBYTE_IMAGES, N, m, n)
        body = np.clip(np.rint(px), 0, 255).astype(np.uint8).tobytes()
    _write_bytes(path, header + body)


def write_idx_labels(path, labels):
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() > 255):
        raise ValueError("IDX labels must fit in an unsigned byte")
    _write_bytes(path, struct.pack(">II", IDX_UBYTE_LABELS, labels.shape[0])
                 + labels.astype(np.uint8).tobytes())


# ---------------------------------------------------------------------------
# PGM
# ---------------------------------------------------------------------------

_PGM_NAME = re.compile(r"^(\d+)_(\d+)\.pgm$", re.IGNORECASE)


def _read_pgm(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    if buf[:2] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (P5) file")
    tokens = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(buf):
            raise FormatError(f"{path}: truncated PGM header")
        if buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        tokens.append(buf[start:pos])
    pos += 1  # single whitespace byte before the raster
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise FormatError(f"{path}: malformed PGM header") from exc
    if not 0 < maxval < 65536:
        raise FormatError(f"{path}: bad maxval {maxval}")
    dtype = np.dtype(np.uint8) if maxval < 256 else np.dtype(">u2")
    need = width * height * dtype.itemsize
    if len(buf) - pos < need:
        raise FormatError(f"{path}: truncated PGM raster")
    img = np.frombuffer(buf, dtype=dtype, count=width * height, offset=pos)
    img = img.reshape(height, width).astype(np.float64)
    if maxval != 255:
        img *= 255.0 / maxval
    return img


def resize_bilinear(img: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Bilinear resampling with pixel-centre alignment and edge clamping."""
    img = np.asarray(img, dtype=np.float64)
    m, n = img.shape
    if (m, n) == (rows, cols):
        return img.copy()

    def axis(src, dst):
        pos = (np.arange(dst) + 0.5) * (src / dst) - 0.5
        pos = np.clip(pos, 0.0, src - 1)
        lo = np.floor(pos).astype(np.int64)
        hi = np.minimum(lo + 1, src - 1)
        return lo, hi, pos - lo

    r0, r1, fr = axis(m, rows)
    c0, c1, fc = axis(n, cols)
    top = img[r0][:, c0] * (1 - fc) + img[r0][:, c1] * fc
    bot = img[r1][:, c0] * (1 - fc) + img[r1][:, c1] * fc
    return top * (1 - fr)[:, None] + bot * fr[:, None]


def load_pgm_dir(directory, resize_to: Optional[tuple] = None) -> LabeledImageSet:
    """Load ``<class>_<idx>.pgm`` files, ordered by (class, idx)."""
    entries = []
    for p in Path(directory).iterdir():
        if p.suffix.lower() != ".pgm":
            continue
        mt = _PGM_NAME.match(p.name)
        if mt is None:
            raise FormatError(f"{p.name}: expected <class>_<idx>.pgm")
        entries.append((int(mt.group(1)), int(mt.group(2)), p))
    if not entries:
        raise FormatError(f"{directory}: no .pgm files")
    entries.sort(key=lambda e: (e[0], e[1]))
    imgs = []
    for _, _, p in entries:
        img = _read_pgm(p)
        if resize_to is not None:
            img = resize_bilinear(img, *resize_to)
        imgs.append(img)
    if len({im.shape for im in imgs}) != 1:
        raise FormatError("PGM images differ in size; pass resize_to")
    return LabeledImageSet(ImageStack(np.stack(imgs)), np.array([e[0] for e in entries]))


# ---------------------------------------------------------------------------
# splitting and corruption
# ---------------------------------------------------------------------------

def stratified_split_indices(labels, per_class_train: int, seed: int):
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    train = []
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        if members.size <= per_class_train:
            raise ValueError(
                f"class {cls} has {members.size} images, need more than {per_class_train}")
        train.append(members[rng.permutation(members.size)[:per_class_train]])
    train_idx = np.sort(np.concatenate(train))
    test_idx = np.setdiff1d(np.arange(labels.size), train_idx)
    return train_idx, test_idx


def stratified_split(dataset: LabeledImageSet, per_class_train: int, seed: int = 0):
    """Take ``per_class_train`` random images of every class for training."""
    if dataset.labels is None:
        raise ValueError("stratified_split needs labels")
    if per_class_train < 0:
        raise ValueError("per_class_train must be non-negative")
    train_idx, test_idx = stratified_split_indices(dataset.labels, per_class_train, seed)
    return dataset.subset(train_idx), dataset.subset(test_idx)


def default_occluder() -> ImageStack:
    """16x16 black/white checkerboard with 4-pixel cells."""
    r, c = np.indices((16, 16))
    return ImageStack((((r // 4) + (c // 4)) % 2 * 255.0)[None])


def occlusion_side(fraction: float, m: int, n: int) -> int:
    return max(1, min(m, n, int(math.floor(math.sqrt(fraction * m * n)))))


def corrupt(images: ImageStack, spec: CorruptionSpec) -> ImageStack:
    """Apply ``spec`` to every image; image i uses the sub-seed ``seed ^ i``."""
    px = np.array(images.pixels, copy=True)
    N, m, n = px.shape
    if spec.kind == "gaussian" and spec.param == 0.0:
        return ImageStack(px)
    if spec.kind == "occlusion":
        side = occlusion_side(spec.param, m, n)
        occ_img = (spec.occluder or default_occluder()).pixels[0]
        patch = resize_bilinear(occ_img, side, side)
    for i in range(N):
        rng = np.random.default_rng(spec.seed ^ i)
        img = px[i]
        if spec.kind == "saltPepper":
            count = int(math.floor(spec.param * m * n))
            pos = rng.permutation(m * n)[:count]
            img.flat[pos] = rng.integers(0, 2, size=count) * 255.0
        elif spec.kind == "gaussian":
            img += rng.normal(0.0, spec.param, size=(m, n))
            np.clip(img, 0.0, 255.0, out=img)
        else:
            r0 = int(rng.integers(0, m - side + 1))
            c0 = int(rng.integers(0, n - side + 1))
            img[r0:r0 + side, c0:c0 + side] = patch
    return ImageStack(px)
