"""Layer-wise fitting and application of the stacked fuzzy-rule feature learner.

Feature maps of one image are kept parent-major: after layer s the map with
index ``parent * L_s + l`` is output l of the layer applied to map ``parent``
of layer s-1. This makes every run of L_S consecutive final maps one fusion
group for the output layer.
"""
from __future__ import annotations

import dataclasses
import logging
import struct
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from . import kernels
from .antecedent import FuzzyAntecedent, firing_matrix, fit_antecedent
from .consequent import CovarianceAccumulator, ProjectionBank, top_eigs
from .encoding import HistogramConfig, encode_batch
from .errors import FormatError, UnsupportedVersionError
from .imagery import ImageStack
from .patching import PatchMatrix

log = logging.getLogger(__name__)

MODEL_MAGIC = b"DIFL"
FEATURE_MAGIC = b"DIFF"
FORMAT_VERSION = 1
# images per forward batch; fixed so that a given image always meets the
# same kernel shapes (keeps fit-time and transform-time maps bit-identical)
BATCH_IMAGES = 32


@dataclass(frozen=True)
class LayerConfig:
    K: int = 3
    L: int = 8
    h1: int = 7
    h2: int = 7

    def __post_init__(self):
        for name in ("K", "L", "h1", "h2"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        for name in ("h1", "h2"):
            if getattr(self, name) % 2 == 0:
                raise ValueError(f"{name} must be odd, got {getattr(self, name)}")
        if self.L > self.lifted_dim:
            raise ValueError(f"L={self.L} exceeds the lifted dimension {self.lifted_dim}")

    @property
    def lifted_dim(self) -> int:
        return self.K * (self.h1 * self.h2 + 1)


@dataclass(frozen=True)
class LayerModel:
    antecedent: FuzzyAntecedent
    bank: ProjectionBank
    config: LayerConfig

    def __post_init__(self):
        if self.bank.P.shape[0] != self.config.lifted_dim:
            raise ValueError("projection bank does not match the layer's lifted dimension")


@dataclass(frozen=True)
class TrainedModel:
    layers: Tuple[LayerModel, ...]
    output: HistogramConfig
    m: int
    n: int
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        if len(self.layers) < 1:
            raise ValueError("a model needs at least one layer")
        if self.output.bits != self.layers[-1].config.L:
            raise ValueError("histogram bits must equal the last layer's output count")

    @property
    def S(self) -> int:
        return len(self.layers)

    def gamma(self, s: int) -> int:
        """Maps per image after layer s (gamma(0) == 1)."""
        g = 1
        for layer in self.layers[:s]:
            g *= layer.config.L
        return g

    @property
    def feature_dim(self) -> int:
        return self.output.feature_dim(self.m, self.n, self.gamma(self.S - 1))


def _pixels(images) -> np.ndarray:
    if isinstance(images, ImageStack):
        return images.pixels
    arr = np.asarray(images, dtype=np.float64)
    return arr if arr.ndim == 3 else arr[None]


def forward_layer(layer: LayerModel, maps: np.ndarray) -> np.ndarray:
    """(B, m, n) input maps -> (B, L, m, n) output maps of one layer."""
    B, m, n = maps.shape
    cfg = layer.config
    X = kernels.extract_patches(maps, cfg.h1, cfg.h2)
    mu = firing_matrix(X, layer.antecedent)
    Z = kernels.lift_project(X, mu, layer.bank.P)
    return np.ascontiguousarray(Z.reshape(B, m, n, cfg.L).transpose(0, 3, 1, 2))


def _apply_layer(layer: LayerModel, maps: np.ndarray) -> np.ndarray:
    N, G, m, n = maps.shape
    L = layer.config.L
    out = np.empty((N, G * L, m, n))
    for i in range(0, N, BATCH_IMAGES):
        j = min(i + BATCH_IMAGES, N)
        out[i:j] = forward_layer(layer, maps[i:j].reshape(-1, m, n)).reshape(j - i, G * L, m, n)
    return out


def fit_layer(maps: np.ndarray, cfg: LayerConfig) -> LayerModel:
    """Fit antecedent and consequent parameters on (count, m, n) pooled maps."""
    pm = PatchMatrix(maps, cfg.h1, cfg.h2)
    antecedent = fit_antecedent(pm, cfg.K)
    acc = CovarianceAccumulator(cfg.lifted_dim)
    for _, X in pm.chunks():
        acc.add(kernels.lift_centered(X, firing_matrix(X, antecedent)))
    bank = top_eigs(acc.result(), cfg.L)
    return LayerModel(antecedent, bank, cfg)


def fit(train, layer_configs: Sequence[LayerConfig],
        output: Optional[HistogramConfig] = None,
        on_layer: Optional[Callable[[int, LayerModel], None]] = None):
    """Fit all layers in order, each once, on the previous layer's outputs.

    Returns the TrainedModel and the final maps, shape (N, Gamma_S, m, n).
    The histogram config's ``bits`` is forced to the last layer's L.
    """
    px = _pixels(train)
    if not layer_configs:
        raise ValueError("need at least one layer config")
    N, m, n = px.shape
    output = output or HistogramConfig()
    output = dataclasses.replace(output, bits=layer_configs[-1].L)
    output.num_blocks(m, n)

    maps = px[:, None]
    layers = []
    for s, cfg in enumerate(layer_configs, start=1):
        log.info("fitting layer %d on %d maps (K=%d, L=%d, %dx%d)",
                 s, maps.shape[0] * maps.shape[1], cfg.K, cfg.L, cfg.h1, cfg.h2)
        layer = fit_layer(maps.reshape(-1, m, n), cfg)
        layers.append(layer)
        if on_layer is not None:
            on_layer(s, layer)
        maps = _apply_layer(layer, maps)
    return TrainedModel(tuple(layers), output, m, n), maps


def feature_maps(model: TrainedModel, images) -> np.ndarray:
    """Run every layer with frozen parameters: (N, Gamma_S, m, n)."""
    px = _pixels(images)
    if px.shape[1:] != (model.m, model.n):
        raise ValueError(f"images are {px.shape[1:]}, model expects {(model.m, model.n)}")
    maps = px[:, None]
    for layer in model.layers:
        maps = _apply_layer(layer, maps)
    return maps


def transform(model: TrainedModel, images) -> np.ndarray:
    """(N, feature_dim) int64 histogram features."""
    px = _pixels(images)
    if px.shape[1:] != (model.m, model.n):
        raise ValueError(f"images are {px.shape[1:]}, model expects {(model.m, model.n)}")
    out = np.empty((px.shape[0], model.feature_dim), dtype=np.int64)
    for i in range(0, px.shape[0], BATCH_IMAGES):
        j = min(i + BATCH_IMAGES, px.shape[0])
        out[i:j] = encode_batch(feature_maps(model, px[i:j]), model.output)
    return out


def encode_maps(model: TrainedModel, maps: np.ndarray) -> np.ndarray:
    """Histogram features from final maps already computed (e.g. by ``fit``)."""
    return encode_batch(maps, model.output)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def _pack_array(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def dumps(model: TrainedModel) -> bytes:
    parts = [MODEL_MAGIC, struct.pack("<IIII", FORMAT_VERSION, model.m, model.n, model.S)]
    for layer in model.layers:
        c = layer.config
        parts.append(struct.pack("<IIII", c.h1, c.h2, c.K, c.L))
        parts += [_pack_array(layer.antecedent.centers), _pack_array(layer.antecedent.widths),
                  _pack_array(layer.bank.P), _pack_array(layer.bank.eigenvalues)]
    o = model.output
    parts.append(struct.pack("<IIdI", o.block_h1, o.block_h2, o.cr, o.bits))
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, size: int) -> bytes:
        if self.pos + size > len(self.buf):
            raise FormatError("model file is truncated")
        chunk = self.buf[self.pos:self.pos + size]
        self.pos += size
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def array(self, *shape) -> np.ndarray:
        count = int(np.prod(shape))
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64).reshape(shape)


def loads(buf: bytes) -> TrainedModel:
    r = _Reader(buf)
    if r.take(4) != MODEL_MAGIC:
        raise FormatError("not a model file (bad magic)")
    version, m, n, S = r.unpack("<IIII")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"unsupported model format version {version}")
    layers = []
    for _ in range(S):
        h1, h2, K, L = r.unpack("<IIII")
        try:
            cfg = LayerConfig(K, L, h1, h2)
        except ValueError as exc:
            raise FormatError(f"corrupt layer header: {exc}") from exc
        d = h1 * h2
        centers = r.array(K, d)
        widths = r.array(K, d)
        P = r.array(K * (d + 1), L)
        ev = r.array(L)
        layers.append(LayerModel(FuzzyAntecedent(centers, widths), ProjectionBank(P, ev), cfg))
    bh1, bh2, cr, bits = r.unpack("<IIdI")
    if r.pos != len(buf):
        raise FormatError("trailing bytes after model")
    try:
        return TrainedModel(tuple(layers), HistogramConfig(bh1, bh2, cr, bits), m, n)
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


def save(model: TrainedModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(model))


def load(path) -> TrainedModel:
    with open(path, "rb") as fh:
        return loads(fh.read())


def save_features(F: np.ndarray, path) -> None:
    """Write raw (pre-normalization) counts: magic, version, N, dim, u32 rows."""
    F = np.asarray(F)
    if F.ndim != 2:
        raise ValueError("features must be (N, dim)")
    if F.size and (F.min() < 0 or F.max() > 0xFFFFFFFF):
        raise ValueError("feature counts do not fit in u32")
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC + struct.pack("<IQQ", FORMAT_VERSION, *F.shape))
        fh.write(F.astype("<u4").tobytes())


def load_features(path) -> np.ndarray:
    with open(path, "rb") as fh:
        buf = fh.read()
    r = _Reader(buf)
    if r.take(4) != FEATURE_MAGIC:
        raise FormatError("not a feature file (bad magic)")
    version, N, dim = r.unpack("<IQQ")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"unsupported feature format version {version}")
    body = r.take(4 * N * dim)
    if r.pos != len(buf):
        raise FormatError("trailing bytes after features")
    return np.frombuffer(body, dtype="<u4").astype(np.int64).reshape(N, dim)
