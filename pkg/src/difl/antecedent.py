"""TSK rule antecedents: Var-Part clustering, Gaussian kernel widths, firing
levels and the lift of patch columns into the rule-weighted hidden space."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DegenerateClusteringWarning
from .patching import CHUNK_COLUMNS, PatchMatrix

WIDTH_LO = 1.0
WIDTH_HI = 10.0


@dataclass(frozen=True)
class FuzzyAntecedent:
    centers: np.ndarray  # (K, d)
    widths: np.ndarray   # (K, d), already rescaled into [1, 10]

    def __post_init__(self):
        c = np.array(self.centers, dtype=np.float64)
        w = np.array(self.widths, dtype=np.float64)
        if c.ndim != 2 or c.shape != w.shape or c.shape[0] < 1:
            raise ValueError(f"centers {c.shape} and widths {w.shape} must both be (K, d)")
        if not np.all(w > 0):
            raise ValueError("kernel widths must be strictly positive")
        c.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "widths", w)

    @property
    def K(self) -> int:
        return self.centers.shape[0]

    @property
    def d(self) -> int:
        return self.centers.shape[1]


@dataclass(frozen=True)
class LiftedMatrix:
    """K*(d+1) x columns; rule block k holds mu_k * (1, x)."""

    data: np.ndarray
    K: int
    d: int


class DenseColumns:
    """Adapter giving an in-memory (d, cols) matrix the PatchMatrix chunk API."""

    def __init__(self, data):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim == 1:
            data = data[None]
        if data.ndim != 2:
            raise ValueError(f"expected a (d, cols) matrix, got {data.shape}")
        self.data = data

    @property
    def rows(self):
        return self.data.shape[0]

    @property
    def cols(self):
        return self.data.shape[1]

    def chunks(self, max_cols=CHUNK_COLUMNS):
        for s in range(0, self.cols, max_cols):
            yield s, np.ascontiguousarray(self.data[:, s:s + max_cols].T)


def as_columns(data):
    if isinstance(data, (PatchMatrix, DenseColumns)):
        return data
    return DenseColumns(data)


def _centered_ss(src, labels, groups, means):
    """Per-dimension sum of squared deviations for each cluster id in ``groups``."""
    ss = {g: np.zeros(src.rows) for g in groups}
    for start, X in src.chunks():
        lab = labels[start:start + X.shape[0]]
        for g in groups:
            sel = X[lab == g]
            if sel.shape[0]:
                dev = sel - means[g]
                ss[g] += np.einsum("ij,ij->j", dev, dev)
    return ss


def var_part(data, K: int, return_labels: bool = False):
    """Deterministic divisive clustering into K clusters.

    Repeatedly takes the cluster with the largest within-cluster SSE, finds
    its highest-variance dimension and sends every member whose value there
    is <= the cluster mean to the first child, the rest to the second. The
    first child keeps the parent's slot, the second is appended. Ties go to
    the lowest cluster index / dimension.

    ``data`` is a PatchMatrix or a (d, cols) array. Returns the (K, d) centre
    matrix, plus the per-column cluster labels if ``return_labels``.
    """
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    src = as_columns(data)
    d, N = src.rows, src.cols
    if N == 0:
        raise ValueError("var_part needs at least one column")
    labels = np.zeros(N, dtype=np.int32)

    total = np.zeros(d)
    for _, X in src.chunks():
        total += X.sum(axis=0)
    means = [total / N]
    counts = [N]
    ss = [_centered_ss(src, labels, [0], {0: means[0]})[0]]
    splittable = [True]

    while len(means) < K:
        sse = np.array([s.sum() if ok else -np.inf for s, ok in zip(ss, splittable)])
        j = int(np.argmax(sse))
        if not np.isfinite(sse[j]):
            # nothing left to split: pad with copies of the last real centre
            warnings.warn("all clusters are single points; duplicating centres",
                          DegenerateClusteringWarning, stacklevel=2)
            while len(means) < K:
                means.append(means[j].copy())
                counts.append(0)
                ss.append(np.zeros(d))
                splittable.append(False)
            break
        dim = int(np.argmax(ss[j]))
        thr = means[j][dim]
        new = len(means)
        sum_a, sum_b = np.zeros(d), np.zeros(d)
        n_a = n_b = 0
        for start, X in src.chunks():
            lab = labels[start:start + X.shape[0]]
            in_j = lab == j
            go_b = in_j & (X[:, dim] > thr)
            stay = in_j & ~go_b
            lab[go_b] = new
            n_a += int(stay.sum())
            n_b += int(go_b.sum())
            sum_a += X[stay].sum(axis=0)
            sum_b += X[go_b].sum(axis=0)
        if n_a == 0 or n_b == 0:
            warnings.warn(f"cluster {j} cannot be split; duplicating its centre",
                          DegenerateClusteringWarning, stacklevel=2)
            if n_a == 0:
                labels[labels == new] = j
            splittable[j] = False
            means.append(means[j].copy())
            counts.append(0)
            ss.append(np.zeros(d))
            splittable.append(False)
            continue
        means[j] = sum_a / n_a
        means.append(sum_b / n_b)
        counts[j] = n_a
        counts.append(n_b)
        fresh = _centered_ss(src, labels, [j, new], {j: means[j], new: means[new]})
        ss[j] = fresh[j]
        ss.append(fresh[new])
        splittable.append(True)

    centers = np.stack(means)
    if return_labels:
        return centers, labels
    return centers


def raw_kernel_widths(data, centers) -> np.ndarray:
    """D[k, p] = sum over every column of (x_p - C[k, p])**2."""
    src = as_columns(data)
    centers = np.asarray(centers, dtype=np.float64)
    raw = np.zeros_like(centers)
    for _, X in src.chunks():
        for k in range(centers.shape[0]):
            dev = X - centers[k]
            raw[k] += np.einsum("ij,ij->j", dev, dev)
    return raw


def scale_widths(raw) -> np.ndarray:
    """Per dimension, map the K raw widths affinely onto [1, 10]; flat -> 5.5."""
    raw = np.asarray(raw, dtype=np.float64)
    lo = raw.min(axis=0)
    hi = raw.max(axis=0)
    span = hi - lo
    flat = span == 0
    scaled = WIDTH_LO + (WIDTH_HI - WIDTH_LO) * (raw - lo) / np.where(flat, 1.0, span)
    scaled[:, flat] = 0.5 * (WIDTH_LO + WIDTH_HI)
    return scaled


def kernel_widths(data, centers) -> np.ndarray:
    return scale_widths(raw_kernel_widths(data, centers))


def fit_antecedent(data, K: int) -> FuzzyAntecedent:
    src = as_columns(data)
    centers = var_part(src, K)
    return FuzzyAntecedent(centers, kernel_widths(src, centers))


def memberships(x, antecedent: FuzzyAntecedent) -> np.ndarray:
    """Unnormalized rule firing levels prod_p exp(-(x_p - c)^2 / (2 delta)).

    May underflow to zero for far-away inputs; use ``firing_levels`` for the
    normalized (always well-defined) version.
    """
    x = np.asarray(x, dtype=np.float64)
    dev = x[None, :] - antecedent.centers
    return np.exp(-np.sum(dev * dev / (2.0 * antecedent.widths), axis=1))


def firing_levels(x, antecedent: FuzzyAntecedent) -> np.ndarray:
    """Normalized firing levels of one input vector (length K, sums to 1)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (antecedent.d,):
        raise ValueError(f"input has shape {x.shape}, antecedent expects ({antecedent.d},)")
    return kernels.firing(x[None], antecedent.centers, antecedent.widths)[0]


def firing_matrix(X, antecedent: FuzzyAntecedent) -> np.ndarray:
    """Normalized firing levels for rows of a (cols, d) array."""
    return kernels.firing(X, antecedent.centers, antecedent.widths)


def lift(patches, antecedent: FuzzyAntecedent) -> LiftedMatrix:
    """Map every column x to the stacked blocks mu_k(x) * (1, x) for k = 1..K."""
    src = as_columns(patches)
    if src.rows != antecedent.d:
        raise ValueError(f"patch dim {src.rows} != antecedent dim {antecedent.d}")
    K, d = antecedent.K, antecedent.d
    out = np.empty((K * (d + 1), src.cols))
    for start, X in src.chunks():
        mu = firing_matrix(X, antecedent)
        xe = np.hstack([np.ones((X.shape[0], 1)), X])
        block = (mu[:, :, None] * xe[:, None, :]).reshape(X.shape[0], -1)
        out[:, start:start + X.shape[0]] = block.T
    return LiftedMatrix(out, K, d)
