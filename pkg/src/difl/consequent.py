"""Consequent parameters of the multi-output TSK system via variance
maximization: per-vector centering, covariance, Jacobi eigensolve, projection."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .antecedent import LiftedMatrix

SYMMETRY_TOL = 1e-10
JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100


@dataclass(frozen=True)
class ProjectionBank:
    P: np.ndarray            # (K*(d+1), L), orthonormal columns
    eigenvalues: np.ndarray  # (L,), descending

    def __post_init__(self):
        P = np.array(self.P, dtype=np.float64)
        ev = np.array(self.eigenvalues, dtype=np.float64)
        if P.ndim != 2 or ev.shape != (P.shape[1],):
            raise ValueError(f"P {P.shape} and eigenvalues {ev.shape} disagree")
        P.flags.writeable = False
        ev.flags.writeable = False
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "eigenvalues", ev)

    @property
    def L(self) -> int:
        return self.P.shape[1]


def _data(G):
    return G.data if isinstance(G, LiftedMatrix) else np.asarray(G, dtype=np.float64)


def center_columns(G):
    """Subtract from every column the scalar mean of its own entries."""
    data = _data(G)
    out = data - data.mean(axis=0, keepdims=True)
    if isinstance(G, LiftedMatrix):
        return LiftedMatrix(out, G.K, G.d)
    return out


def covariance(Gbar) -> np.ndarray:
    """Gbar Gbar^T divided by the number of columns (no Bessel correction)."""
    data = _data(Gbar)
    if data.ndim != 2 or data.shape[1] < 1:
        raise ValueError("covariance needs at least one column")
    C = data @ data.T / data.shape[1]
    return 0.5 * (C + C.T)


class CovarianceAccumulator:
    """Streams mean-removed lifted rows into sum(g g^T) in a fixed order."""

    def __init__(self, dim: int):
        self.S = np.zeros((dim, dim))
        self.n = 0

    def add(self, rows: np.ndarray):
        # rows: (c, dim), one centred lifted vector per row
        self.S += rows.T @ rows
        self.n += rows.shape[0]

    def result(self) -> np.ndarray:
        if self.n == 0:
            raise ValueError("no columns accumulated")
        C = self.S / self.n
        return 0.5 * (C + C.T)


def _sign_fix(V: np.ndarray) -> np.ndarray:
    # largest-magnitude entry positive; argmax picks the lowest index on ties
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.where(V[idx, np.arange(V.shape[1])] < 0, -1.0, 1.0)
    return V * signs


def eigh_jacobi(C, tol: float = JACOBI_TOL, max_sweeps: int = JACOBI_MAX_SWEEPS):
    """All eigenpairs of symmetric C, descending, with the sign convention applied."""
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError(f"expected a square matrix, got {C.shape}")
    scale = max(1.0, float(np.max(np.abs(C)))) if C.size else 1.0
    if np.max(np.abs(C - C.T), initial=0.0) > SYMMETRY_TOL * scale:
        raise ValueError("matrix is not symmetric")
    w, V, _ = kernels.jacobi(C, tol, max_sweeps)
    order = np.argsort(-w, kind="stable")
    return w[order], _sign_fix(V[:, order])


def top_eigs(C, L: int) -> ProjectionBank:
    C = np.asarray(C, dtype=np.float64)
    if not 1 <= L <= C.shape[0]:
        raise ValueError(f"L must lie in [1, {C.shape[0]}], got {L}")
    w, V = eigh_jacobi(C)
    return ProjectionBank(V[:, :L].copy(), w[:L].copy())


def project(bank: ProjectionBank, Gbar) -> np.ndarray:
    """Z = P^T Gbar; row l is the l-th rule-system output for every column."""
    data = _data(Gbar)
    if data.shape[0] != bank.P.shape[0]:
        raise ValueError(f"lifted dim {data.shape[0]} != bank dim {bank.P.shape[0]}")
    return bank.P.T @ data
