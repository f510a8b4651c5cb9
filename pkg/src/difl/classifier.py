"""One-vs-rest linear SVM trained with Pegasos, and the raw-pixel baseline."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels

DEFAULT_LAMBDA = 1e-4
DEFAULT_EPOCHS = 20


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray  # (num_classes, dim)
    bias: np.ndarray     # (num_classes,)
    lam: float = DEFAULT_LAMBDA
    epochs: int = DEFAULT_EPOCHS
    seed: int = 0
    normalize: bool = True
    history: np.ndarray = field(default=None, compare=False, repr=False)

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


def l2_normalize(F) -> np.ndarray:
    F = np.asarray(F, dtype=np.float64)
    norms = np.linalg.norm(F, axis=1, keepdims=True)
    return F / np.where(norms > 0, norms, 1.0)


def fit_svm(F, labels, lam: float = DEFAULT_LAMBDA, epochs: int = DEFAULT_EPOCHS,
            seed: int = 0, normalize: bool = True, track_objective: bool = False) -> LinearModel:
    """Pegasos with step 1/(lam*t) on a seeded per-epoch shuffle.

    The bias is learned as the weight of an appended constant-1 feature.
    With ``track_objective`` the regularized hinge objective is recorded at
    the end of every epoch in ``model.history``.
    """
    y = np.asarray(labels, dtype=np.int64)
    X = l2_normalize(F) if normalize else np.asarray(F, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError(f"{X.shape[0]} feature rows for {y.shape[0]} labels")
    if np.unique(y).size < 2:
        raise ValueError("need at least two classes")
    if lam <= 0 or epochs < 1:
        raise ValueError("lam must be > 0 and epochs >= 1")
    n = X.shape[0]
    Xa = np.hstack([X, np.ones((n, 1))])
    rng = np.random.default_rng(seed)
    order = np.concatenate([rng.permutation(n) for _ in range(epochs)])
    W, history = kernels.pegasos(Xa, y, int(y.max()) + 1, lam, order, n, track_objective)
    return LinearModel(W[:, :-1].copy(), W[:, -1].copy(), lam, epochs, seed, normalize,
                       history if track_objective else None)


def decision_function(model: LinearModel, F) -> np.ndarray:
    X = np.asarray(F, dtype=np.float64)
    if X.ndim == 1:
        X = X[None]
    if X.shape[1] != model.dim:
        raise ValueError(f"features have dim {X.shape[1]}, model expects {model.dim}")
    if model.normalize:
        X = l2_normalize(X)
    return X @ model.weights.T + model.bias


def predict(model: LinearModel, F) -> np.ndarray:
    """Argmax class score; np.argmax resolves ties to the lowest class."""
    return np.argmax(decision_function(model, F), axis=1)


def accuracy(pred, truth) -> float:
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {truth.shape}")
    if pred.size == 0:
        raise ValueError("empty label sequences")
    return float(np.mean(pred == truth))


def raw_features(images) -> np.ndarray:
    """Flattened pixels, the 'no feature extraction' baseline."""
    px = getattr(images, "pixels", images)
    px = np.asarray(px, dtype=np.float64)
    return px.reshape(px.shape[0], -1)
