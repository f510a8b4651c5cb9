import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from difl.classifier import (LinearModel, accuracy, decision_function, fit_svm, l2_normalize,
                             predict, raw_features)


def separable_points(n, seed, margin=0.5):
    """Two classes on either side of a random line, at least ``margin`` away."""
    rng = np.random.default_rng(seed)
    w = rng.normal(size=2)
    w /= np.linalg.norm(w)
    X, y = [], []
    while len(X) < n:
        p = rng.uniform(-5, 5, 2)
        s = float(p @ w)
        if abs(s) >= margin:
            X.append(p)
            y.append(int(s > 0))
    return np.array(X), np.array(y)


def test_separable_pair(backend):
    model = fit_svm(np.array([[1.0, 0.0], [0.0, 1.0]]), [0, 1], lam=1e-4, epochs=50)
    assert predict(model, [[1.0, 0.0], [0.0, 1.0]]).tolist() == [0, 1]


def test_determinism():
    X, y = separable_points(60, 1)
    a, b = fit_svm(X, y, seed=3), fit_svm(X, y, seed=3)
    assert a.weights.tobytes() == b.weights.tobytes() and a.bias.tobytes() == b.bias.tobytes()


@pytest.mark.parametrize("seed", range(3))
def test_separable_generator_fully_fit(backend, seed):
    X, y = separable_points(200, seed)
    model = fit_svm(X, y, lam=1e-4, epochs=50, normalize=False)
    assert accuracy(predict(model, X), y) == 1.0


def test_single_class_rejected():
    with pytest.raises(ValueError):
        fit_svm(np.zeros((3, 2)), [1, 1, 1])


def test_predict_examples():
    m = LinearModel(np.eye(2), np.zeros(2), normalize=False)
    assert predict(m, [[1.0, 0.0]]).tolist() == [0]
    zero = LinearModel(np.zeros((3, 2)), np.zeros(3), normalize=False)
    assert predict(zero, np.random.default_rng(0).normal(size=(5, 2))).tolist() == [0] * 5
    with pytest.raises(ValueError):
        predict(m, [[1.0, 0.0, 0.0]])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.floats(1e-3, 1e3))
def test_predict_scale_invariant(seed, c):
    rng = np.random.default_rng(seed)
    m = LinearModel(rng.normal(size=(4, 3)), rng.normal(size=4), normalize=False)
    scaled = LinearModel(m.weights * c, m.bias * c, normalize=False)
    X = rng.normal(size=(20, 3))
    np.testing.assert_array_equal(predict(m, X), predict(scaled, X))


@pytest.mark.parametrize("seed", range(3))
def test_beats_majority_oracle(seed):
    rng = np.random.default_rng(seed)
    y = rng.choice(3, size=90, p=[0.5, 0.3, 0.2])
    X = rng.normal(size=(90, 5)) + y[:, None] * 0.3
    majority = np.bincount(y).max() / y.size
    assert accuracy(predict(fit_svm(X, y), X), y) >= majority


def test_objective_decreases_on_separable_set():
    X, y = separable_points(200, 7)
    hist = fit_svm(X, y, epochs=20, track_objective=True).history
    assert hist.shape == (20,)
    # non-strict decrease of the epoch-averaged objective: compare halves
    assert hist[10:].mean() <= hist[:10].mean()
    assert hist[-1] <= hist[0]


def test_accuracy_examples():
    assert accuracy([1, 2, 3], [1, 2, 3]) == 1.0
    assert accuracy([0, 0], [1, 1]) == 0.0
    assert accuracy([0, 1, 1, 0], [0, 1, 0, 0]) == 0.75
    with pytest.raises(ValueError):
        accuracy([0], [0, 1])


def test_normalize_and_raw_features():
    F = l2_normalize(np.array([[3.0, 4.0], [0.0, 0.0]]))
    np.testing.assert_allclose(F, [[0.6, 0.8], [0.0, 0.0]])
    assert raw_features(np.zeros((2, 3, 4))).shape == (2, 12)
    m = fit_svm(np.array([[1.0, 0.0], [0.0, 1.0]]), [0, 1])
    assert decision_function(m, [1.0, 0.0]).shape == (1, 2)
