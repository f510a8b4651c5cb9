"""Hot numeric kernels, each in a numba and a pure-numpy flavour.

The public names at the bottom dispatch on ``difl._backend.USE_NUMBA`` at
call time. Both flavours implement the same arithmetic; they agree to
rounding but are not guaranteed bit-identical to each other. Each flavour
on its own is deterministic.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import _backend
from ._backend import njit


# ---------------------------------------------------------------------------
# patch extraction
# ---------------------------------------------------------------------------

@njit(cache=True)
def _patches_nb(images, h1, h2):
    N, m, n = images.shape
    r1 = (h1 - 1) // 2
    r2 = (h2 - 1) // 2
    out = np.zeros((N * m * n, h1 * h2))
    col = 0
    for i in range(N):
        for r in range(m):
            for c in range(n):
                k = 0
                for a in range(h1):
                    rr = r + a - r1
                    for b in range(h2):
                        cc = c + b - r2
                        if 0 <= rr < m and 0 <= cc < n:
                            out[col, k] = images[i, rr, cc]
                        k += 1
                col += 1
    return out


def _patches_np(images, h1, h2):
    N, m, n = images.shape
    r1 = (h1 - 1) // 2
    r2 = (h2 - 1) // 2
    padded = np.pad(images, ((0, 0), (r1, r1), (r2, r2)))
    win = sliding_window_view(padded, (h1, h2), axis=(1, 2))
    return np.ascontiguousarray(win.reshape(N * m * n, h1 * h2), dtype=np.float64)


# ---------------------------------------------------------------------------
# normalized firing levels
# ---------------------------------------------------------------------------

@njit(cache=True)
def _firing_nb(X, centers, widths):
    c, d = X.shape
    K = centers.shape[0]
    out = np.empty((c, K))
    for j in range(c):
        best = -np.inf
        for k in range(K):
            acc = 0.0
            for p in range(d):
                diff = X[j, p] - centers[k, p]
                acc += diff * diff / (2.0 * widths[k, p])
            out[j, k] = -acc
            if -acc > best:
                best = -acc
        total = 0.0
        for k in range(K):
            e = np.exp(out[j, k] - best)
            out[j, k] = e
            total += e
        for k in range(K):
            out[j, k] /= total
    return out


def _firing_np(X, centers, widths):
    diff = X[:, None, :] - centers[None, :, :]
    logf = -np.sum(diff * diff / (2.0 * widths[None, :, :]), axis=2)
    logf -= logf.max(axis=1, keepdims=True)
    np.exp(logf, out=logf)
    logf /= logf.sum(axis=1, keepdims=True)
    return logf


# ---------------------------------------------------------------------------
# lifting (centered) and fused lift + center + project
# ---------------------------------------------------------------------------

@njit(cache=True)
def _lift_centered_nb(X, mu):
    c, d = X.shape
    K = mu.shape[1]
    D = K * (d + 1)
    out = np.empty((c, D))
    for j in range(c):
        s = 0.0
        for k in range(K):
            base = k * (d + 1)
            out[j, base] = mu[j, k]
            s += mu[j, k]
            for p in range(d):
                v = mu[j, k] * X[j, p]
                out[j, base + 1 + p] = v
                s += v
        mean = s / D
        for q in range(D):
            out[j, q] -= mean
    return out


def _lift_centered_np(X, mu):
    c, d = X.shape
    K = mu.shape[1]
    xe = np.empty((c, d + 1))
    xe[:, 0] = 1.0
    xe[:, 1:] = X
    G = (mu[:, :, None] * xe[:, None, :]).reshape(c, K * (d + 1))
    G -= G.mean(axis=1, keepdims=True)
    return G


@njit(cache=True)
def _lift_project_nb(X, mu, P):
    c, d = X.shape
    K = mu.shape[1]
    D = K * (d + 1)
    L = P.shape[1]
    out = np.zeros((c, L))
    g = np.empty(D)
    for j in range(c):
        s = 0.0
        for k in range(K):
            base = k * (d + 1)
            g[base] = mu[j, k]
            s += mu[j, k]
            for p in range(d):
                v = mu[j, k] * X[j, p]
                g[base + 1 + p] = v
                s += v
        mean = s / D
        for q in range(D):
            g[q] -= mean
        for l in range(L):
            acc = 0.0
            for q in range(D):
                acc += g[q] * P[q, l]
            out[j, l] = acc
    return out


def _lift_project_np(X, mu, P):
    return _lift_centered_np(X, mu) @ P


# ---------------------------------------------------------------------------
# cyclic Jacobi eigensolver
# ---------------------------------------------------------------------------

@njit(cache=True)
def _jacobi_nb(A, tol, max_sweeps):
    n = A.shape[0]
    A = A.copy()
    V = np.eye(n)
    norm = 0.0
    for i in range(n):
        for j in range(n):
            norm += A[i, j] * A[i, j]
    norm = np.sqrt(norm)
    sweeps = 0
    while sweeps < max_sweeps:
        off = 0.0
        for i in range(n):
            for j in range(n):
                if i != j:
                    off += A[i, j] * A[i, j]
        if np.sqrt(off) < tol * norm or off == 0.0:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                tau = (A[q, q] - A[p, p]) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                cs = 1.0 / np.sqrt(1.0 + t * t)
                sn = t * cs
                for k in range(n):
                    akp = A[k, p]
                    akq = A[k, q]
                    A[k, p] = cs * akp - sn * akq
                    A[k, q] = sn * akp + cs * akq
                for k in range(n):
                    apk = A[p, k]
                    aqk = A[q, k]
                    A[p, k] = cs * apk - sn * aqk
                    A[q, k] = sn * apk + cs * aqk
                A[p, q] = 0.0
                A[q, p] = 0.0
                for k in range(n):
                    vkp = V[k, p]
                    vkq = V[k, q]
                    V[k, p] = cs * vkp - sn * vkq
                    V[k, q] = sn * vkp + cs * vkq
        sweeps += 1
    w = np.empty(n)
    for i in range(n):
        w[i] = A[i, i]
    return w, V, sweeps


def _jacobi_np(A, tol, max_sweeps):
    n = A.shape[0]
    A = np.array(A, dtype=np.float64, copy=True)
    V = np.eye(n)
    norm = np.sqrt(np.sum(A * A))
    sweeps = 0
    while sweeps < max_sweeps:
        offd = A - np.diag(np.diag(A))
        off = float(np.sum(offd * offd))
        if np.sqrt(off) < tol * norm or off == 0.0:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                tau = (A[q, q] - A[p, p]) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                cs = 1.0 / np.sqrt(1.0 + t * t)
                sn = t * cs
                colp = A[:, p].copy()
                colq = A[:, q]
                A[:, p] = cs * colp - sn * colq
                A[:, q] = sn * colp + cs * colq
                rowp = A[p, :].copy()
                rowq = A[q, :]
                A[p, :] = cs * rowp - sn * rowq
                A[q, :] = sn * rowp + cs * rowq
                A[p, q] = 0.0
                A[q, p] = 0.0
                vp = V[:, p].copy()
                vq = V[:, q]
                V[:, p] = cs * vp - sn * vq
                V[:, q] = sn * vp + cs * vq
        sweeps += 1
    return np.diag(A).copy(), V, sweeps


# ---------------------------------------------------------------------------
# block-wise histograms
# ---------------------------------------------------------------------------

@njit(cache=True)
def _block_hist_nb(T, bh1, bh2, step_r, step_c, nbins):
    G, m, n = T.shape
    nr = (m - bh1) // step_r + 1
    nc = (n - bh2) // step_c + 1
    out = np.zeros((G, nr * nc * nbins), dtype=np.int64)
    for g in range(G):
        b = 0
        for br in range(nr):
            r0 = br * step_r
            for bc in range(nc):
                c0 = bc * step_c
                base = b * nbins
                for r in range(r0, r0 + bh1):
                    for c in range(c0, c0 + bh2):
                        out[g, base + T[g, r, c]] += 1
                b += 1
    return out


def _block_hist_np(T, bh1, bh2, step_r, step_c, nbins):
    G = T.shape[0]
    win = sliding_window_view(T, (bh1, bh2), axis=(1, 2))[:, ::step_r, ::step_c]
    nr, nc = win.shape[1], win.shape[2]
    B = nr * nc
    vals = win.reshape(G * B, bh1 * bh2).astype(np.int64)
    vals += (np.arange(G * B, dtype=np.int64) * nbins)[:, None]
    counts = np.bincount(vals.ravel(), minlength=G * B * nbins)
    return counts.reshape(G, B * nbins)


# ---------------------------------------------------------------------------
# one-vs-rest Pegasos
# ---------------------------------------------------------------------------

@njit(cache=True)
def _pegasos_nb(X, y, n_classes, lam, order, epoch_len, track):
    n, D = X.shape
    v = np.zeros((n_classes, D))
    scale = np.ones(n_classes)
    n_epochs = order.shape[0] // epoch_len
    history = np.zeros(n_epochs)
    t = 0
    for step in range(order.shape[0]):
        idx = order[step]
        t += 1
        eta = 1.0 / (lam * t)
        shrink = 1.0 - 1.0 / t
        for c in range(n_classes):
            yc = 1.0 if y[idx] == c else -1.0
            dot = 0.0
            for p in range(D):
                dot += v[c, p] * X[idx, p]
            margin = yc * scale[c] * dot
            scale[c] *= shrink
            if scale[c] == 0.0:
                for p in range(D):
                    v[c, p] = 0.0
                scale[c] = 1.0
            if margin < 1.0:
                coef = eta * yc / scale[c]
                for p in range(D):
                    v[c, p] += coef * X[idx, p]
        if track and (step + 1) % epoch_len == 0:
            history[(step + 1) // epoch_len - 1] = _objective_nb(X, y, v, scale, lam)
    W = np.empty((n_classes, D))
    for c in range(n_classes):
        for p in range(D):
            W[c, p] = scale[c] * v[c, p]
    return W, history


@njit(cache=True)
def _objective_nb(X, y, v, scale, lam):
    n, D = X.shape
    C = v.shape[0]
    total = 0.0
    for c in range(C):
        sq = 0.0
        for p in range(D):
            sq += v[c, p] * v[c, p]
        total += 0.5 * lam * scale[c] * scale[c] * sq
        loss = 0.0
        for i in range(n):
            yc = 1.0 if y[i] == c else -1.0
            dot = 0.0
            for p in range(D):
                dot += v[c, p] * X[i, p]
            h = 1.0 - yc * scale[c] * dot
            if h > 0.0:
                loss += h
        total += loss / n
    return total


def _objective_np(X, y, W, lam):
    C = W.shape[0]
    Y = np.where(y[:, None] == np.arange(C)[None, :], 1.0, -1.0)
    hinge = np.maximum(0.0, 1.0 - Y * (X @ W.T))
    return float(0.5 * lam * np.sum(W * W) + hinge.mean(axis=0).sum())


def _pegasos_np(X, y, n_classes, lam, order, epoch_len, track):
    n, D = X.shape
    v = np.zeros((n_classes, D))
    scale = np.ones(n_classes)
    classes = np.arange(n_classes)
    n_epochs = order.shape[0] // epoch_len
    history = np.zeros(n_epochs)
    for step, idx in enumerate(order):
        t = step + 1
        eta = 1.0 / (lam * t)
        x = X[idx]
        yc = np.where(classes == y[idx], 1.0, -1.0)
        margin = yc * scale * (v @ x)
        scale *= 1.0 - 1.0 / t
        dead = scale == 0.0
        if dead.any():
            v[dead] = 0.0
            scale[dead] = 1.0
        hit = margin < 1.0
        if hit.any():
            v[hit] += np.outer(eta * yc[hit] / scale[hit], x)
        if track and t % epoch_len == 0:
            history[t // epoch_len - 1] = _objective_np(X, y, scale[:, None] * v, lam)
    return scale[:, None] * v, history


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def extract_patches(images, h1, h2):
    """(N, m, n) images -> (N*m*n, h1*h2) zero-padded centred windows."""
    images = np.ascontiguousarray(images, dtype=np.float64)
    if _backend.USE_NUMBA:
        return _patches_nb(images, int(h1), int(h2))
    return _patches_np(images, h1, h2)


def firing(X, centers, widths):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if _backend.USE_NUMBA:
        return _firing_nb(X, np.ascontiguousarray(centers), np.ascontiguousarray(widths))
    return _firing_np(X, centers, widths)


def lift_centered(X, mu):
    """Rows of ``X`` lifted by firing levels ``mu``, each row mean-removed."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if _backend.USE_NUMBA:
        return _lift_centered_nb(X, np.ascontiguousarray(mu))
    return _lift_centered_np(X, mu)


def lift_project(X, mu, P):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if _backend.USE_NUMBA:
        return _lift_project_nb(X, np.ascontiguousarray(mu), np.ascontiguousarray(P))
    return _lift_project_np(X, mu, P)


def jacobi(A, tol=1e-12, max_sweeps=100):
    """Unsorted eigenvalues, eigenvector columns and sweep count of symmetric ``A``."""
    A = np.ascontiguousarray(A, dtype=np.float64)
    if _backend.USE_NUMBA:
        return _jacobi_nb(A, float(tol), int(max_sweeps))
    return _jacobi_np(A, tol, max_sweeps)


def block_hist(T, bh1, bh2, step_r, step_c, nbins):
    """(G, m, n) integer images -> (G, B*nbins) block histogram counts."""
    T = np.ascontiguousarray(T, dtype=np.int64)
    if _backend.USE_NUMBA:
        return _block_hist_nb(T, int(bh1), int(bh2), int(step_r), int(step_c), int(nbins))
    return _block_hist_np(T, bh1, bh2, step_r, step_c, nbins)


def pegasos(X, y, n_classes, lam, order, epoch_len, track=False):
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    order = np.ascontiguousarray(order, dtype=np.int64)
    if _backend.USE_NUMBA:
        return _pegasos_nb(X, y, int(n_classes), float(lam), order, int(epoch_len), bool(track))
    return _pegasos_np(X, y, n_classes, lam, order, epoch_len, track)
