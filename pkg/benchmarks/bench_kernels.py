"""Time every hot kernel under the numba and the numpy backend.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Shapes follow a two-layer 28x28 model (7x7 patches, K=3, L=8) applied to a
batch of 32 images. Numba compile time is excluded by a warm-up call.
"""
import argparse
import time

import numpy as np

from difl import _backend, kernels


def cases(rng):
    imgs = rng.uniform(0, 255, (32, 28, 28))
    X = kernels.extract_patches(imgs, 7, 7)
    C = rng.uniform(0, 255, (3, 49))
    D = rng.uniform(1, 10, (3, 49))
    mu = kernels.firing(X, C, D)
    P = np.linalg.qr(rng.normal(size=(150, 8)))[0]
    B = rng.normal(size=(150, 150))
    T = rng.integers(0, 256, (256, 28, 28))
    F = np.hstack([rng.normal(size=(500, 2000)), np.ones((500, 1))])
    y = rng.integers(0, 10, 500)
    order = np.concatenate([rng.permutation(500) for _ in range(5)])
    return {
        "extract_patches 32x28x28, 7x7": lambda: kernels.extract_patches(imgs, 7, 7),
        "firing 25088x49, K=3": lambda: kernels.firing(X, C, D),
        "lift_centered 25088 -> 150": lambda: kernels.lift_centered(X, mu),
        "lift_project 25088 -> 8": lambda: kernels.lift_project(X, mu, P),
        "jacobi 150x150": lambda: kernels.jacobi(B + B.T),
        "block_hist 256 images, 256 bins": lambda: kernels.block_hist(T, 7, 7, 3, 3, 256),
        "pegasos 500x2001, 10 classes, 5 ep": lambda: kernels.pegasos(F, y, 10, 1e-4, order, 500),
    }


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _backend.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    rows = []
    for name, fn in cases(np.random.default_rng(0)).items():
        timings = {}
        for b in ("numba", "numpy"):
            _backend.set_backend(b)
            timings[b] = best_of(fn, args.repeat)
        rows.append((name, timings["numba"], timings["numpy"]))
    width = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{width}}  {'numba ms':>9}  {'numpy ms':>9}  {'speedup':>7}")
    for name, nb, np_ in rows:
        print(f"{name:<{width}}  {1e3 * nb:9.2f}  {1e3 * np_:9.2f}  {np_ / nb:6.1f}x")


if __name__ == "__main__":
    main()
