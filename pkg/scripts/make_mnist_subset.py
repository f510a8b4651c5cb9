"""Write the 5000-image MNIST sample shipped with mlxtend as gzipped IDX files.

Usage:
    python scripts/make_mnist_subset.py [--wheel path/to/mlxtend.whl] [--out data/mnist5k]

Without --wheel the installed mlxtend package is used.
"""
import argparse
import gzip
import io
import zipfile
from pathlib import Path

import numpy as np

from difl.imagery import ImageStack, write_idx_images, write_idx_labels

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def read_csv(wheel):
    if wheel:
        with zipfile.ZipFile(wheel) as zf:
            raw = zf.read(MEMBER)
    else:
        import mlxtend.data
        raw = (Path(mlxtend.data.__file__).parent / "data" / "mnist_5k.csv.gz").read_bytes()
    return np.loadtxt(io.StringIO(gzip.decompress(raw).decode()), delimiter=",")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--wheel")
    ap.add_argument("--out", default="data/mnist5k")
    args = ap.parse_args()
    table = read_csv(args.wheel)
    pixels = table[:, :-1].reshape(-1, 28, 28)
    labels = table[:, -1].astype(np.int64)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_idx_images(out / "images-idx3-ubyte.gz", ImageStack(pixels))
    write_idx_labels(out / "labels-idx1-ubyte.gz", labels)
    print(f"wrote {len(labels)} images to {out}")


if __name__ == "__main__":
    main()
