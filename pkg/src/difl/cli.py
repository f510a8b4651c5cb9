"""``difl`` command line: fit, extract, eval, corrupt.

JSON results go to stdout, logs to stderr. Exit codes: 0 ok, 2 bad
configuration, 3 unreadable or malformed data.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import classifier as clf
from . import stack
from .encoding import HistogramConfig
from .errors import FormatError
from .imagery import (CorruptionSpec, ImageStack, LabeledImageSet, corrupt, load_idx,
                      stratified_split_indices, write_idx_images, write_idx_labels)

log = logging.getLogger("difl")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3

DEFAULT_LAYERS = [{"K": 3, "L": 8, "h1": 7, "h2": 7}, {"K": 3, "L": 8, "h1": 7, "h2": 7}]


class ConfigError(ValueError):
    pass


class DataError(Exception):
    pass


@dataclass
class ExperimentConfig:
    layers: List[stack.LayerConfig]
    histogram: HistogramConfig
    lam: float = clf.DEFAULT_LAMBDA
    epochs: int = clf.DEFAULT_EPOCHS
    normalize: bool = True
    images: Optional[str] = None
    labels: Optional[str] = None
    test_images: Optional[str] = None
    test_labels: Optional[str] = None
    per_class_train: Optional[int] = None
    per_class_test: Optional[int] = None
    corrupt: Optional[CorruptionSpec] = None
    seed: int = 0
    sweep: List[float] = field(default_factory=list)


def _int_field(raw, name, minimum=None):
    if isinstance(raw, bool) or not isinstance(raw, (int, float)) or int(raw) != raw:
        raise ConfigError(f"{name}: expected an integer, got {raw!r}")
    raw = int(raw)
    if minimum is not None and raw < minimum:
        raise ConfigError(f"{name}: must be >= {minimum}, got {raw}")
    return raw


def _layer(raw, i) -> stack.LayerConfig:
    if not isinstance(raw, dict):
        raise ConfigError(f"layers[{i}]: expected an object")
    unknown = set(raw) - {"K", "L", "h1", "h2"}
    if unknown:
        raise ConfigError(f"layers[{i}]: unknown keys {sorted(unknown)}")
    vals = {}
    for key, default in (("K", 3), ("L", 8), ("h1", 7), ("h2", 7)):
        vals[key] = _int_field(raw.get(key, default), f"layers[{i}].{key}", minimum=1)
    for key in ("h1", "h2"):
        if vals[key] % 2 == 0:
            raise ConfigError(f"layers[{i}].{key}: must be odd, got {vals[key]}")
    try:
        return stack.LayerConfig(vals["K"], vals["L"], vals["h1"], vals["h2"])
    except ValueError as exc:
        raise ConfigError(f"layers[{i}].L: {exc}") from exc


def build_config(raw: dict, args: argparse.Namespace) -> ExperimentConfig:
    """Merge a JSON config dict with command-line overrides and validate it."""
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be a JSON object")
    layers_raw = raw.get("layers", DEFAULT_LAYERS)
    if not isinstance(layers_raw, list) or not layers_raw:
        raise ConfigError("layers: expected a non-empty list")
    layers = [_layer(l, i) for i, l in enumerate(layers_raw)]

    hist = raw.get("histogram", {})
    if not isinstance(hist, dict):
        raise ConfigError("histogram: expected an object")
    bh1 = _int_field(hist.get("block_h1", layers[-1].h1), "histogram.block_h1", 1)
    bh2 = _int_field(hist.get("block_h2", layers[-1].h2), "histogram.block_h2", 1)
    cr = hist.get("cr", 0.5)
    if not isinstance(cr, (int, float)) or not 0 <= cr < 1:
        raise ConfigError(f"histogram.cr: must lie in [0, 1), got {cr!r}")
    histogram = HistogramConfig(bh1, bh2, float(cr), layers[-1].L)

    cls = raw.get("classifier", {})
    if not isinstance(cls, dict):
        raise ConfigError("classifier: expected an object")
    lam = cls.get("lambda", clf.DEFAULT_LAMBDA)
    if not isinstance(lam, (int, float)) or lam <= 0:
        raise ConfigError(f"classifier.lambda: must be > 0, got {lam!r}")
    epochs = _int_field(cls.get("epochs", clf.DEFAULT_EPOCHS), "classifier.epochs", 1)
    normalize = bool(cls.get("normalize", True))

    def pick(attr, key=None):
        v = getattr(args, attr, None)
        return v if v is not None else raw.get(key or attr)

    seed = _int_field(pick("seed") if pick("seed") is not None else 0, "seed", 0)
    pct = pick("per_class_train")
    pct = None if pct is None else _int_field(pct, "per_class_train", 0)
    pcte = pick("per_class_test")
    pcte = None if pcte is None else _int_field(pcte, "per_class_test", 1)

    spec = None
    text = pick("corrupt")
    if text:
        try:
            spec = CorruptionSpec.parse(str(text), seed)
        except ValueError as exc:
            raise ConfigError(f"corrupt: {exc}") from exc

    sweep = []
    if getattr(args, "sweep_lambda", None):
        try:
            sweep = [float(v) for v in args.sweep_lambda.split(",")]
        except ValueError as exc:
            raise ConfigError(f"sweep-lambda: {exc}") from exc
        if any(v <= 0 for v in sweep):
            raise ConfigError("sweep-lambda: values must be > 0")

    return ExperimentConfig(
        layers=layers, histogram=histogram, lam=float(lam), epochs=epochs, normalize=normalize,
        images=pick("images"), labels=pick("labels"),
        test_images=pick("test_images"), test_labels=pick("test_labels"),
        per_class_train=pct, per_class_test=pcte, corrupt=spec, seed=seed, sweep=sweep)


def _read_config(args) -> ExperimentConfig:
    raw = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                raw = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: invalid JSON ({exc})") from exc
    return build_config(raw, args)


def _load(images, labels, need_labels=True) -> LabeledImageSet:
    if not images:
        raise ConfigError("images: no image file given")
    if need_labels and not labels:
        raise ConfigError("labels: no label file given")
    try:
        return load_idx(images, labels)
    except (OSError, FormatError) as exc:
        raise DataError(str(exc)) from exc


def _split(cfg: ExperimentConfig, labels):
    """Train/test index arrays for a single labelled file."""
    n = labels.shape[0]
    if cfg.per_class_train is None:
        return np.arange(n), np.arange(0)
    try:
        train_idx, test_idx = stratified_split_indices(labels, cfg.per_class_train, cfg.seed)
        if cfg.per_class_test is not None:
            sub, _ = stratified_split_indices(labels[test_idx], cfg.per_class_test, cfg.seed)
            test_idx = test_idx[sub]
    except ValueError as exc:
        raise ConfigError(f"per_class_train: {exc}") from exc
    return train_idx, test_idx


def _maybe_corrupt(images: ImageStack, spec: Optional[CorruptionSpec], seed_offset=0):
    if spec is None:
        return images
    return corrupt(images, CorruptionSpec(spec.kind, spec.param, spec.seed + seed_offset,
                                          spec.occluder))


def prepare_data(cfg: ExperimentConfig, need_test: bool):
    """Load, corrupt and split according to the two robustness protocols.

    Pixel noise is applied to every image (train and test); occlusion only to
    test images. Corruption runs on the whole loaded file before splitting so
    that ``fit`` and ``eval`` see identical training images. A separately
    supplied test file is corrupted with seed + 1.
    """
    full = _load(cfg.images, cfg.labels)
    spec = cfg.corrupt
    clean_px = full.images
    noisy_px = _maybe_corrupt(full.images, spec)
    train_px = noisy_px if (spec is not None and spec.applies_to_train) else clean_px
    train_idx, test_idx = _split(cfg, full.labels)
    train = LabeledImageSet(train_px, full.labels).subset(train_idx)
    test = None
    if cfg.test_images:
        t = _load(cfg.test_images, cfg.test_labels)
        test = LabeledImageSet(_maybe_corrupt(t.images, spec, 1), t.labels)
    elif need_test:
        if test_idx.size == 0:
            raise ConfigError("per_class_train: needed to carve a test split (or pass --test-images)")
        test = LabeledImageSet(noisy_px, full.labels).subset(test_idx)
    return train, test


def _emit(obj):
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")
    sys.stdout.flush()


def cmd_fit(args) -> int:
    cfg = _read_config(args)
    if not args.model:
        raise ConfigError("model: output path required (--model)")
    train, _ = prepare_data(cfg, need_test=False)
    t0 = time.perf_counter()
    model, _ = stack.fit(train.images, cfg.layers, cfg.histogram)
    seconds = time.perf_counter() - t0
    stack.save(model, args.model)
    log.info("wrote %s", args.model)
    _emit({"layers": [{"K": l.config.K, "L": l.config.L, "h1": l.config.h1, "h2": l.config.h2}
                      for l in model.layers],
           "featureDim": model.feature_dim, "nTrain": train.images.count,
           "fitSeconds": round(seconds, 3)})
    return EXIT_OK


def _load_model(path):
    if not path:
        raise ConfigError("model: path required (--model)")
    try:
        return stack.load(path)
    except (OSError, FormatError) as exc:
        raise DataError(str(exc)) from exc


def cmd_extract(args) -> int:
    model = _load_model(args.model)
    if not args.out:
        raise ConfigError("out: output path required (--out)")
    data = _load(args.images, None, need_labels=False)
    images = data.images
    if args.corrupt:
        try:
            spec = CorruptionSpec.parse(args.corrupt, args.seed or 0)
        except ValueError as exc:
            raise ConfigError(f"corrupt: {exc}") from exc
        images = corrupt(images, spec)
    if images.pixels.shape[1:] != (model.m, model.n):
        raise DataError(f"images are {images.pixels.shape[1:]}, model expects {(model.m, model.n)}")
    F = stack.transform(model, images)
    stack.save_features(F, args.out)
    _emit({"n": int(F.shape[0]), "featureDim": int(F.shape[1]), "out": args.out})
    return EXIT_OK


def _svm_eval(Ftr, ytr, Fte, yte, lam, cfg):
    m = clf.fit_svm(Ftr, ytr, lam=lam, epochs=cfg.epochs, seed=cfg.seed, normalize=cfg.normalize)
    return (clf.accuracy(clf.predict(m, Ftr), ytr), clf.accuracy(clf.predict(m, Fte), yte))


def cmd_eval(args) -> int:
    cfg = _read_config(args)
    model = _load_model(args.model)
    train, test = prepare_data(cfg, need_test=True)
    if train.images.pixels.shape[1:] != (model.m, model.n):
        raise DataError(f"images are {train.images.pixels.shape[1:]}, "
                        f"model expects {(model.m, model.n)}")
    t0 = time.perf_counter()
    Ftr = stack.transform(model, train.images)
    Fte = stack.transform(model, test.images)
    train_acc, test_acc = _svm_eval(Ftr, train.labels, Fte, test.labels, cfg.lam, cfg)
    out = {"trainAcc": train_acc, "testAcc": test_acc, "featureDim": model.feature_dim,
           "n_train": train.images.count, "n_test": test.images.count}
    if args.baseline:
        Rtr = clf.raw_features(train.images)
        Rte = clf.raw_features(test.images)
        out["rawTrainAcc"], out["rawTestAcc"] = _svm_eval(Rtr, train.labels, Rte, test.labels,
                                                          cfg.lam, cfg)
    if cfg.sweep:
        # reported for inspection only; the default lambda stays the headline result
        out["sweep"] = [dict(zip(("lambda", "trainAcc", "testAcc"),
                                 (lam, *_svm_eval(Ftr, train.labels, Fte, test.labels, lam, cfg))))
                        for lam in cfg.sweep]
    out["evalSeconds"] = round(time.perf_counter() - t0, 3)
    _emit(out)
    return EXIT_OK


def cmd_corrupt(args) -> int:
    if not args.corrupt:
        raise ConfigError("corrupt: --corrupt kind:param required")
    if not args.out:
        raise ConfigError("out: output path required (--out)")
    try:
        spec = CorruptionSpec.parse(args.corrupt, args.seed or 0)
    except ValueError as exc:
        raise ConfigError(f"corrupt: {exc}") from exc
    data = _load(args.images, args.labels, need_labels=False)
    noisy = corrupt(data.images, spec)
    write_idx_images(args.out, noisy, exact=not args.bytes)
    if args.out_labels and data.labels is not None:
        write_idx_labels(args.out_labels, data.labels)
    _emit({"n": noisy.count, "kind": spec.kind, "param": spec.param, "seed": spec.seed,
           "out": args.out})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="difl", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, with_config=True):
        if with_config:
            sp.add_argument("--config", help="JSON experiment config")
        sp.add_argument("--images", help="IDX image file (.gz ok)")
        sp.add_argument("--labels", help="IDX label file (.gz ok)")
        sp.add_argument("--seed", type=int, help="single source of randomness")
        sp.add_argument("--corrupt", metavar="KIND:PARAM",
                        help="saltPepper:<density>, gaussian:<std> or occlusion:<fraction>")

    sp = sub.add_parser("fit", help="fit a model and write it to --model")
    common(sp)
    sp.add_argument("--model", help="output model path")
    sp.add_argument("--per-class-train", type=int, dest="per_class_train")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("extract", help="write histogram features of --images to --out")
    common(sp, with_config=False)
    sp.add_argument("--model", required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_extract)

    sp = sub.add_parser("eval", help="train + test a linear SVM on extracted features")
    common(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--per-class-train", type=int, dest="per_class_train")
    sp.add_argument("--per-class-test", type=int, dest="per_class_test")
    sp.add_argument("--test-images", dest="test_images")
    sp.add_argument("--test-labels", dest="test_labels")
    sp.add_argument("--baseline", action="store_true", help="also report raw-pixel accuracy")
    sp.add_argument("--sweep-lambda", dest="sweep_lambda", metavar="L1,L2,...",
                    help="additionally report accuracies for these SVM lambdas")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("corrupt", help="write a corrupted copy of --images")
    common(sp, with_config=False)
    sp.add_argument("--out")
    sp.add_argument("--out-labels", dest="out_labels")
    sp.add_argument("--bytes", action="store_true",
                    help="round to unsigned bytes instead of exact float64 IDX")
    sp.set_defaults(func=cmd_corrupt)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except DataError as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
