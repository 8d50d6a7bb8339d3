"""Synthetic datasets, CSV ingestion, and deterministic splitting/batching."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

log = logging.getLogger(__name__)

SYNTHETIC_KINDS = ("two_moons", "spirals", "blobs")


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    class_count: int
    name: str
    notes: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ConfigError(f"features must be [N, D] with N >= 1, got {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise ConfigError("labels must be one integer per row")
        if not np.isfinite(self.features).all():
            raise ConfigError("features contain non-finite values")
        if self.labels.min() < 0 or self.labels.max() >= self.class_count:
            raise ConfigError(f"labels must lie in [0, {self.class_count})")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float
    seed: int
    stratified: bool = True

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError(
                f"train_fraction must be in (0, 1), got {self.train_fraction}"
            )


def _class_sizes(n: int, classes: int) -> list[int]:
    base, extra = divmod(n, classes)
    return [base + (1 if c < extra else 0) for c in range(classes)]


def two_moons(n: int, noise: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Two interleaved half-circle arcs; noise=0 puts points exactly on them."""
    n0, n1 = _class_sizes(n, 2)
    t0 = np.linspace(0.0, math.pi, n0)
    t1 = np.linspace(0.0, math.pi, n1)
    upper = np.column_stack([np.cos(t0), np.sin(t0)])
    lower = np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)])
    x = np.vstack([upper, lower])
    y = np.concatenate([np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)])
    if noise > 0:
        rng = np.random.default_rng(seed)
        x = x + rng.normal(0.0, noise, size=x.shape)
    return x, y


def spirals(n: int, classes: int, noise: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """`classes` interleaved spiral arms of 1.5 turns each."""
    sizes = _class_sizes(n, classes)
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for c, size in enumerate(sizes):
        t = np.linspace(0.0, 1.0, size)
        radius = 0.2 + 0.8 * t
        angle = 2.0 * math.pi * (1.5 * t + c / classes)
        arm = np.column_stack([radius * np.cos(angle), radius * np.sin(angle)])
        if noise > 0:
            arm = arm + rng.normal(0.0, noise, size=arm.shape)
        xs.append(arm)
        ys.append(np.full(size, c, dtype=np.int64))
    return np.vstack(xs), np.concatenate(ys)


def blobs(n: int, classes: int, noise: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Isotropic Gaussian clusters centered on a circle of radius 3."""
    sizes = _class_sizes(n, classes)
    rng = np.random.default_rng(seed)
    spread = noise if noise > 0 else 0.5
    xs, ys = [], []
    for c, size in enumerate(sizes):
        angle = 2.0 * math.pi * c / classes
        center = np.array([3.0 * math.cos(angle), 3.0 * math.sin(angle)])
        xs.append(center + spread * rng.standard_normal((size, 2)))
        ys.append(np.full(size, c, dtype=np.int64))
    return np.vstack(xs), np.concatenate(ys)


def gen_synthetic(
    kind: str, n: int, noise: float = 0.0, classes: int = 2, seed: int = 0
) -> Dataset:
    """Deterministic synthetic dataset; class counts differ by at most 1."""
    if kind not in SYNTHETIC_KINDS:
        raise ConfigError(f"unknown dataset kind {kind!r}, expected one of {SYNTHETIC_KINDS}")
    if classes < 2:
        raise ConfigError(f"need at least 2 classes, got {classes}")
    if n < classes:
        raise ConfigError(f"need n >= classes, got n={n}, classes={classes}")
    if noise < 0:
        raise ConfigError(f"noise must be >= 0, got {noise}")
    if kind == "two_moons":
        if classes != 2:
            raise ConfigError("two_moons is a 2-class dataset")
        x, y = two_moons(n, noise, seed)
    elif kind == "spirals":
        x, y = spirals(n, classes, noise, seed)
    else:
        x, y = blobs(n, classes, noise, seed)
    return Dataset(x, y, classes, name=f"{kind}(n={n},noise={noise:g},seed={seed})")


def load_csv_dataset(path, label_column: str) -> Dataset:
    """Numeric CSV with a header row; every non-label column is a feature.

    Labels must be non-negative integers; the class count is max label + 1,
    so absent intermediate labels are allowed (noted, not rejected).
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read dataset {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError(f"{path}: empty file, expected a header row") from None
        header = [h.strip() for h in header]
        if label_column not in header:
            raise ConfigError(
                f"{path}: label column {label_column!r} not in header {header}"
            )
        label_idx = header.index(label_column)
        feat_names = [h for i, h in enumerate(header) if i != label_idx]
        if not feat_names:
            raise ConfigError(f"{path}: no feature columns besides the label")

        feats: list[list[float]] = []
        labels: list[int] = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ConfigError(
                    f"{path}:{line_no}: expected {len(header)} columns, got {len(row)}"
                )
            try:
                values = [float(cell) for cell in row]
            except ValueError as exc:
                raise ConfigError(f"{path}:{line_no}: non-numeric cell ({exc})") from None
            raw_label = values[label_idx]
            if not raw_label.is_integer() or raw_label < 0:
                raise ConfigError(
                    f"{path}:{line_no}: label must be a non-negative integer, "
                    f"got {row[label_idx]!r}"
                )
            labels.append(int(raw_label))
            feats.append([v for i, v in enumerate(values) if i != label_idx])

    if not feats:
        raise ConfigError(f"{path}: no data rows")
    y = np.asarray(labels, dtype=np.int64)
    class_count = int(y.max()) + 1
    notes = []
    present = set(np.unique(y).tolist())
    missing = sorted(set(range(class_count)) - present)
    if missing:
        note = f"labels {missing} absent from {path}; class count kept at {class_count}"
        notes.append(note)
        log.warning(note)
    return Dataset(
        np.asarray(feats, dtype=np.float64),
        y,
        class_count,
        name=str(path),
        notes=tuple(notes),
    )


def split_indices(ds: Dataset, split: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint train/test index arrays covering 0..N-1, fixed by split.seed."""
    rng = np.random.default_rng(split.seed)
    if split.stratified:
        train_parts, test_parts = [], []
        for c in range(ds.class_count):
            idx = np.flatnonzero(ds.labels == c)
            idx = rng.permutation(idx)
            take = int(round(split.train_fraction * idx.size))
            train_parts.append(idx[:take])
            test_parts.append(idx[take:])
        train = np.sort(np.concatenate(train_parts))
        test = np.sort(np.concatenate(test_parts))
    else:
        perm = rng.permutation(ds.n)
        take = int(round(split.train_fraction * ds.n))
        train = np.sort(perm[:take])
        test = np.sort(perm[take:])
    if train.size == 0 or test.size == 0:
        raise ConfigError(
            f"split leaves an empty side (N={ds.n}, train_fraction={split.train_fraction})"
        )
    return train, test


def split_and_batch(
    ds: Dataset, split: SplitSpec, batch_size: int, epoch: int
) -> tuple[list[tuple[np.ndarray, np.ndarray]], tuple[np.ndarray, np.ndarray]]:
    """Shuffled train minibatches for one epoch plus the fixed test set.

    Batch order depends only on (split.seed, epoch); the final short batch
    is kept.
    """
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    train_idx, test_idx = split_indices(ds, split)
    order = np.random.default_rng([split.seed, epoch]).permutation(train_idx)
    batches = [
        (ds.features[chunk], ds.labels[chunk])
        for chunk in (order[i : i + batch_size] for i in range(0, order.size, batch_size))
    ]
    return batches, (ds.features[test_idx], ds.labels[test_idx])
