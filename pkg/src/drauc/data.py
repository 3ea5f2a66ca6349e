"""Dataset loading, standardization and deterministic splitting.

All randomness goes through :func:`make_rng`, a NumPy ``Generator`` backed by
PCG64 (O'Neill's permuted congruential generator, 128-bit state, 64-bit
output). PCG64 streams are specified bit-for-bit, so a seed reproduces the
same splits on every platform.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np


class DataError(ValueError):
    """Raised for malformed input data or impossible split requests."""


def make_rng(seed: int) -> np.random.Generator:
    if seed < 0 or seed >= 2**64:
        raise DataError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.PCG64(seed))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LabeledDataset:
    """Feature matrix with +1/-1 labels. Arrays are copied and made read-only."""

    features: np.ndarray
    labels: np.ndarray
    feature_names: Optional[tuple] = None

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2:
            raise DataError(f"features must be 2-d, got shape {X.shape}")
        n, d = X.shape
        if n < 1 or d < 1:
            raise DataError(f"need at least one row and one column, got shape {X.shape}")
        if y.shape != (n,):
            raise DataError(f"labels shape {y.shape} does not match {n} rows")
        if not np.all(np.isfinite(X)):
            bad = np.argwhere(~np.isfinite(X))[0]
            raise DataError(f"non-finite feature at row {bad[0]}, column {bad[1]}")
        if not np.all((y == 1) | (y == -1)):
            raise DataError("labels must be +1 or -1")
        names = self.feature_names
        if names is not None:
            names = tuple(str(s) for s in names)
            if len(names) != d:
                raise DataError(f"{len(names)} feature names for {d} columns")
        object.__setattr__(self, "features", _frozen(X))
        object.__setattr__(self, "labels", _frozen(y.astype(np.int64)))
        object.__setattr__(self, "feature_names", names)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def positives(self) -> np.ndarray:
        return self.features[self.labels == 1]

    @property
    def negatives(self) -> np.ndarray:
        return self.features[self.labels == -1]

    def class_counts(self) -> tuple[int, int]:
        n_pos = int(np.sum(self.labels == 1))
        return n_pos, self.n_samples - n_pos

    def subset(self, indices) -> "LabeledDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self.features[idx], self.labels[idx], self.feature_names)


def load_csv(path, label_column: str, positive_label: str) -> LabeledDataset:
    """Read a header-first CSV; rows whose label equals ``positive_label`` become +1.

    Every other column is parsed as a real-valued feature in header order.
    Row numbers in error messages count data rows from 1.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if label_column not in header:
            raise DataError(f"{path}: label column {label_column!r} not in header {header}")
        li = header.index(label_column)
        names = [h for k, h in enumerate(header) if k != li]
        if not names:
            raise DataError(f"{path}: no feature columns")
        rows, labels = [], []
        for r, rec in enumerate(reader, start=1):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise DataError(f"{path}: row {r} has {len(rec)} cells, expected {len(header)}")
            vals = []
            for k, cell in enumerate(rec):
                if k == li:
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: row {r}, column {header[k]!r}: cannot parse {cell!r} as a number"
                    ) from None
                if not math.isfinite(v):
                    raise DataError(f"{path}: row {r}, column {header[k]!r}: non-finite value")
                vals.append(v)
            rows.append(vals)
            labels.append(1 if rec[li].strip() == positive_label else -1)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return LabeledDataset(np.array(rows), np.array(labels), tuple(names))


@dataclass(frozen=True)
class Scaler:
    """Per-feature affine map ``x -> (x - shift) / scale``."""

    shift: np.ndarray
    scale: np.ndarray = field()

    def __post_init__(self):
        shift = np.asarray(self.shift, dtype=float).ravel()
        scale = np.asarray(self.scale, dtype=float).ravel()
        if shift.shape != scale.shape:
            raise DataError("shift and scale lengths differ")
        if np.any(scale <= 0) or not np.all(np.isfinite(scale)):
            raise DataError("scale entries must be finite and positive")
        object.__setattr__(self, "shift", _frozen(shift))
        object.__setattr__(self, "scale", _frozen(scale))

    @property
    def n_features(self) -> int:
        return self.shift.shape[0]

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.n_features:
            raise DataError(f"scaler expects {self.n_features} features, got {X.shape[-1]}")
        return (X - self.shift) / self.scale

    def inverse_transform(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=float) * self.scale + self.shift

    def to_dict(self) -> dict:
        return {"shift": self.shift.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Scaler":
        return cls(np.array(d["shift"], dtype=float), np.array(d["scale"], dtype=float))

    @classmethod
    def identity(cls, d: int) -> "Scaler":
        return cls(np.zeros(d), np.ones(d))


def fit_standardizer(train: LabeledDataset) -> Scaler:
    """Population mean/std per feature; zero std is replaced by 1."""
    X = train.features
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[std == 0] = 1.0
    return Scaler(mean, std)


def apply_standardizer(scaler: Scaler, ds: LabeledDataset) -> LabeledDataset:
    if scaler.n_features != ds.n_features:
        raise DataError(f"scaler has {scaler.n_features} features, dataset has {ds.n_features}")
    return LabeledDataset(scaler.transform(ds.features), ds.labels, ds.feature_names)


def _round_half_away(x: float) -> int:
    return int(math.floor(abs(x) + 0.5)) * (1 if x >= 0 else -1)


def stratified_counts(n_pos: int, n_neg: int, train_size: int) -> tuple[int, int]:
    """Per-class sample sizes preserving the class ratio, each class >= 1."""
    n = n_pos + n_neg
    if n_pos == 0 or n_neg == 0:
        raise DataError("stratified sampling needs both classes present")
    if train_size > n:
        raise DataError(f"train_size {train_size} exceeds dataset size {n}")
    if train_size < 2:
        raise DataError("train_size must be at least 2 to hold both classes")
    k_pos = _round_half_away(train_size * n_pos / n)
    k_neg = _round_half_away(train_size * n_neg / n)
    # the larger class absorbs the rounding surplus/deficit
    if n_pos >= n_neg:
        k_pos = train_size - k_neg
    else:
        k_neg = train_size - k_pos
    if k_pos < 1:
        k_pos, k_neg = 1, train_size - 1
    elif k_neg < 1:
        k_pos, k_neg = train_size - 1, 1
    if k_pos > n_pos:
        k_pos, k_neg = n_pos, train_size - n_pos
    elif k_neg > n_neg:
        k_pos, k_neg = train_size - n_neg, n_neg
    return k_pos, k_neg


def stratified_indices(labels, train_size: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Sorted (train, rest) row indices for a seeded stratified sample."""
    labels = np.asarray(labels)
    pos = np.flatnonzero(labels == 1)
    neg = np.flatnonzero(labels == -1)
    k_pos, k_neg = stratified_counts(len(pos), len(neg), train_size)
    rng = make_rng(seed)
    chosen = np.concatenate([
        rng.choice(pos, size=k_pos, replace=False),
        rng.choice(neg, size=k_neg, replace=False),
    ])
    train = np.sort(chosen)
    mask = np.ones(len(labels), dtype=bool)
    mask[train] = False
    return train, np.flatnonzero(mask)


def stratified_sample(ds: LabeledDataset, train_size: int, seed: int):
    train, rest = stratified_indices(ds.labels, train_size, seed)
    return ds.subset(train), ds.subset(rest)


def fold_assignment(labels, k: int, seed: int) -> np.ndarray:
    """Fold id per row: classes are shuffled, concatenated, then dealt round-robin.

    Dealing one concatenated sequence keeps both the overall fold sizes and the
    per-class counts within one of each other.
    """
    labels = np.asarray(labels)
    n = len(labels)
    if k < 2:
        raise DataError("k must be at least 2")
    if k > n:
        raise DataError(f"k={k} exceeds dataset size {n}")
    pos = np.flatnonzero(labels == 1)
    neg = np.flatnonzero(labels == -1)
    if len(pos) < k or len(neg) < k:
        raise DataError(f"each class needs at least k={k} points, got {len(pos)}/{len(neg)}")
    rng = make_rng(seed)
    order = np.concatenate([rng.permutation(pos), rng.permutation(neg)])
    folds = np.empty(n, dtype=np.int64)
    folds[order] = np.arange(n) % k
    return folds


def k_fold_indices(labels, k: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    folds = fold_assignment(labels, k, seed)
    return [(np.flatnonzero(folds != f), np.flatnonzero(folds == f)) for f in range(k)]


def k_fold_split(ds: LabeledDataset, k: int, seed: int) -> list[tuple[LabeledDataset, LabeledDataset]]:
    return [(ds.subset(tr), ds.subset(va)) for tr, va in k_fold_indices(ds.labels, k, seed)]


def from_arrays(X, y, feature_names: Optional[Sequence[str]] = None) -> LabeledDataset:
    """Build a dataset from any binary labels; the larger label value maps to +1."""
    y = np.asarray(y)
    classes = np.unique(y)
    if classes.size == 1 and classes[0] in (-1, 1):
        return LabeledDataset(X, y.astype(int), feature_names)
    if classes.size != 2:
        raise DataError(f"expected two classes, got {classes.size}")
    return LabeledDataset(X, np.where(y == classes[1], 1, -1), feature_names)
