"""Synthetic classification sets and the ``label,f1,...,fd`` CSV format."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .numlin import RngStream

GENERATORS = ("spirals", "blobs", "xor-grid")


class DataFormatError(ValueError):
    pass


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    split: str = "train"

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.features) != len(self.labels):
            raise DataFormatError("features and labels differ in length")
        if not np.all(np.isfinite(self.features)):
            raise DataFormatError("non-finite features")
        if len(self.labels) and self.labels.min() < 0:
            raise DataFormatError("negative label")

    def __len__(self):
        return len(self.labels)

    @property
    def dim(self):
        return self.features.shape[1]

    @property
    def n_classes(self):
        return int(self.labels.max()) + 1 if len(self.labels) else 0


def _class_sizes(n, k):
    return [n // k + (1 if c < n % k else 0) for c in range(k)]


def spirals(n, noise, stream: RngStream, turns=1.5):
    """Two interleaved Archimedean spirals, ``n // 2`` points each."""
    feats, labels = [], []
    for c, m in enumerate(_class_sizes(n, 2)):
        t = np.sqrt(stream.uniform(0.0, 1.0, m)) * turns * 2 * np.pi
        ang = t + c * np.pi
        pts = np.stack([t * np.cos(ang), t * np.sin(ang)], axis=1) / (turns * 2 * np.pi)
        feats.append(pts + noise * stream.normal((m, 2)) / (turns * 2))
        labels.append(np.full(m, c))
    return np.concatenate(feats), np.concatenate(labels)


def blobs(n, noise, stream: RngStream, classes=2):
    """Gaussian clouds around centres spaced evenly on the unit circle."""
    feats, labels = [], []
    for c, m in enumerate(_class_sizes(n, classes)):
        centre = np.array([np.cos(2 * np.pi * c / classes), np.sin(2 * np.pi * c / classes)])
        feats.append(centre + noise * stream.normal((m, 2)))
        labels.append(np.full(m, c))
    return np.concatenate(feats), np.concatenate(labels)


def xor_grid(n, noise, stream: RngStream):
    """Quadrant XOR: label 1 when the two coordinates differ in sign."""
    feats, labels = [], []
    for c, m in enumerate(_class_sizes(n, 2)):
        sx = np.where(stream.uniform(0, 1, m) < 0.5, -1.0, 1.0)
        sy = sx if c == 0 else -sx
        mag = stream.uniform(0.1, 1.0, (m, 2))
        pts = mag * np.stack([sx, sy], axis=1)
        feats.append(pts + noise * stream.normal((m, 2)))
        labels.append(np.full(m, c))
    return np.concatenate(feats), np.concatenate(labels)


def generate(kind, n, noise, seed, classes=2) -> Dataset:
    if n < 10:
        raise ValueError("n must be >= 10")
    stream = RngStream(seed, "data")
    if kind == "spirals":
        x, y = spirals(n, noise, stream)
    elif kind == "blobs":
        x, y = blobs(n, noise, stream, classes)
    elif kind == "xor-grid":
        x, y = xor_grid(n, noise, stream)
    else:
        raise ValueError(f"unknown dataset kind {kind!r}; expected one of {GENERATORS}")
    order = stream.permutation(n)
    return Dataset(x[order], y[order])


def split(ds: Dataset, test_fraction, seed):
    """Deterministic stratified train/test split."""
    stream = RngStream(seed, "data/split")
    train_idx, test_idx = [], []
    for c in range(ds.n_classes):
        idx = np.flatnonzero(ds.labels == c)
        idx = idx[stream.permutation(idx.size)]
        k = int(round(test_fraction * idx.size))
        test_idx.append(idx[:k])
        train_idx.append(idx[k:])
    tr = np.sort(np.concatenate(train_idx))
    te = np.sort(np.concatenate(test_idx))
    return (Dataset(ds.features[tr], ds.labels[tr], "train"),
            Dataset(ds.features[te], ds.labels[te], "test"))


def write_csv(ds: Dataset, path):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label"] + [f"f{i + 1}" for i in range(ds.dim)])
        for label, row in zip(ds.labels, ds.features):
            w.writerow([int(label)] + [repr(float(v)) for v in row])


def load_csv(path) -> Dataset:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataFormatError(f"{path}: empty file")
    header = rows[0]
    if not header or header[0] != "label" or header[1:] != [f"f{i + 1}" for i in range(len(header) - 1)]:
        raise DataFormatError(f"{path}:1: header must be 'label,f1,...,fd'")
    d = len(header) - 1
    if d < 1:
        raise DataFormatError(f"{path}:1: no feature columns")
    labels, feats = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != d + 1:
            raise DataFormatError(f"{path}:{lineno}: expected {d + 1} fields, got {len(row)}")
        try:
            label = int(row[0])
            values = [float(v) for v in row[1:]]
        except ValueError as exc:
            raise DataFormatError(f"{path}:{lineno}: {exc}") from None
        if not all(np.isfinite(values)) or label < 0:
            raise DataFormatError(f"{path}:{lineno}: non-finite feature or negative label")
        labels.append(label)
        feats.append(values)
    if not labels:
        raise DataFormatError(f"{path}: no data rows")
    try:
        return Dataset(np.array(feats).reshape(-1, d), np.array(labels))
    except DataFormatError as exc:
        raise DataFormatError(f"{path}: {exc}") from None
