"""Synthetic datasets and loaders for CSV, IDX and UCI-HAR files."""

from __future__ import annotations

import csv
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError, ParameterError
from .numeric import SeededRng


@dataclass
class Dataset:
    x: np.ndarray
    y: np.ndarray

    def __len__(self):
        return self.y.shape[0]

    @property
    def n_features(self):
        return self.x.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.x[idx], self.y[idx])


@dataclass
class Splits:
    train: Dataset
    val: Dataset
    test: Dataset

    @property
    def n_classes(self) -> int:
        return int(max(self.train.y.max(), self.val.y.max(), self.test.y.max())) + 1


def split(data: Dataset, rng: SeededRng, val_frac=0.15, test_frac=0.15) -> Splits:
    n = len(data)
    order = rng.permutation(n)
    n_test = int(round(n * test_frac))
    n_val = int(round(n * val_frac))
    n_train = n - n_val - n_test
    return Splits(
        data.subset(order[:n_train]),
        data.subset(order[n_train : n_train + n_val]),
        data.subset(order[n_train + n_val :]),
    )


def synth_dataset(
    kind: str = "blobs",
    n: int = 2000,
    classes: int = 4,
    scale: float = 1.0,
    seed: int = 0,
    dim: int = 10,
    separation: float = 6.0,
    noise: float = 1.0,
) -> Splits:
    """Deterministic toy classification data split 70/15/15.

    ``blobs``: Gaussian clusters with standard deviation ``noise`` whose
    centers are pairwise ``separation`` apart (requires ``dim >= classes``).
    ``rings``: concentric circles of radius ``separation*(k+1)/2`` in the
    first two coordinates, remaining coordinates pure noise.
    Every feature is multiplied by ``scale`` at the end.
    """
    if n < 30 * classes:
        raise ParameterError(f"need n >= 30*classes = {30 * classes}, got {n}")
    data_rng, split_rng = SeededRng(seed).spawn(2)
    y = np.arange(n) % classes
    if kind == "blobs":
        if dim < classes:
            raise ParameterError(f"blobs need dim >= classes, got dim={dim}, classes={classes}")
        q, _ = np.linalg.qr(data_rng.normal((dim, dim)))
        centers = q[:classes] * (separation / np.sqrt(2.0))
        x = centers[y] + noise * data_rng.normal((n, dim))
    elif kind == "rings":
        if dim < 2:
            raise ParameterError("rings need dim >= 2")
        theta = 2 * np.pi * data_rng.random(n)
        radius = separation * (y + 1) / 2.0
        x = noise * data_rng.normal((n, dim)) * 0.25
        x[:, 0] += radius * np.cos(theta)
        x[:, 1] += radius * np.sin(theta)
    else:
        raise ParameterError(f"unknown synthetic dataset kind {kind!r}")
    return split(Dataset(x * scale, y.astype(np.int64)), split_rng)


def load_csv(path, label_column: str = "label") -> Dataset:
    """Numeric CSV with a header row; ``label_column`` holds integer class ids."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if label_column not in header:
            raise DataError(f"{path}: no column named {label_column!r} in header {header}")
        li = header.index(label_column)
        xs, ys = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                vals = [float(v) for v in row]
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            label = vals.pop(li)
            if label != int(label) or label < 0:
                raise DataError(f"{path}:{lineno}: label {label} is not a non-negative integer")
            xs.append(vals)
            ys.append(int(label))
    if not ys:
        raise DataError(f"{path}: no data rows")
    return Dataset(np.array(xs, dtype=np.float64), np.array(ys, dtype=np.int64))


def _read_idx(path, expected_magic: int):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 8:
        raise DataError(f"{path}: truncated header")
    magic = struct.unpack(">I", raw[:4])[0]
    if magic != expected_magic:
        raise DataError(f"{path}: magic 0x{magic:08x} at offset 0, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    hdr = 4 + 4 * ndim
    if len(raw) < hdr:
        raise DataError(f"{path}: truncated dimension header")
    dims = struct.unpack(f">{ndim}I", raw[4:hdr])
    need = int(np.prod(dims))
    have = len(raw) - hdr
    if have != need:
        raise DataError(
            f"{path}: header declares {dims[0]} items ({need} bytes) but {have} bytes follow offset {hdr}"
        )
    return np.frombuffer(raw, dtype=np.uint8, offset=hdr).reshape(dims)


def load_idx(images_path, labels_path) -> Dataset:
    """MNIST-style IDX pair; pixels are flattened and scaled to [0, 1]."""
    images = _read_idx(images_path, 0x00000803)
    labels = _read_idx(labels_path, 0x00000801)
    if images.shape[0] != labels.shape[0]:
        raise DataError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    x = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(x, labels.astype(np.int64))


UCIHAR_FEATURES = 561


def _read_whitespace(path, width=None):
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if width is not None and len(parts) != width:
                raise DataError(f"{path}:{lineno}: expected {width} values, got {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    return np.array(rows, dtype=np.float64)


UCIHAR_SPLIT_SIZES = {"train": 7352, "test": 2947}
UCIHAR_CLASSES = 6


def load_ucihar_split(root, name: str) -> Dataset:
    """One predefined split (``train`` or ``test``) of a UCI HAR Dataset directory.

    Labels 1..6 are shifted to 0..5. Row counts are checked against the
    standard release.
    """
    if name not in UCIHAR_SPLIT_SIZES:
        raise ParameterError(f"split must be 'train' or 'test', got {name!r}")
    x = _read_whitespace(os.path.join(root, name, f"X_{name}.txt"), UCIHAR_FEATURES)
    y = _read_whitespace(os.path.join(root, name, f"y_{name}.txt"), 1)[:, 0]
    if x.shape[0] != y.shape[0]:
        raise DataError(f"{name}: {x.shape[0]} feature rows but {y.shape[0]} labels")
    if x.shape[0] != UCIHAR_SPLIT_SIZES[name]:
        raise DataError(f"{name}: expected {UCIHAR_SPLIT_SIZES[name]} rows, found {x.shape[0]}")
    y = y.astype(np.int64) - 1
    if y.min() < 0 or y.max() >= UCIHAR_CLASSES:
        raise DataError(f"{name}: labels outside 1..{UCIHAR_CLASSES}")
    return Dataset(x, y)


def load_ucihar(root, rng: SeededRng | None = None, val_frac: float = 0.15) -> Splits:
    """Predefined train/test split; validation rows are carved out of train with ``rng``."""
    train, test = load_ucihar_split(root, "train"), load_ucihar_split(root, "test")
    rng = rng or SeededRng(0)
    order = rng.permutation(len(train))
    n_val = int(round(len(train) * val_frac))
    return Splits(train.subset(order[n_val:]), train.subset(order[:n_val]), test)
