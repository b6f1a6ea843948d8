"""Datasets for the trainer: MNIST-style IDX files and synthetic Gaussian blobs.

Features are scaled to [-1, 1]. The validation split is the last
``val_fraction`` of the rows after a seeded shuffle.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .hamiltonian import stream_rng

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
DATA_STREAM = 10


class IdxFormatError(ValueError):
    pass


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    is_validation: np.ndarray
    classes: int

    def __post_init__(self):
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("features and labels disagree on the number of samples")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.classes):
            raise ValueError("labels outside [0, classes)")

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def train(self) -> tuple[np.ndarray, np.ndarray]:
        m = ~self.is_validation
        return self.features[m], self.labels[m]

    @property
    def validation(self) -> tuple[np.ndarray, np.ndarray]:
        m = self.is_validation
        return self.features[m], self.labels[m]


def split_shuffled(features, labels, classes: int, val_fraction: float = 0.12, seed: int = 0) -> Dataset:
    """Shuffle rows under ``seed`` and tag the last ``val_fraction`` as validation."""
    m = features.shape[0]
    perm = stream_rng(seed, DATA_STREAM).permutation(m)
    n_val = int(round(val_fraction * m))
    is_val = np.zeros(m, dtype=bool)
    is_val[m - n_val:] = True
    return Dataset(np.ascontiguousarray(features[perm], dtype=np.float64), labels[perm].astype(np.int64), is_val, classes)


def _read_header(buf: bytes, magic: int, ndim: int, path) -> tuple[int, ...]:
    if len(buf) < 4 + 4 * ndim:
        raise IdxFormatError(f"{path}: truncated header")
    (got,) = struct.unpack(">I", buf[:4])
    if got != magic:
        raise IdxFormatError(f"{path}: bad magic 0x{got:08x}, expected 0x{magic:08x}")
    return struct.unpack(">" + "I" * ndim, buf[4:4 + 4 * ndim])


def read_idx_images(path: str | Path) -> np.ndarray:
    """Unsigned-byte image file -> (count, rows * cols) uint8 array."""
    buf = Path(path).read_bytes()
    count, rows, cols = _read_header(buf, IMAGE_MAGIC, 3, path)
    size = count * rows * cols
    body = buf[16:]
    if len(body) < size:
        raise IdxFormatError(f"{path}: truncated, {len(body)} of {size} pixel bytes")
    return np.frombuffer(body, dtype=np.uint8, count=size).reshape(count, rows * cols)


def read_idx_labels(path: str | Path) -> np.ndarray:
    buf = Path(path).read_bytes()
    (count,) = _read_header(buf, LABEL_MAGIC, 1, path)
    body = buf[8:]
    if len(body) < count:
        raise IdxFormatError(f"{path}: truncated, {len(body)} of {count} label bytes")
    return np.frombuffer(body, dtype=np.uint8, count=count)


def write_idx_images(path: str | Path, images: np.ndarray) -> None:
    images = np.asarray(images, dtype=np.uint8)
    count, rows, cols = images.shape
    Path(path).write_bytes(struct.pack(">IIII", IMAGE_MAGIC, count, rows, cols) + images.tobytes())


def write_idx_labels(path: str | Path, labels) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    Path(path).write_bytes(struct.pack(">II", LABEL_MAGIC, labels.size) + labels.tobytes())


def scale_pixels(pixels: np.ndarray) -> np.ndarray:
    """Map bytes 0..255 to [-1, 1]."""
    return pixels.astype(np.float64) / 127.5 - 1.0


def load_idx(images_path: str | Path, labels_path: str | Path, val_fraction: float = 0.12,
             seed: int = 0, classes: int | None = None) -> Dataset:
    for p in (images_path, labels_path):
        if not Path(p).is_file():
            raise FileNotFoundError(f"no such IDX file: {p}")
    pixels = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if pixels.shape[0] != labels.shape[0]:
        raise IdxFormatError(f"{pixels.shape[0]} images but {labels.shape[0]} labels")
    k = classes if classes is not None else int(labels.max()) + 1 if labels.size else 0
    return split_shuffled(scale_pixels(pixels), labels.astype(np.int64), k, val_fraction, seed)


def synth_blobs(classes: int, dim: int, per_class: int, spread: float, seed: int = 0,
                val_fraction: float = 0.12) -> Dataset:
    """Gaussian blobs of width ``spread`` around random unit-norm class centers, clipped to [-1, 1]."""
    if classes < 2:
        raise ValueError(f"need at least two classes, got {classes}")
    rng = stream_rng(seed, DATA_STREAM, 1)
    centers = rng.standard_normal((classes, dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    labels = np.repeat(np.arange(classes), per_class)
    x = centers[labels] + spread * rng.standard_normal((labels.size, dim))
    return split_shuffled(np.clip(x, -1.0, 1.0), labels, classes, val_fraction, seed)
