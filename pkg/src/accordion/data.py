"""Datasets: MNIST IDX files, CIFAR-10 binary batches and a synthetic pattern task."""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import ContractError, FormatError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD = 1 + 3 * 32 * 32


@dataclass(frozen=True, eq=False)
class Dataset:
    images: np.ndarray  # [n, h, w, c] float32 in [0, 1]
    labels: np.ndarray  # [n] int64
    class_count: int

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ContractError(f"{len(self.images)} images but {len(self.labels)} labels")
        if self.images.ndim != 4:
            raise ContractError(f"images must be [n, h, w, c], got {self.images.shape}")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ContractError("label outside [0, class_count)")

    def __len__(self):
        return len(self.labels)

    def take(self, index) -> "Dataset":
        return Dataset(self.images[index], self.labels[index], self.class_count)


def dataset_root(override=None) -> Path:
    return Path(override or os.environ.get("DATASET_ROOT", "data"))


# --------------------------------------------------------------------------
# MNIST IDX


def _read_idx(path, magic, ndim):
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise FormatError(f"{path}: truncated IDX header", offset=len(raw))
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise FormatError(f"{path}: bad IDX magic 0x{found:08x}, expected 0x{magic:08x}", offset=0)
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise FormatError(f"{path}: truncated IDX dimensions", offset=len(raw))
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    size = int(np.prod(dims))
    if len(raw) != header + size:
        raise FormatError(f"{path}: expected {size} data bytes, found {len(raw) - header}",
                          offset=min(len(raw), header + size))
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def load_mnist_idx(images_path, labels_path) -> Dataset:
    images = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC, 1)
    if len(images) != len(labels):
        raise FormatError(f"{len(images)} images but {len(labels)} labels")
    x = (images.astype(np.float32) / np.float32(255.0))[..., None]
    return Dataset(x, labels.astype(np.int64), 10)


def write_mnist_idx(images_path, labels_path, images, labels) -> None:
    """Write uint8 ``[n, h, w]`` images and labels as IDX files."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">4I", IDX_IMAGES_MAGIC, *images.shape))
        fh.write(images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">2I", IDX_LABELS_MAGIC, len(labels)))
        fh.write(labels.tobytes())


MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def load_mnist(root, part="train") -> Dataset:
    root = Path(root)
    names = MNIST_FILES[part]
    for sub in (root / "mnist", root):
        if (sub / names[0]).exists():
            return load_mnist_idx(sub / names[0], sub / names[1])
    raise FileNotFoundError(f"no MNIST {part} IDX files under {root}")


# --------------------------------------------------------------------------
# CIFAR-10 binary


def load_cifar10_bin(batch_paths: Sequence) -> Dataset:
    images, labels = [], []
    for path in batch_paths:
        raw = Path(path).read_bytes()
        if len(raw) % CIFAR_RECORD:
            whole = len(raw) // CIFAR_RECORD
            raise FormatError(f"{path}: {len(raw)} bytes is not a whole number of "
                              f"{CIFAR_RECORD}-byte records", offset=whole * CIFAR_RECORD)
        rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
        if rec.size and rec[:, 0].max() > 9:
            bad = int(np.argmax(rec[:, 0] > 9))
            raise FormatError(f"{path}: label byte {rec[bad, 0]} out of range", offset=bad * CIFAR_RECORD)
        labels.append(rec[:, 0].astype(np.int64))
        # record pixels are planar R, G, B of 32x32 each
        images.append(rec[:, 1:].reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1))
    x = np.concatenate(images).astype(np.float32) / np.float32(255.0)
    return Dataset(x, np.concatenate(labels), 10)


def load_cifar10(root, part="train") -> Dataset:
    root = Path(root)
    names = [f"data_batch_{i}.bin" for i in range(1, 6)] if part == "train" else ["test_batch.bin"]
    for sub in (root / "cifar-10-batches-bin", root / "cifar10", root):
        if (sub / names[0]).exists():
            return load_cifar10_bin([sub / n for n in names])
    raise FileNotFoundError(f"no CIFAR-10 binary batches under {root}")


def to_grayscale(ds: Dataset) -> Dataset:
    """ITU-R 601 luma; LeNet here takes single-channel input."""
    if ds.images.shape[-1] == 1:
        return ds
    w = np.array([0.299, 0.587, 0.114], dtype=np.float32)
    return Dataset((ds.images @ w)[..., None].astype(np.float32), ds.labels, ds.class_count)


# --------------------------------------------------------------------------
# synthetic


@dataclass(frozen=True)
class SyntheticTask:
    classes: int = 2
    size: int = 16
    count: int = 400
    noise: float = 0.1


def make_synthetic(task: SyntheticTask = SyntheticTask(), seed: int = 0) -> Dataset:
    """Class ``k`` lights cell ``k`` of a ``g x g`` grid (``g = ceil(sqrt(classes))``).

    Labels are balanced (``arange(n) % classes`` shuffled); Gaussian noise is
    added and pixels clipped to [0, 1].
    """
    rng = np.random.default_rng(seed)
    g = int(np.ceil(np.sqrt(task.classes)))
    cell = task.size // g
    if cell < 1:
        raise ContractError(f"{task.size}px image cannot hold a {g}x{g} grid")
    labels = rng.permutation(np.arange(task.count) % task.classes).astype(np.int64)
    images = np.zeros((task.count, task.size, task.size, 1), dtype=np.float32)
    for k in range(task.classes):
        r, c = divmod(k, g)
        images[labels == k, r * cell:(r + 1) * cell, c * cell:(c + 1) * cell, 0] = 1.0
    if task.noise > 0:
        images += rng.normal(0.0, task.noise, images.shape).astype(np.float32)
        np.clip(images, 0.0, 1.0, out=images)
    return Dataset(images, labels, task.classes)


# --------------------------------------------------------------------------
# splits and batches


@dataclass(frozen=True)
class SplitSpec:
    """Fractions (floats summing to at most 1) or absolute counts (ints)."""

    train: float | int = 0.8
    validation: float | int = 0.1
    test: float | int = 0.1
    seed: int = 0

    def counts(self, n):
        parts = (self.train, self.validation, self.test)
        if all(isinstance(p, int) and not isinstance(p, bool) for p in parts):
            counts = list(parts)
        else:
            if sum(parts) > 1.0 + 1e-9 or min(parts) < 0:
                raise ContractError(f"split fractions {parts} must be non-negative and sum to <= 1")
            counts = [int(round(p * n)) for p in parts]
            if abs(sum(parts) - 1.0) < 1e-9:
                counts[0] = n - counts[1] - counts[2]
        if sum(counts) > n or min(counts) < 0:
            raise ContractError(f"split {counts} does not fit {n} items")
        return counts


def split(ds: Dataset, spec: SplitSpec = SplitSpec()) -> tuple[Dataset, Dataset, Dataset]:
    n_train, n_val, n_test = spec.counts(len(ds))
    order = np.random.default_rng(spec.seed).permutation(len(ds))
    a, b = n_train, n_train + n_val
    return ds.take(order[:a]), ds.take(order[a:b]), ds.take(order[b:b + n_test])


def batches(ds: Dataset, batch_size: int = 32, seed: int | None = None) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield ``(images, labels)`` batches; shuffled when ``seed`` is given, last batch may be short."""
    order = np.arange(len(ds)) if seed is None else np.random.default_rng(seed).permutation(len(ds))
    for start in range(0, len(ds), batch_size):
        idx = order[start:start + batch_size]
        yield ds.images[idx], ds.labels[idx]
