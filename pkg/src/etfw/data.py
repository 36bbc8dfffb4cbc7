"""Dataset ingestion and synthetic data: IDX (MNIST) files, CIFAR binaries,
simplex-centered Gaussian blobs, and seeded batch iteration."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import geometry

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


class DataFormatError(ValueError):
    pass


@dataclass
class LabeledDataset:
    inputs: np.ndarray  # (N, C, H, W) or (N, D), values in [0, 1]
    labels: np.ndarray  # (N,) int class indices
    num_classes: int
    name: str

    def __post_init__(self):
        if len(self.inputs) != len(self.labels):
            raise DataFormatError(
                f"{len(self.inputs)} inputs but {len(self.labels)} labels"
            )
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise DataFormatError("label out of range")

    def __len__(self):
        return len(self.labels)

    def subset(self, idx) -> "LabeledDataset":
        # an integer means "first n samples"; anything else is a fancy index
        if isinstance(idx, (int, np.integer)):
            idx = slice(None, int(idx))
        return LabeledDataset(self.inputs[idx], self.labels[idx], self.num_classes, self.name)


def _read_idx(path: str, expected_magic: int):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise DataFormatError(f"{path}: truncated header")
    magic = struct.unpack(">I", raw[:4])[0]
    if magic != expected_magic:
        raise DataFormatError(
            f"{path}: magic 0x{magic:08x}, expected 0x{expected_magic:08x}"
        )
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise DataFormatError(f"{path}: truncated dimension header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    count = int(np.prod(dims))
    body = raw[header:]
    if len(body) != count:
        raise DataFormatError(f"{path}: expected {count} data bytes, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(dims)


def load_idx(images_path: str, labels_path: str, name: str = "mnist") -> LabeledDataset:
    """Big-endian IDX pair (images + labels), pixels scaled into [0, 1]."""
    images = _read_idx(images_path, IDX_IMAGE_MAGIC)
    labels = _read_idx(labels_path, IDX_LABEL_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise DataFormatError(
            f"count mismatch: {images.shape[0]} images vs {labels.shape[0]} labels"
        )
    n, h, w = images.shape
    inputs = images.reshape(n, 1, h, w).astype(np.float64) / 255.0
    return LabeledDataset(inputs, labels.astype(np.int64), int(labels.max()) + 1, name)


def save_idx(dataset: LabeledDataset, images_path: str, labels_path: str) -> None:
    """Inverse of load_idx; pixel floats are rescaled back to bytes."""
    n = len(dataset)
    imgs = dataset.inputs.reshape(n, dataset.inputs.shape[-2], dataset.inputs.shape[-1])
    raw = np.round(imgs * 255.0).astype(np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, raw.shape[1], raw.shape[2]))
        fh.write(raw.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABEL_MAGIC, n))
        fh.write(dataset.labels.astype(np.uint8).tobytes())


def load_cifar(batch_paths, name: str = "cifar10", num_classes: int = 10) -> LabeledDataset:
    """CIFAR binary batches: each record is a label byte + 3072 RGB-plane bytes."""
    record = 1 + 3072
    all_x, all_y = [], []
    for path in batch_paths:
        with open(path, "rb") as fh:
            raw = fh.read()
        if len(raw) % record:
            raise DataFormatError(f"{path}: size {len(raw)} not a multiple of {record}")
        arr = np.frombuffer(raw, dtype=np.uint8).reshape(-1, record)
        all_y.append(arr[:, 0].astype(np.int64))
        all_x.append(arr[:, 1:].reshape(-1, 3, 32, 32).astype(np.float64) / 255.0)
    return LabeledDataset(np.concatenate(all_x), np.concatenate(all_y), num_classes, name)


def synth_blobs(k: int, p: int, n_per_class: int, spread: float, seed: int) -> LabeledDataset:
    """K isotropic Gaussian clusters on the simplex vertices, scaled into [0,1]^P."""
    if k < 2 or p < 2:
        raise ValueError(f"need K >= 2 and P >= 2, got K={k}, P={p}")
    centers = geometry.factor_gram(k, p, 1.0)  # raises when K > P+1
    # unit-ball geometry mapped into the box: x -> 0.5 + 0.3 * x
    rng = np.random.default_rng(seed)
    pts = np.repeat(centers, n_per_class, axis=0)
    pts = pts + rng.normal(scale=spread, size=pts.shape)
    inputs = np.clip(0.5 + 0.3 * pts, 0.0, 1.0)
    labels = np.repeat(np.arange(k), n_per_class)
    return LabeledDataset(inputs, labels, k, f"blobs-k{k}-p{p}")


def batches(dataset: LabeledDataset, batch_size: int, shuffle_seed: int | None = None,
            augment: bool = False):
    """Yield (x, y) covering every sample exactly once; last batch may be short."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    n = len(dataset)
    order = np.arange(n)
    rng = None
    if shuffle_seed is not None:
        rng = np.random.default_rng(shuffle_seed)
        rng.shuffle(order)
    for start in range(0, n, batch_size):
        idx = order[start : start + batch_size]
        x = dataset.inputs[idx]
        if augment:
            x = _augment(x, rng or np.random.default_rng(0))
        yield x, dataset.labels[idx]


def _augment(x: np.ndarray, rng) -> np.ndarray:
    """4-pixel pad + random crop + horizontal flip (CIFAR-style)."""
    n, c, h, w = x.shape
    padded = np.pad(x, ((0, 0), (0, 0), (4, 4), (4, 4)))
    out = np.empty_like(x)
    offs = rng.integers(0, 9, size=(n, 2))
    flips = rng.random(n) < 0.5
    for i in range(n):
        di, dj = offs[i]
        crop = padded[i, :, di : di + h, dj : dj + w]
        out[i] = crop[:, :, ::-1] if flips[i] else crop
    return out
