"""Dataset container and loaders: IDX files, synthetic blobs, bundled digits.

IDX is the classic big-endian image/label distribution format: images carry
magic 0x00000803 and three dimension fields, labels carry 0x00000801 and one.
Pixel bytes are scaled to [0, 1]. Malformed files raise distinct errors for
magic mismatch, truncation, and image/label count disagreement.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..errors import IdxCountMismatchError, IdxMagicError, IdxTruncatedError
from ..measures import SeededStream

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

# Fixed shuffle key for the bundled-digits split so the split is a constant
# of the package, not of any experiment seed.
_DIGITS_SPLIT_SEED = 0x5D1617


@dataclass(frozen=True)
class Dataset:
    """Immutable feature matrix with integer labels."""

    features: np.ndarray
    labels: np.ndarray
    split: str
    num_classes: int

    def __init__(self, features, labels, split: str, num_classes: int):
        f = np.asarray(features, dtype=float)
        y = np.asarray(labels, dtype=np.int64)
        if f.ndim != 2 or y.ndim != 1 or f.shape[0] != y.shape[0]:
            raise ValueError("features must be (n, d) with matching (n,) labels")
        if not np.all(np.isfinite(f)):
            raise ValueError("features must be finite")
        if y.size and (y.min() < 0 or y.max() >= num_classes):
            raise ValueError(f"labels must lie in [0, {num_classes})")
        f = f.copy(); f.flags.writeable = False
        y = y.copy(); y.flags.writeable = False
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "split", split)
        object.__setattr__(self, "num_classes", num_classes)

    @property
    def size(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def take(self, indices) -> "Dataset":
        idx = np.asarray(indices)
        return Dataset(self.features[idx], self.labels[idx], self.split,
                       self.num_classes)


def _read_exact(f, count: int, path: str, what: str) -> bytes:
    data = f.read(count)
    if len(data) != count:
        raise IdxTruncatedError(
            f"{path}: truncated {what}: expected {count} bytes, got {len(data)}")
    return data


def load_idx(images_path: str, labels_path: str, num_classes: int = 10) -> Dataset:
    """Read an images/labels IDX pair into a Dataset with [0, 1] features."""
    with open(images_path, "rb") as f:
        magic, count, rows, cols = struct.unpack(
            ">IIII", _read_exact(f, 16, images_path, "image header"))
        if magic != IDX_IMAGES_MAGIC:
            raise IdxMagicError(
                f"{images_path}: image magic 0x{magic:08x} != 0x{IDX_IMAGES_MAGIC:08x}")
        raw = _read_exact(f, count * rows * cols, images_path, "pixel block")
    features = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows * cols) / 255.0

    with open(labels_path, "rb") as f:
        magic, label_count = struct.unpack(
            ">II", _read_exact(f, 8, labels_path, "label header"))
        if magic != IDX_LABELS_MAGIC:
            raise IdxMagicError(
                f"{labels_path}: label magic 0x{magic:08x} != 0x{IDX_LABELS_MAGIC:08x}")
        labels = np.frombuffer(_read_exact(f, label_count, labels_path, "label block"),
                               dtype=np.uint8)
    if label_count != count:
        raise IdxCountMismatchError(
            f"{count} images but {label_count} labels "
            f"({images_path} vs {labels_path})")
    return Dataset(features, labels.astype(np.int64), "train", num_classes)


def write_idx(images_path: str, labels_path: str, dataset: Dataset,
              rows: int, cols: int) -> None:
    """Inverse of load_idx (features are rescaled to bytes); used to build
    fixtures and export synthetic data in the interchange format."""
    n = dataset.size
    if rows * cols != dataset.dim:
        raise ValueError(f"rows*cols = {rows * cols} != feature dim {dataset.dim}")
    pixels = np.clip(np.round(dataset.features * 255.0), 0, 255).astype(np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols))
        f.write(pixels.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, n))
        f.write(dataset.labels.astype(np.uint8).tobytes())


def synth_blobs(num_classes: int = 3, per_class: int = 100, dim: int = 2,
                spread: float = 0.3, stream: SeededStream = SeededStream(0)) -> Dataset:
    """Gaussian clusters around simplex-vertex means.

    Class k sits at the scaled basis vector e_{k mod d} * (1 + k // d): the
    first d classes occupy the standard-simplex vertices, further classes
    cycle outward. Deterministic per stream.
    """
    if num_classes < 1 or per_class < 1 or dim < 1:
        raise ValueError("all counts must be positive")
    gen = stream.generator()
    feats, labels = [], []
    for k in range(num_classes):
        mean = np.zeros(dim)
        mean[k % dim] = 1.0 + k // dim
        feats.append(mean + spread * gen.standard_normal((per_class, dim)))
        labels.append(np.full(per_class, k, dtype=np.int64))
    return Dataset(np.concatenate(feats), np.concatenate(labels), "train",
                   num_classes)


def load_digits64(train_count: int = 1437) -> tuple[Dataset, Dataset]:
    """The bundled 8x8 handwritten-digit images (1797 examples, 10 classes),
    deterministically shuffled and split into train/test.

    This is the offline stand-in at desk scale for pixel-image experiments;
    features are scaled from [0, 16] to [0, 1].
    """
    from sklearn.datasets import load_digits

    raw = load_digits()
    features = raw.data / 16.0
    labels = raw.target.astype(np.int64)
    n = features.shape[0]
    if not 0 < train_count < n:
        raise ValueError(f"train_count must be in (0, {n})")
    perm = SeededStream(_DIGITS_SPLIT_SEED).generator().permutation(n)
    tr, te = perm[:train_count], perm[train_count:]
    return (Dataset(features[tr], labels[tr], "train", 10),
            Dataset(features[te], labels[te], "test", 10))
