"""
Non-Conservative Equilibrium Propagation Engine

Data loading module - MNIST IDX files, normalization, targets and batching.

IDX layout (big-endian): 2 zero bytes, a type byte (0x08 = unsigned byte),
a dimension count, one uint32 per dimension, then the raw payload.
Magic 0x00000803 is an image file (3 dims), 0x00000801 a label file (1 dim).
Files ending in .gz are decompressed transparently.

Example:
    loader = DataLoader(Path("data"))
    train = loader.load_split("train", subset=10_000)
    for batch in batches(train, batch_size=64, seed=0, epoch=1):
        ...
"""

from __future__ import annotations

import gzip
import logging
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Union

import numpy as np

from .errors import ConfigError, IdxDimensionError, IdxMagicError, IdxTruncatedError

logger = logging.getLogger(__name__)

DATA_DIR = Path("data")
DATA_DIR_ENV = "EP_DATA_DIR"
N_CLASSES = 10

IDX_MAGIC = {"images": 0x00000803, "labels": 0x00000801}
IDX_NDIM = {"images": 3, "labels": 1}

SPLIT_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def default_data_dir() -> Path:
    """EP_DATA_DIR if set, else ./data."""
    return Path(os.environ.get(DATA_DIR_ENV, DATA_DIR))


def _read_bytes(path: Path) -> bytes:
    if str(path).endswith(".gz"):
        with gzip.open(path, "rb") as f:
            return f.read()
    return path.read_bytes()


def load_idx(path: Union[str, Path], kind: Optional[str] = None) -> np.ndarray:
    """
    Parse an IDX file into a uint8 array.

    kind = "images" | "labels" enforces the matching magic number; None accepts either.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"IDX file not found: {path}")
    raw = _read_bytes(path)
    if len(raw) < 4:
        raise IdxTruncatedError(f"{path}: file shorter than the IDX header")

    (magic,) = struct.unpack(">I", raw[:4])
    if kind is not None:
        if kind not in IDX_MAGIC:
            raise ConfigError(f"Unknown IDX kind {kind!r}")
        if magic != IDX_MAGIC[kind]:
            raise IdxMagicError(f"{path}: magic 0x{magic:08x}, expected 0x{IDX_MAGIC[kind]:08x} for {kind}")
    elif magic not in IDX_MAGIC.values():
        raise IdxMagicError(f"{path}: unsupported magic 0x{magic:08x}")

    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IdxTruncatedError(f"{path}: header declares {ndim} dims but file is {len(raw)} bytes")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    expected = int(np.prod(dims))
    payload = raw[header:]
    if len(payload) < expected:
        raise IdxTruncatedError(f"{path}: payload has {len(payload)} bytes, header declares {expected}")
    if len(payload) > expected:
        raise IdxDimensionError(f"{path}: {len(payload) - expected} trailing bytes beyond dims {dims}")
    return np.frombuffer(payload, dtype=np.uint8, count=expected).reshape(dims)


def normalize_minmax(raw: np.ndarray) -> np.ndarray:
    """Map bytes 0..255 onto [-1, 1] with the global byte range."""
    return 2.0 * np.asarray(raw, dtype=float) / 255.0 - 1.0


def encode_targets(labels: np.ndarray, n_classes: int = N_CLASSES) -> np.ndarray:
    """Signed one-hot: +1 at the label, -1 elsewhere."""
    labels = np.asarray(labels, dtype=int)
    targets = -np.ones((len(labels), n_classes))
    targets[np.arange(len(labels)), labels] = 1.0
    return targets


def decode_targets(targets: np.ndarray) -> np.ndarray:
    return np.argmax(targets, axis=-1)


@dataclass(frozen=True)
class Dataset:
    """Normalized images and integer labels of one split."""
    images: np.ndarray  # (N, 784) in [-1, 1]
    labels: np.ndarray  # (N,) in 0..9
    split: str  # train | test

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def targets(self) -> np.ndarray:
        return encode_targets(self.labels)


@dataclass(frozen=True)
class Batch:
    inputs: np.ndarray  # (B, 784)
    targets: np.ndarray  # (B, 10) signed one-hot
    labels: np.ndarray  # (B,)
    index: int  # position within the epoch


class DataLoader:
    """Load MNIST splits from a directory of IDX files."""

    def __init__(self, data_dir: Optional[Path] = None):
        self.data_dir = Path(data_dir) if data_dir is not None else default_data_dir()

    def _resolve(self, name: str) -> Path:
        for candidate in (self.data_dir / name, self.data_dir / f"{name}.gz"):
            if candidate.exists():
                return candidate
        raise ConfigError(f"Missing MNIST file {name}[.gz] in {self.data_dir}")

    def load_split(self, split: str, subset: Optional[int] = None) -> Dataset:
        if split not in SPLIT_FILES:
            raise ConfigError(f"Unknown split {split!r}")
        image_name, label_name = SPLIT_FILES[split]
        images = load_idx(self._resolve(image_name), "images")
        labels = load_idx(self._resolve(label_name), "labels")
        if images.shape[0] != labels.shape[0]:
            raise IdxDimensionError(f"{split}: {images.shape[0]} images but {labels.shape[0]} labels")
        if subset is not None:
            images, labels = images[:subset], labels[:subset]
        logger.info(f"Loaded {split} split: {len(labels)} samples from {self.data_dir}")
        return Dataset(normalize_minmax(images.reshape(len(images), -1)), labels.astype(int), split)


def batches(dataset: Dataset, batch_size: int, seed: int, epoch: int) -> Iterator[Batch]:
    """
    Shuffled mini-batches; the order depends only on (seed, epoch).

    The last partial batch is kept.
    """
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    order = np.random.default_rng([seed, epoch]).permutation(len(dataset))
    for index, start in enumerate(range(0, len(order), batch_size)):
        idx = order[start:start + batch_size]
        labels = dataset.labels[idx]
        yield Batch(dataset.images[idx], encode_targets(labels), labels, index)
