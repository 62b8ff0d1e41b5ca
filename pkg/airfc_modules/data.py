"""
AirFC Simulator - Dataset Ingestion (IDX)
=========================================

Loads MNIST / Fashion-MNIST from the IDX files, normalizes pixels to [0, 1],
subsets and batches deterministically.

IDX layout (big-endian):
  images: magic 0x00000803, count, rows, cols, then count*rows*cols uint8
  labels: magic 0x00000801, count, then count uint8

Files may be gzip-compressed (".gz" suffix).
"""

import gzip
import os
import struct
from dataclasses import dataclass
from typing import Iterator, Tuple

import numpy as np

from shared_modules.config import DATASET_FOLDERS, IDX_FILE_NAMES, IMAGE_SIDE
from shared_modules.errors import BadMagic, ConfigError, CountMismatch, EmptyDataset, TruncatedFile


IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    images: np.ndarray   # count x 28 x 28, float64 in [0, 1]
    labels: np.ndarray   # count, int64 in [0, 9]
    split: str = "train"

    def __post_init__(self):
        if self.images.shape[0] != self.labels.shape[0]:
            raise CountMismatch(f"{self.images.shape[0]} images vs {self.labels.shape[0]} labels")
        if self.images.size and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise ValueError("Pixel values must lie in [0, 1]")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() > 9):
            raise ValueError("Labels must lie in [0, 9]")

    def __len__(self) -> int:
        return int(self.labels.shape[0])


# =========================
# IDX READ / WRITE
# =========================

def _read_bytes(path: str) -> bytes:
    opener = gzip.open if path.endswith(".gz") else open
    with opener(path, "rb") as f:
        return f.read()


def _parse_images(raw: bytes, path: str) -> np.ndarray:
    if len(raw) < 16:
        raise TruncatedFile(f"{path}: image header needs 16 bytes, got {len(raw)}")
    magic, count, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IMAGES_MAGIC:
        raise BadMagic(f"{path}: magic 0x{magic:08x}, expected 0x{IMAGES_MAGIC:08x}")
    if (rows, cols) != (IMAGE_SIDE, IMAGE_SIDE):
        raise BadMagic(f"{path}: image size {rows}x{cols}, expected {IMAGE_SIDE}x{IMAGE_SIDE}")
    need = count * rows * cols
    if len(raw) - 16 < need:
        raise TruncatedFile(f"{path}: expected {need} pixel bytes, got {len(raw) - 16}")
    pixels = np.frombuffer(raw, dtype=np.uint8, count=need, offset=16)
    return pixels.reshape(count, rows, cols).astype(np.float64) / 255.0


def _parse_labels(raw: bytes, path: str) -> np.ndarray:
    if len(raw) < 8:
        raise TruncatedFile(f"{path}: label header needs 8 bytes, got {len(raw)}")
    magic, count = struct.unpack(">II", raw[:8])
    if magic != LABELS_MAGIC:
        raise BadMagic(f"{path}: magic 0x{magic:08x}, expected 0x{LABELS_MAGIC:08x}")
    if len(raw) - 8 < count:
        raise TruncatedFile(f"{path}: expected {count} label bytes, got {len(raw) - 8}")
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=8).astype(np.int64)


def load_idx(images_path: str, labels_path: str, split: str = "train") -> Dataset:
    images = _parse_images(_read_bytes(images_path), images_path)
    labels = _parse_labels(_read_bytes(labels_path), labels_path)
    if images.shape[0] != labels.shape[0]:
        raise CountMismatch(f"{images_path} has {images.shape[0]} images, {labels_path} has {labels.shape[0]} labels")
    return Dataset(images=images, labels=labels, split=split)


def encode_idx(ds: Dataset) -> Tuple[bytes, bytes]:
    """IDX bytes (images, labels); pixels re-quantized as round(255 x)."""
    count = len(ds)
    pixels = np.rint(ds.images * 255.0).astype(np.uint8)
    images = struct.pack(">IIII", IMAGES_MAGIC, count, IMAGE_SIDE, IMAGE_SIDE) + pixels.tobytes()
    labels = struct.pack(">II", LABELS_MAGIC, count) + ds.labels.astype(np.uint8).tobytes()
    return images, labels


def save_idx(ds: Dataset, images_path: str, labels_path: str) -> None:
    images, labels = encode_idx(ds)
    for path, payload in ((images_path, images), (labels_path, labels)):
        opener = gzip.open if path.endswith(".gz") else open
        with opener(path, "wb") as f:
            f.write(payload)


def _resolve(folder: str, name: str) -> str:
    for candidate in (name, name + ".gz"):
        path = os.path.join(folder, candidate)
        if os.path.exists(path):
            return path
    raise FileNotFoundError(f"Missing IDX file {name}[.gz] under {folder}")


def load_split(root: str, name: str, split: str) -> Dataset:
    """Standard file names under <root>/<dataset folder>/, e.g. input_data/mnist/t10k-images-idx3-ubyte."""
    if name not in DATASET_FOLDERS:
        raise ConfigError(f"Unknown dataset {name!r}; expected one of {sorted(DATASET_FOLDERS)}")
    if split not in IDX_FILE_NAMES:
        raise ConfigError(f"Unknown split {split!r}; expected 'train' or 'test'")
    folder = os.path.join(root, DATASET_FOLDERS[name])
    images_name, labels_name = IDX_FILE_NAMES[split]
    return load_idx(_resolve(folder, images_name), _resolve(folder, labels_name), split=split)


def dataset_available(root: str, name: str) -> bool:
    try:
        folder = os.path.join(root, DATASET_FOLDERS[name])
        for split in IDX_FILE_NAMES.values():
            for file_name in split:
                _resolve(folder, file_name)
        return True
    except (KeyError, FileNotFoundError):
        return False


# =========================
# SUBSETS / BATCHES
# =========================

def subset(ds: Dataset, count: int, seed: int) -> Dataset:
    """First `count` samples after a seeded shuffle (whole set if count >= len)."""
    if count >= len(ds):
        return ds
    order = np.random.default_rng(seed).permutation(len(ds))[:count]
    return Dataset(images=ds.images[order], labels=ds.labels[order], split=ds.split)


def batches(ds: Dataset, batch_size: int, seed: int, epoch: int = 0) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """
    Shuffled mini-batches for one epoch, deterministic per (seed, epoch).
    The short final batch is dropped.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    if len(ds) == 0:
        raise EmptyDataset(f"No samples in the {ds.split} split")
    order = np.random.default_rng([seed, epoch]).permutation(len(ds))
    for start in range(0, len(ds) - batch_size + 1, batch_size):
        idx = order[start:start + batch_size]
        yield ds.images[idx], ds.labels[idx]


def sequential_batches(ds: Dataset, batch_size: int) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """In-order chunks for evaluation; the final chunk may be short."""
    if len(ds) == 0:
        raise EmptyDataset(f"No samples in the {ds.split} split")
    for start in range(0, len(ds), batch_size):
        yield ds.images[start:start + batch_size], ds.labels[start:start + batch_size]
