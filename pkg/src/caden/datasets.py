"""Dataset ingestion and synthetic data generation.

Supports the classic IDX binary format (big-endian, magic 0x00000803 for u8
image tensors and 0x00000801 for u8 label vectors) and a seeded Gaussian-blob
generator for desk-scale classification benchmarks.
"""

from __future__ import annotations

import gzip
import struct
from typing import IO

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

_DATA_STREAM = 202
_SHARD_STREAM = 203


def _open_maybe_gzip(path: str) -> IO[bytes]:
    if path.endswith(".gz"):
        return gzip.open(path, "rb")
    return open(path, "rb")


def load_idx_images(path: str) -> np.ndarray:
    """Read an IDX u8 image file into a float array scaled to [0, 1].

    Returns an (count, rows*cols) array; pixels are row-major per image.
    """
    with _open_maybe_gzip(path) as fp:
        magic, count, rows, cols = struct.unpack(">IIII", fp.read(16))
        if magic != IDX_IMAGES_MAGIC:
            raise ValueError(f"bad image magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}")
        raw = fp.read(count * rows * cols)
    if len(raw) != count * rows * cols:
        raise ValueError("truncated IDX image file")
    pixels = np.frombuffer(raw, dtype=np.uint8).astype(np.float64) / 255.0
    return pixels.reshape(count, rows * cols)


def load_idx_labels(path: str) -> np.ndarray:
    """Read an IDX u8 label file into an int array."""
    with _open_maybe_gzip(path) as fp:
        magic, count = struct.unpack(">II", fp.read(8))
        if magic != IDX_LABELS_MAGIC:
            raise ValueError(f"bad label magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}")
        raw = fp.read(count)
    if len(raw) != count:
        raise ValueError("truncated IDX label file")
    return np.frombuffer(raw, dtype=np.uint8).astype(np.int64)


def write_idx_images(path: str, images: np.ndarray, rows: int, cols: int) -> None:
    """Write float images in [0, 1] as an IDX u8 file (test/tooling helper)."""
    count = images.shape[0]
    u8 = np.clip(np.round(images * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fp:
        fp.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, count, rows, cols))
        fp.write(u8.tobytes())


def write_idx_labels(path: str, labels: np.ndarray) -> None:
    with open(path, "wb") as fp:
        fp.write(struct.pack(">II", IDX_LABELS_MAGIC, labels.shape[0]))
        fp.write(labels.astype(np.uint8).tobytes())


def gaussian_blobs(
    samples: int,
    features: int,
    classes: int,
    seed: int,
    spread: float = 1.0,
    center_scale: float = 4.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Balanced Gaussian-blob classification data.

    Class centers are drawn once from N(0, center_scale^2 I); each sample is
    its class center plus N(0, spread^2 I) noise.  Returns (X, y) with X of
    shape (samples, features) and integer labels y.  Classes are balanced up
    to remainder, and the rows are shuffled.
    """
    rng = np.random.default_rng([_DATA_STREAM, seed])
    centers = center_scale * rng.standard_normal((classes, features))
    y = np.arange(samples) % classes
    x = centers[y] + spread * rng.standard_normal((samples, features))
    perm = rng.permutation(samples)
    return x[perm], y[perm]


def shard_indices(total: int, agents: int, seed: int) -> list[np.ndarray]:
    """Partition sample indices across agents by a seeded random shuffle.

    Shards are equal-sized with the remainder going to the last agent.
    """
    perm = np.random.default_rng([_SHARD_STREAM, seed]).permutation(total)
    base = total // agents
    shards = []
    start = 0
    for i in range(agents):
        size = base + (total - base * agents if i == agents - 1 else 0)
        shards.append(np.sort(perm[start : start + size]))
        start += size
    return shards
