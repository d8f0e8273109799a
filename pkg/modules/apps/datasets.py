"""
Dataset files and in-object matrix encoding

A matrix is stored as a 16-byte header (row count, column count as
little-endian uint64) followed by row-major little-endian float64 values.
The same layout is used on disk and inside object payloads.
"""

import logging
import struct
from pathlib import Path
from typing import List, Tuple

import numpy as np

from ..utils.file_handler import FileHandler

logger = logging.getLogger(__name__)

HEADER = struct.Struct('<QQ')
DTYPE = np.dtype('<f8')


def encode_matrix(matrix: np.ndarray) -> bytes:
    matrix = np.ascontiguousarray(matrix, dtype=DTYPE)
    if matrix.ndim == 1:
        matrix = matrix.reshape(1, -1)
    rows, cols = matrix.shape
    return HEADER.pack(rows, cols) + matrix.tobytes()


def decode_matrix(payload: bytes) -> np.ndarray:
    if len(payload) < HEADER.size:
        return np.zeros((0, 0), dtype=DTYPE)
    rows, cols = HEADER.unpack_from(payload)
    data = np.frombuffer(payload, dtype=DTYPE, offset=HEADER.size, count=rows * cols)
    return data.reshape(rows, cols)


def encode_vector(vector: np.ndarray) -> bytes:
    return np.ascontiguousarray(vector, dtype=DTYPE).tobytes()


def decode_vector(payload: bytes) -> np.ndarray:
    return np.frombuffer(payload, dtype=DTYPE)


def write_dataset(path: str, matrix: np.ndarray) -> Path:
    path = Path(path)
    FileHandler.write_bytes_atomic(path, encode_matrix(matrix))
    logger.info("wrote %s (%d x %d)", path, *np.shape(matrix))
    return path


def dataset_shape(path: str) -> Tuple[int, int]:
    with open(path, 'rb') as f:
        header = f.read(HEADER.size)
    if len(header) != HEADER.size:
        raise ValueError(f"{path} is not a dataset file")
    return HEADER.unpack(header)


def read_rows(path: str, start: int = 0, stop: int = None) -> np.ndarray:
    """Rows [start, stop) of a dataset file"""
    rows, cols = dataset_shape(path)
    stop = rows if stop is None else min(stop, rows)
    start = max(0, min(start, stop))
    data = np.fromfile(path, dtype=DTYPE, count=(stop - start) * cols,
                       offset=HEADER.size + start * cols * DTYPE.itemsize)
    return data.reshape(stop - start, cols)


def partition_bounds(rows: int, partitions: int) -> List[Tuple[int, int]]:
    """Contiguous row ranges; the first `rows % partitions` ranges get one extra row"""
    if partitions <= 0:
        raise ValueError("partition count must be positive")
    base, extra = divmod(rows, partitions)
    bounds = []
    start = 0
    for p in range(partitions):
        stop = start + base + (1 if p < extra else 0)
        bounds.append((start, stop))
        start = stop
    return bounds


def generate_lr(rows: int, dim: int, seed: int) -> np.ndarray:
    """
    Linearly separable rows: dim features then a +1/-1 label

    The separating direction comes from a fixed seed, so a training set (seed)
    and a held-out set (seed + 1) share the same labelling rule.
    """
    truth = np.random.default_rng(0xC0EFF).normal(size=dim)
    rng = np.random.default_rng(seed)
    features = rng.normal(size=(rows, dim))
    labels = np.where(features @ truth >= 0, 1.0, -1.0)
    return np.hstack([features, labels.reshape(-1, 1)])


def generate_points(rows: int, dim: int, k: int, seed: int) -> np.ndarray:
    """Points scattered around k random centres"""
    rng = np.random.default_rng(seed)
    centres = rng.uniform(-10.0, 10.0, size=(max(k, 1), dim))
    labels = rng.integers(0, max(k, 1), size=rows)
    return centres[labels] + rng.normal(scale=1.0, size=(rows, dim))
