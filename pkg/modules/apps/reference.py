"""
Single-threaded reference implementations

Same kernels, same partitioning and the same reduction order as the
distributed programs, so results can be compared bit for bit.
"""

from typing import List, Optional, Tuple

import numpy as np

from .datasets import partition_bounds
from .kernels import kmeans_assign, kmeans_update, lr_errors, lr_gradient, lr_reduce


def reference_lr(train: np.ndarray, held: np.ndarray, partitions: int, iterations: int,
                 rate: float = 1.0, estimate_every: int = 5) -> Tuple[np.ndarray, List[float]]:
    """
    Returns:
        (final coefficients, held-out error after each estimate)
    """
    bounds = partition_bounds(train.shape[0], partitions)
    held_bounds = partition_bounds(held.shape[0], partitions)
    coeff = np.zeros(train.shape[1] - 1)
    last_error: Optional[float] = None
    errors = []
    for iteration in range(iterations):
        partials = [lr_gradient(train[a:b], coeff) for a, b in bounds]
        coeff, _ = lr_reduce(coeff, partials, rate, float(train.shape[0]))
        if estimate_every and (iteration + 1) % estimate_every == 0:
            wrong = total = 0.0
            for a, b in held_bounds:
                e, r = lr_errors(held[a:b], coeff)
                wrong += e
                total += r
            error = wrong / total if total else 0.0
            if last_error is not None and error > last_error:
                rate = rate / 2
            last_error = error
            errors.append(error)
    return coeff, errors


def reference_kmeans(points: np.ndarray, k: int, partitions: int, iterations: int) -> np.ndarray:
    bounds = partition_bounds(points.shape[0], partitions)
    centroids = np.array(points[:k], dtype=float)
    for _ in range(iterations):
        partials = [kmeans_assign(points[a:b], centroids) for a, b in bounds]
        centroids, _ = kmeans_update(centroids, partials)
    return centroids


def full_gradient(data: np.ndarray, coeff: np.ndarray) -> np.ndarray:
    """Row-by-row gradient over the whole set; an oracle for the partitioned sum"""
    total = np.zeros_like(coeff)
    for row in data:
        x, y = row[:-1], row[-1]
        margin = y * float(np.dot(coeff, x))
        total += y * x / (1.0 + np.exp(margin))
    return total
