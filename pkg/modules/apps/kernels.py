"""
Benchmark kernels

The numeric functions work on numpy arrays and are shared with the serial
reference implementations; the stage wrappers below adapt them to the
bytes-in, bytes-out kernel signature used by workers.
"""

import json
from typing import List, Sequence, Tuple

import numpy as np

from ..errors import KernelError
from .datasets import decode_matrix, decode_vector, encode_matrix, encode_vector, read_rows


# Logistic regression

def logistic_weights(margins: np.ndarray) -> np.ndarray:
    """sigma(-m), evaluated without overflow"""
    return 0.5 * (1.0 - np.tanh(0.5 * margins))


def lr_gradient(data: np.ndarray, coeff: np.ndarray) -> np.ndarray:
    """Sum over rows of sigma(-y<w,x>) y x; the label is the last column"""
    if data.shape[0] == 0:
        return np.zeros_like(coeff)
    features, labels = data[:, :-1], data[:, -1]
    if features.shape[1] != coeff.shape[0]:
        raise KernelError(f"coefficient dimension {coeff.shape[0]} does not match data dimension {features.shape[1]}")
    weights = logistic_weights(labels * (features @ coeff)) * labels
    return weights @ features


def lr_reduce(coeff: np.ndarray, partials: Sequence[np.ndarray], rate: float,
              rows: float) -> Tuple[np.ndarray, float]:
    """Sum partial gradients in partition order and take one ascent step"""
    total = np.zeros_like(coeff)
    for partial in partials:
        if partial.shape != coeff.shape:
            raise KernelError(f"partial gradient shape {partial.shape} does not match {coeff.shape}")
        total = total + partial
    step = total / rows
    return coeff + rate * step, float(np.sqrt(np.dot(step, step)))


def lr_errors(data: np.ndarray, coeff: np.ndarray) -> Tuple[int, int]:
    """(misclassified rows, rows); a zero margin predicts +1"""
    if data.shape[0] == 0:
        return 0, 0
    features, labels = data[:, :-1], data[:, -1]
    if features.shape[1] != coeff.shape[0]:
        raise KernelError(f"coefficient dimension {coeff.shape[0]} does not match data dimension {features.shape[1]}")
    predicted = np.where(features @ coeff >= 0, 1.0, -1.0)
    return int(np.count_nonzero(predicted != labels)), int(data.shape[0])


# k-means

def kmeans_assign(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """
    Per-cluster sums and counts for one partition

    Returns a k x (d + 1) matrix: coordinate sums then the member count.
    Ties go to the lowest centroid index.
    """
    k, dim = centroids.shape
    if k == 0:
        raise KernelError("k-means needs at least one centroid")
    partial = np.zeros((k, dim + 1))
    if points.shape[0] == 0:
        return partial
    if points.shape[1] != dim:
        raise KernelError(f"point dimension {points.shape[1]} does not match centroid dimension {dim}")
    distances = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    nearest = np.argmin(distances, axis=1)
    np.add.at(partial[:, :dim], nearest, points)
    partial[:, dim] = np.bincount(nearest, minlength=k)
    return partial


def kmeans_update(centroids: np.ndarray, partials: Sequence[np.ndarray]) -> Tuple[np.ndarray, float]:
    """New centroids from partition partials; an empty cluster keeps its centroid"""
    k, dim = centroids.shape
    total = np.zeros((k, dim + 1))
    for partial in partials:
        total = total + partial
    counts = total[:, dim]
    updated = centroids.copy()
    filled = counts > 0
    updated[filled] = total[filled, :dim] / counts[filled, None]
    shift = float(np.max(np.abs(updated - centroids))) if k else 0.0
    return updated, shift


# Stage wrappers

def _coeff(payload: bytes, dim: int) -> np.ndarray:
    return decode_vector(payload) if payload else np.zeros(dim)


def load_stage(inputs: List[bytes], params: bytes, write_count: int) -> List[bytes]:
    """params: JSON {path, start, stop}"""
    spec = json.loads(params.decode('utf-8'))
    try:
        rows = read_rows(spec['path'], int(spec.get('start', 0)), spec.get('stop'))
    except OSError as e:
        raise KernelError(f"cannot read {spec['path']}: {e}") from e
    return [encode_matrix(rows)] * write_count


def gradient_stage(inputs: List[bytes], params: bytes, write_count: int) -> List[bytes]:
    data = decode_matrix(inputs[0])
    coeff = _coeff(inputs[1], max(data.shape[1] - 1, 0))
    return [encode_vector(lr_gradient(data, coeff))]


def reduce_stage(inputs: List[bytes], params: bytes, write_count: int) -> List[bytes]:
    """reads: coeff, grad[0..P-1]; writes: coeff, gnorm; params: float64 [rate, rows]"""
    rate, rows = decode_vector(params)
    partials = [decode_vector(p) for p in inputs[1:]]
    dim = partials[0].shape[0] if partials else 0
    coeff, gnorm = lr_reduce(_coeff(inputs[0], dim), partials, float(rate), float(rows))
    outputs = [encode_vector(coeff), encode_vector(np.array([gnorm]))]
    return outputs[:write_count]


def broadcast_stage(inputs: List[bytes], params: bytes, write_count: int) -> List[bytes]:
    return [inputs[0]] * write_count


def estimate_stage(inputs: List[bytes], params: bytes, write_count: int) -> List[bytes]:
    data = decode_matrix(inputs[0])
    coeff = _coeff(inputs[1], max(data.shape[1] - 1, 0))
    errors, rows = lr_errors(data, coeff)
    return [encode_vector(np.array([errors, rows], dtype=float))]


def error_reduce_stage(inputs: List[bytes], params: bytes, write_count: int) -> List[bytes]:
    errors = rows = 0.0
    for payload in inputs:
        e, r = decode_vector(payload)
        errors += e
        rows += r
    return [encode_vector(np.array([errors / rows if rows else 0.0]))]


def assign_stage(inputs: List[bytes], params: bytes, write_count: int) -> List[bytes]:
    return [encode_matrix(kmeans_assign(decode_matrix(inputs[0]), decode_matrix(inputs[1])))]


def kupdate_stage(inputs: List[bytes], params: bytes, write_count: int) -> List[bytes]:
    """reads: centroids, partial[0..P-1]; writes: centroids, shift"""
    centroids = decode_matrix(inputs[0])
    updated, shift = kmeans_update(centroids, [decode_matrix(p) for p in inputs[1:]])
    outputs = [encode_matrix(updated), encode_vector(np.array([shift]))]
    return outputs[:write_count]


def register_app_stages(registry) -> None:
    registry.register('Load', load_stage)
    registry.register('Gradient', gradient_stage)
    registry.register('Reduce', reduce_stage)
    registry.register('Broadcast', broadcast_stage)
    registry.register('Estimate', estimate_stage)
    registry.register('ErrorReduce', error_reduce_stage)
    registry.register('Assign', assign_stage)
    registry.register('KUpdate', kupdate_stage)
