"""Benchmark programs written against the driver API"""

from .base import Benchmark, BenchmarkParams
from .kmeans import KMeans
from .lr import LogisticRegression
from .runner import BENCHMARKS, BenchmarkRunner, create_benchmark
from .spin import Spin

__all__ = [
    'BENCHMARKS',
    'Benchmark',
    'BenchmarkParams',
    'BenchmarkRunner',
    'KMeans',
    'LogisticRegression',
    'Spin',
    'create_benchmark',
]
