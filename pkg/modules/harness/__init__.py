"""Experiment harness: metrics files, scenarios and the in-process cluster"""

from .local_cluster import LocalChannel, LocalCluster
from .metrics import COLUMNS, HEADER, MetricsWriter, block_row, emit_metrics, read_metrics

__all__ = [
    'COLUMNS',
    'HEADER',
    'LocalChannel',
    'LocalCluster',
    'MetricsWriter',
    'block_row',
    'emit_metrics',
    'read_metrics',
]
