"""
Metrics CSV: one row per block invocation

The column list is frozen; docs/METRICS.md describes every column.
"""

import csv
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from ..errors import ExperimentError
from ..utils.file_handler import FileHandler

logger = logging.getLogger(__name__)

COLUMNS = (
    ('run', str),
    ('benchmark', str),
    ('iteration', int),
    ('block', str),
    ('mode', str),
    ('templates', int),
    ('workers', int),
    ('tasks', int),
    ('epoch', int),
    ('generation', int),
    ('wall_s', float),
    ('controller_us', float),
    ('tasks_per_s', float),
    ('d2c_msgs', int),
    ('c2w_msgs', int),
    ('c2w_task_msgs', int),
    ('c2w_template_msgs', int),
    ('c2w_install_msgs', int),
    ('patch_copies', int),
    ('data_transfers', int),
    ('cache_hits', int),
    ('cache_misses', int),
    ('template_generations', int),
    ('install_controller_us', float),
    ('install_central_us', float),
    ('install_local_us', float),
    ('event', str),
    ('done_ms', float),
)
HEADER = [name for name, _ in COLUMNS]
TYPES = dict(COLUMNS)


def _format(value, kind, digits: int) -> str:
    if value is None or value == '':
        return ''
    if kind is float:
        return f"{float(value):.{digits}g}"
    if kind is int:
        return str(int(value))
    return str(value)


def block_row(run: str, benchmark: str, iteration: int, handle, templates: bool, event: str = '',
              origin: Optional[float] = None) -> dict:
    """
    Row for one finished block execution

    Args:
        origin: perf_counter reading the run started at; enables `done_ms`
    """
    stats = handle.stats
    wall = handle.wall_s
    tasks = int(stats.get('tasks', 0))
    row = {name: stats.get(name, 0) for name in HEADER if name in stats}
    row.update(
        run=run,
        benchmark=benchmark,
        iteration=iteration,
        block=handle.block,
        mode=handle.mode,
        templates=int(templates),
        tasks=tasks,
        wall_s=wall,
        tasks_per_s=tasks / wall if wall > 0 else 0.0,
        event=event,
    )
    if origin is not None:
        row['done_ms'] = (handle.sent_at + wall - origin) * 1000.0
    return row


class MetricsWriter:
    """Appends rows, flushing after each so other processes can follow progress"""

    def __init__(self, path: str, digits: int = 6, append: bool = False):
        self.path = Path(path)
        self.digits = digits
        FileHandler.ensure_directory(self.path.parent)
        try:
            fresh = not (append and self.path.exists() and self.path.stat().st_size > 0)
            self._file = open(self.path, 'a' if append else 'w', newline='', encoding='utf-8')
        except OSError as e:
            raise ExperimentError(f"cannot write metrics to {self.path}: {e}") from e
        self._writer = csv.writer(self._file)
        if fresh:
            self._writer.writerow(HEADER)
            self._file.flush()
        self.rows = 0

    def write(self, row: Dict) -> None:
        unknown = set(row) - set(HEADER)
        if unknown:
            raise ExperimentError(f"unknown metrics columns {sorted(unknown)}")
        self._writer.writerow([_format(row.get(name, ''), kind, self.digits) for name, kind in COLUMNS])
        self._file.flush()
        self.rows += 1

    def close(self) -> None:
        self._file.close()

    def __enter__(self) -> 'MetricsWriter':
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def emit_metrics(rows: Iterable[Dict], path: str, digits: int = 6, append: bool = False) -> Path:
    with MetricsWriter(path, digits, append) as writer:
        for row in rows:
            writer.write(row)
    return Path(path)


def _parse(value: str, kind):
    if value == '':
        return '' if kind is str else None
    if kind is int:
        return int(float(value))
    if kind is float:
        return float(value)
    return value


def read_metrics(path: str) -> List[Dict]:
    with open(path, newline='', encoding='utf-8') as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            return []
        if header != HEADER:
            raise ExperimentError(f"{path} does not have the metrics header")
        return [{name: _parse(value, TYPES[name]) for name, value in zip(header, row)} for row in reader]


def last_iteration(path: str) -> Optional[int]:
    """Highest iteration recorded so far, tolerating a partially written last line"""
    try:
        with open(path, newline='', encoding='utf-8') as f:
            rows = list(csv.reader(f))
    except OSError:
        return None
    best = None
    for row in rows[1:]:
        if len(row) != len(HEADER):
            continue
        try:
            value = int(float(row[HEADER.index('iteration')]))
        except ValueError:
            continue
        best = value if best is None else max(best, value)
    return best


def _block_rows(rows: Iterable[Dict], block: Optional[str]) -> List[Dict]:
    return [r for r in rows if block is None or r['block'] == block]


def iteration_times(rows: Iterable[Dict], block: Optional[str] = None) -> List[float]:
    """
    Seconds each row added to its run

    Pipelined blocks overlap, so past the first row this is the gap between
    consecutive completions rather than `wall_s`.
    """
    times = []
    previous = None
    for row in _block_rows(rows, block):
        done = row.get('done_ms')
        if previous is None or done is None:
            times.append(row['wall_s'])
        else:
            times.append((done - previous) / 1000.0)
        previous = done
    return times


def steady_throughput(rows: Iterable[Dict], skip: int = 1, block: Optional[str] = None) -> float:
    """
    Tasks per second after the first `skip` rows, from completion to completion

    Raises:
        ExperimentError: too few rows, or rows without `done_ms`
    """
    rows = _block_rows(rows, block)
    if skip < 1 or len(rows) <= skip:
        raise ExperimentError(f"need more than {max(skip, 1)} rows, got {len(rows)}")
    start, end = rows[skip - 1].get('done_ms'), rows[-1].get('done_ms')
    if start is None or end is None:
        raise ExperimentError("rows carry no done_ms")
    span = (end - start) / 1000.0
    tasks = sum(r['tasks'] for r in rows[skip:])
    return tasks / span if span > 0 else 0.0


def amortization(rows: Iterable[Dict], first: int = 3, last: int = 10,
                 block: Optional[str] = None) -> Tuple[float, float, float]:
    """
    Install cost against steady state

    Returns:
        (time of the first row, mean and coefficient of variation of rows first..last)
    """
    times = iteration_times(rows, block)
    if len(times) <= last:
        raise ExperimentError(f"need {last + 1} rows, got {len(times)}")
    steady = np.asarray(times[first:last + 1])
    mean = float(steady.mean())
    return times[0], mean, float(steady.std() / mean) if mean > 0 else 0.0
