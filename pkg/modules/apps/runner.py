"""
Benchmark loop: setup, iterations, scripted events, checkpoints and restarts
"""

import logging
import time
from typing import Callable, Dict, Iterable, List, Optional, Tuple

from ..driver.client import BlockHandle, DriverClient
from ..errors import DriverError, RestartFromCheckpoint
from ..harness.metrics import MetricsWriter, block_row
from .base import Benchmark, BenchmarkParams
from .kmeans import KMeans
from .lr import LogisticRegression
from .spin import Spin

logger = logging.getLogger(__name__)

BENCHMARKS = {
    'lr': LogisticRegression,
    'kmeans': KMeans,
    'spin': Spin,
}

DRIVER_EVENTS = ('templates_on', 'templates_off', 'halve', 'restore_workers', 'checkpoint')
HARNESS_EVENTS = ('kill_worker',)


def create_benchmark(params: BenchmarkParams) -> Benchmark:
    try:
        return BENCHMARKS[params.benchmark](params)
    except KeyError:
        raise DriverError(f"unknown benchmark {params.benchmark!r}; choose from {sorted(BENCHMARKS)}") from None


class BenchmarkRunner:
    """
    Runs one benchmark to completion

    Args:
        client: connected driver client
        params: benchmark parameters including the event script
        metrics: optional writer receiving one row per block execution
        hooks: handlers for events the driver cannot apply itself (kill_worker)
    """

    def __init__(self, client: DriverClient, params: BenchmarkParams, metrics: Optional[MetricsWriter] = None,
                 hooks: Optional[Dict[str, Callable[[int], None]]] = None, run_name: str = ''):
        self.client = client
        self.params = params
        self.app = create_benchmark(params)
        self.metrics = metrics
        self.hooks = hooks or {}
        self.run_name = run_name or params.benchmark
        self.fired: set = set()
        self.rows: List[dict] = []
        self.restarts = 0
        self._pending: List[Tuple[int, str, BlockHandle, bool]] = []
        self.origin = time.perf_counter()

    def _events_at(self, iteration: int) -> List[str]:
        return [action for at, action in self.params.events if at == iteration and (at, action) not in self.fired]

    def _apply_events(self, iteration: int, state: dict) -> str:
        applied = []
        for action in self._events_at(iteration):
            self.fired.add((iteration, action))
            applied.append(action)
            logger.info("iteration %d: %s", iteration, action)
            if action == 'templates_on':
                self.client.templates = True
            elif action == 'templates_off':
                self.client.templates = False
            elif action == 'halve':
                self.client.rebalance(list(range(max(1, self.params.workers // 2))))
            elif action == 'restore_workers':
                self.client.rebalance(list(range(self.params.workers)))
            elif action == 'checkpoint':
                self._checkpoint(iteration, state)
            elif action in self.hooks:
                self.flush()
                self.hooks[action](iteration)
            elif action not in HARNESS_EVENTS:
                raise DriverError(f"unknown event {action!r}")
        return '+'.join(applied)

    def _checkpoint(self, iteration: int, state: dict) -> None:
        self.flush()
        self.client.checkpoint(f"{self.run_name}-it{iteration}", {'iteration': iteration}, dict(state))

    def _record(self, iteration: int, event: str, handles: Iterable[BlockHandle]) -> None:
        for handle in handles:
            self._pending.append((iteration, event, handle, self.client.templates))
            event = ''
        self._emit_done()

    def _emit_done(self) -> None:
        while self._pending and self._pending[0][2].done:
            iteration, event, handle, templates = self._pending.pop(0)
            row = block_row(self.run_name, self.params.benchmark, iteration, handle, templates, event,
                            self.origin)
            self.rows.append(row)
            if self.metrics is not None:
                self.metrics.write(row)

    def flush(self) -> None:
        self.client.flush()
        self._emit_done()

    def run(self):
        """
        Returns:
            The benchmark's result (coefficients, centroids or spin counters)
        """
        self.app.setup(self.client)
        state = self.app.initial_state()
        iteration = 0
        while iteration < self.params.iterations:
            try:
                event = self._apply_events(iteration, state)
                handles = self.app.step(self.client, iteration, state)
                self._record(iteration, event, handles)
                iteration += 1
                if self.params.checkpoint_every and iteration % self.params.checkpoint_every == 0:
                    self._checkpoint(iteration, state)
                if self.app.finished(state):
                    logger.info("converged after %d iterations", iteration)
                    break
            except RestartFromCheckpoint as restart:
                self.restarts += 1
                self._pending = [p for p in self._pending if p[2].done]
                self._emit_done()
                iteration = int(restart.position.get('iteration', 0))
                state = dict(restart.state)
                logger.warning("resuming at iteration %d from checkpoint %s", iteration, restart.checkpoint_id)
        self.flush()
        return self.app.result(self.client)


def parse_events(events: Iterable) -> List[Tuple[int, str]]:
    parsed = []
    for event in events:
        if isinstance(event, dict):
            iteration, action = event['iteration'], event['action']
        else:
            iteration, action = event
        if action not in DRIVER_EVENTS + HARNESS_EVENTS:
            raise DriverError(f"unknown event {action!r}")
        parsed.append((int(iteration), str(action)))
    return sorted(parsed)
