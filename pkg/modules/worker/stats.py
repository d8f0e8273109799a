"""
Busy / blocked / idle accounting for heartbeats
"""

import time
from typing import Callable

from ..protocol.messages import Heartbeat

BUSY = 'busy'
BLOCKED = 'blocked'
IDLE = 'idle'


class StatsTracker:
    """
    Time spent per state since the last heartbeat

    busy: at least one compute kernel running; blocked: tasks pending but
    none runnable (waiting on data); idle: nothing to do.
    """

    def __init__(self, worker_id: int = 0, clock: Callable[[], float] = time.monotonic):
        self.worker_id = worker_id
        self.clock = clock
        self.state = IDLE
        self.tasks_executed = 0
        self._since = clock()
        self._window_start = self._since
        self._totals = {BUSY: 0.0, BLOCKED: 0.0, IDLE: 0.0}

    def set_state(self, state: str) -> None:
        now = self.clock()
        self._totals[self.state] += now - self._since
        self._since = now
        self.state = state

    def task_executed(self) -> None:
        self.tasks_executed += 1

    def heartbeat(self) -> Heartbeat:
        """Close the current window"""
        self.set_state(self.state)
        now = self._since
        window = now - self._window_start
        message = Heartbeat(
            worker=self.worker_id,
            window_ms=window * 1e3,
            busy_ms=self._totals[BUSY] * 1e3,
            idle_ms=self._totals[IDLE] * 1e3,
            blocked_ms=self._totals[BLOCKED] * 1e3,
            tasks_executed=self.tasks_executed,
        )
        self._window_start = now
        self._totals = {BUSY: 0.0, BLOCKED: 0.0, IDLE: 0.0}
        self.tasks_executed = 0
        return message
