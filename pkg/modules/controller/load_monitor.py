"""
Heartbeat-driven load monitor for automatic rebalancing
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Tuple

from ..protocol.messages import Heartbeat

logger = logging.getLogger(__name__)


@dataclass
class LoadMonitor:
    """
    Flags a sustained imbalance

    When the busiest worker's busy share exceeds `factor` times the mean for
    `windows` consecutive rounds, `observe` returns (busiest, least busy).
    A round closes when every active worker has reported once.
    """

    factor: float = 1.5
    windows: int = 2
    shares: Dict[int, float] = field(default_factory=dict)
    strikes: int = 0

    def observe(self, heartbeat: Heartbeat, active: Iterable[int]) -> Optional[Tuple[int, int]]:
        active = list(active)
        if heartbeat.worker not in active:
            return None
        window = heartbeat.window_ms or 1.0
        self.shares[heartbeat.worker] = heartbeat.busy_ms / window
        if any(w not in self.shares for w in active):
            return None

        round_shares = {w: self.shares[w] for w in active}
        self.shares = {}
        if len(round_shares) < 2:
            return None
        mean = sum(round_shares.values()) / len(round_shares)
        busiest = max(sorted(round_shares), key=lambda w: round_shares[w])
        idlest = min(sorted(round_shares), key=lambda w: round_shares[w])
        if mean > 0 and round_shares[busiest] > self.factor * mean:
            self.strikes += 1
        else:
            self.strikes = 0
        if self.strikes >= self.windows:
            self.strikes = 0
            logger.info("worker %d busy share %.2f vs mean %.2f", busiest, round_shares[busiest], mean)
            return busiest, idlest
        return None
