"""
Common shape of a benchmark program
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

from ..driver.client import BlockHandle, DriverClient


@dataclass
class BenchmarkParams:
    benchmark: str = 'lr'
    partitions: int = 4
    iterations: int = 10
    dim: int = 10
    rows: int = 1000
    k: int = 4
    spin_us: float = 0.0
    seed: int = 1
    workers: int = 1
    learning_rate: float = 1.0
    estimate_every: int = 5
    checkpoint_every: int = 0
    threshold_g: float = 0.0
    data_dir: str = 'output/data'
    events: List[Tuple[int, str]] = field(default_factory=list)

    def dataset_path(self, kind: str, seed: Optional[int] = None) -> Path:
        seed = self.seed if seed is None else seed
        return Path(self.data_dir).resolve() / f"{kind}-{self.rows}x{self.dim}-s{seed}.bin"


class Benchmark:
    """
    A driver program split into setup, one step per iteration, and a result

    `state` is the host-side loop state; it must be JSON-serializable because
    it is stored with checkpoints and handed back on restore.
    """

    name = ''

    def __init__(self, params: BenchmarkParams):
        self.params = params

    def initial_state(self) -> dict:
        return {}

    def setup(self, client: DriverClient) -> None:
        raise NotImplementedError

    def step(self, client: DriverClient, iteration: int, state: dict) -> List[BlockHandle]:
        raise NotImplementedError

    def finished(self, state: dict) -> bool:
        return False

    def result(self, client: DriverClient):
        raise NotImplementedError
