"""
Scenario files (TOML)

    name = "lr-templated"
    benchmark = "lr"
    workers = 2
    templates = true
    iterations = 5

    [[events]]
    iteration = 3
    action = "halve"

    [sweep]
    workers = [1, 2, 4]

docs/SCENARIOS.md lists every key.
"""

import logging
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import List, Optional, Tuple

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..apps.base import BenchmarkParams
from ..apps.runner import BENCHMARKS, parse_events
from ..errors import ConfigError, TemplumError

logger = logging.getLogger(__name__)


@dataclass
class Scenario:
    name: str
    benchmark: str = 'lr'
    workers: int = 2
    templates: bool = True
    iterations: int = 10
    partitions: int = 8
    dim: int = 10
    rows: int = 4000
    k: int = 4
    spin_us: float = 0.0
    seed: int = 1
    learning_rate: float = 1.0
    estimate_every: int = 5
    checkpoint_every: int = 0
    spare_workers: int = 0
    output: str = 'output/runs'
    data_dir: str = 'output/data'
    events: List[Tuple[int, str]] = field(default_factory=list)
    sweep_workers: List[int] = field(default_factory=list)

    def params(self, workers: Optional[int] = None) -> BenchmarkParams:
        return BenchmarkParams(
            benchmark=self.benchmark,
            partitions=self.partitions,
            iterations=self.iterations,
            dim=self.dim,
            rows=self.rows,
            k=self.k,
            spin_us=self.spin_us,
            seed=self.seed,
            workers=workers or self.workers,
            learning_rate=self.learning_rate,
            estimate_every=self.estimate_every,
            checkpoint_every=self.checkpoint_every,
            data_dir=self.data_dir,
            events=list(self.events),
        )

    def runs(self) -> List['Scenario']:
        """One scenario per swept worker count (just this one without a sweep)"""
        if not self.sweep_workers:
            return [self]
        return [replace(self, name=f"{self.name}-w{w}", workers=w, sweep_workers=[]) for w in self.sweep_workers]

    def metrics_path(self) -> Path:
        return Path(self.output) / f"{self.name}.csv"

    def needs_checkpoints(self) -> bool:
        return self.checkpoint_every > 0 or any(a in ('checkpoint', 'kill_worker') for _, a in self.events)


def scenario_from_dict(data: dict, source: str = '<dict>') -> Scenario:
    data = dict(data)
    if 'name' not in data:
        raise ConfigError(f"{source}: scenario needs a name")
    try:
        events = parse_events(data.pop('events', []))
    except (KeyError, TypeError, ValueError, TemplumError) as e:
        raise ConfigError(f"{source}: bad [[events]] entry: {e}") from e
    sweep = data.pop('sweep', {}) or {}
    known = {f.name for f in fields(Scenario)} - {'events', 'sweep_workers'}
    for key in sorted(set(data) - known):
        logger.warning("%s: ignoring unknown scenario key %r", source, key)
    scenario = Scenario(events=events, sweep_workers=[int(w) for w in sweep.get('workers', [])],
                        **{k: v for k, v in data.items() if k in known})

    if scenario.benchmark not in BENCHMARKS:
        raise ConfigError(f"{source}: unknown benchmark {scenario.benchmark!r}")
    if scenario.workers < 1 or any(w < 1 for w in scenario.sweep_workers):
        raise ConfigError(f"{source}: worker counts must be positive")
    if scenario.partitions < 1 or scenario.iterations < 0:
        raise ConfigError(f"{source}: partitions must be positive and iterations non-negative")
    if any(a in ('halve', 'restore_workers') for _, a in events) and scenario.workers < 2:
        raise ConfigError(f"{source}: halve/restore_workers events need at least 2 workers")
    return scenario


def load_scenario(path: str) -> Scenario:
    try:
        with open(path, 'rb') as f:
            data = tomllib.load(f)
    except FileNotFoundError:
        raise ConfigError(f"scenario file not found: {path}") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path} is not valid TOML: {e}") from e
    return scenario_from_dict(data, str(path))
