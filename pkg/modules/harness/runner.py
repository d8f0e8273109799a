"""
Experiment runner

`run_local` executes a scenario in-process through LocalCluster.
`run_experiment` starts a controller, the workers and a driver as separate
processes on loopback, applies kill_worker events when the driver's metrics
file reaches the scripted iteration, and collects each child's log.
"""

import json
import logging
import socket
import subprocess
import sys
import time
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from ..apps.runner import BenchmarkRunner
from ..errors import ExperimentError
from ..utils.config import Settings
from ..utils.file_handler import FileHandler
from .local_cluster import LocalCluster
from .metrics import MetricsWriter, last_iteration, read_metrics
from .scenario import Scenario

logger = logging.getLogger(__name__)

ROOT = Path(__file__).resolve().parent.parent.parent


@dataclass
class RunOutcome:
    name: str
    metrics: Path
    rows: List[dict] = field(default_factory=list)
    result: Any = None
    restarts: int = 0
    logs: Dict[str, Path] = field(default_factory=dict)


def _kill_highest(cluster: LocalCluster):
    def kill(iteration: int) -> None:
        cluster.kill_worker(max(cluster.active_workers))
    return kill


def run_local(scenario: Scenario, settings: Optional[Settings] = None, codec: bool = False) -> List[RunOutcome]:
    """Run every worker count of a scenario in-process"""
    settings = settings or Settings()
    outcomes = []
    for run in scenario.runs():
        checkpoint_dir = None
        if run.needs_checkpoints():
            checkpoint_dir = str(Path(run.output) / 'checkpoints' / run.name)
            FileHandler.remove_tree(Path(checkpoint_dir))
        cluster = LocalCluster(run.workers, run.spare_workers, settings, checkpoint_dir=checkpoint_dir, codec=codec)
        client = cluster.client(templates=run.templates)
        with MetricsWriter(str(run.metrics_path()), settings.harness.float_digits) as writer:
            runner = BenchmarkRunner(client, run.params(), writer, {'kill_worker': _kill_highest(cluster)}, run.name)
            result = runner.run()
        client.channel.close()
        logger.info("%s: %d rows in %s", run.name, len(runner.rows), run.metrics_path())
        outcomes.append(RunOutcome(run.name, run.metrics_path(), runner.rows, result, runner.restarts))
    return outcomes


# -- multi-process ------------------------------------------------------------

def free_port() -> int:
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as sock:
        sock.bind(('127.0.0.1', 0))
        return sock.getsockname()[1]


def _status(port: int) -> Optional[dict]:
    try:
        with urllib.request.urlopen(f"http://127.0.0.1:{port}/api/status", timeout=1.0) as response:
            return json.loads(response.read().decode('utf-8')).get('status')
    except (OSError, ValueError):
        return None


class _Cluster:
    """Child processes of one run; every child logs to its own file"""

    def __init__(self, run: Scenario, settings: Settings, run_dir: Path, config_path: Optional[str]):
        self.run = run
        self.settings = settings
        self.run_dir = run_dir
        self.config_path = config_path
        self.python = settings.harness.python or sys.executable
        self.address = f"127.0.0.1:{free_port()}"
        self.status_port = free_port()
        self.procs: Dict[str, subprocess.Popen] = {}
        self.logs: Dict[str, Path] = {}
        self.workers: List[str] = []

    def _spawn(self, name: str, script: str, args: List[str]) -> subprocess.Popen:
        command = [self.python, str(ROOT / script), *args]
        if self.config_path:
            command += ['--config', self.config_path]
        log_path = self.run_dir / f"{name}.log"
        log = open(log_path, 'w', encoding='utf-8')
        proc = subprocess.Popen(command, stdout=log, stderr=subprocess.STDOUT, cwd=str(ROOT))
        log.close()
        self.procs[name] = proc
        self.logs[name] = log_path
        logger.debug("started %s: %s", name, ' '.join(command))
        return proc

    def _wait_for(self, what: str, predicate) -> dict:
        deadline = time.monotonic() + self.settings.harness.startup_timeout_s
        while time.monotonic() < deadline:
            self.check_children()
            status = _status(self.status_port)
            if status is not None and predicate(status):
                return status
            time.sleep(self.settings.harness.poll_interval_s)
        raise ExperimentError(f"{self.run.name}: timed out waiting for {what}\n{self.log_tail()}")

    def start(self) -> None:
        # fresh per run
        checkpoints = self.run_dir / 'checkpoints'
        FileHandler.remove_tree(checkpoints)
        args = ['--listen', self.address, '--min-workers', str(self.run.workers),
                '--status-port', str(self.status_port), '--checkpoint-dir', str(checkpoints)]
        self._spawn('controller', 'controller.py', args)
        self._wait_for('the controller', lambda s: True)

        # one at a time, so worker i registers as id i
        for i in range(self.run.workers + self.run.spare_workers):
            name = f"worker-{i}"
            self._spawn(name, 'worker.py', ['--controller', self.address])
            self.workers.append(name)
            self._wait_for(f"{name} to register", lambda s, n=i + 1: len(s.get('workers', {})) >= n)

    def start_driver(self, scenario_path: Path, metrics: Path) -> subprocess.Popen:
        return self._spawn('driver', 'driver.py', [
            '--controller', self.address, '--scenario', str(scenario_path),
            '--run-name', self.run.name, '--metrics', str(metrics),
        ])

    def kill_worker(self) -> int:
        status = _status(self.status_port) or {}
        active = status.get('active_workers') or list(range(self.run.workers))
        worker_id = max(active)
        logger.warning("%s: killing worker %d", self.run.name, worker_id)
        self.procs[f"worker-{worker_id}"].kill()
        return worker_id

    def check_children(self, allow: tuple = ()) -> None:
        for name, proc in self.procs.items():
            code = proc.poll()
            if code not in (None, 0) and name not in allow:
                raise ExperimentError(f"{self.run.name}: {name} exited with code {code}\n{self.log_tail(name)}")

    def log_tail(self, name: Optional[str] = None, lines: int = 20) -> str:
        names = [name] if name else list(self.logs)
        parts = []
        for n in names:
            try:
                text = self.logs[n].read_text(encoding='utf-8', errors='replace').splitlines()[-lines:]
            except OSError:
                text = []
            parts.append(f"--- {n} ---\n" + '\n'.join(text))
        return '\n'.join(parts)

    def stop(self) -> None:
        for proc in self.procs.values():
            if proc.poll() is None:
                proc.terminate()
        for proc in self.procs.values():
            try:
                proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                proc.kill()


def run_experiment(scenario: Scenario, settings: Optional[Settings] = None, config_path: Optional[str] = None,
                   timeout_s: float = 600.0) -> List[RunOutcome]:
    """
    Run a scenario as separate processes

    Returns:
        One outcome per swept worker count, each with its metrics file and child logs

    Raises:
        ExperimentError: a child exited nonzero or the run timed out
    """
    settings = settings or Settings()
    outcomes = []
    for run in scenario.runs():
        run_dir = FileHandler.ensure_directory(Path(settings.harness.output_dir) / run.name)
        metrics = run.metrics_path().resolve()
        FileHandler.ensure_directory(metrics.parent)
        if metrics.exists():
            metrics.unlink()
        scenario_path = run_dir / 'scenario.json'
        FileHandler.write_json_atomic(scenario_path, _scenario_dict(run))

        cluster = _Cluster(run, settings, run_dir, config_path)
        kills = sorted(it for it, action in run.events if action == 'kill_worker')
        fired: set = set()
        killed: List[str] = []
        try:
            cluster.start()
            driver = cluster.start_driver(scenario_path, metrics)
            deadline = time.monotonic() + timeout_s
            while driver.poll() is None:
                if time.monotonic() > deadline:
                    raise ExperimentError(f"{run.name}: timed out after {timeout_s:g}s\n{cluster.log_tail()}")
                reached = last_iteration(str(metrics))
                for at in kills:
                    if at not in fired and reached is not None and reached >= at - 1:
                        fired.add(at)
                        killed.append(f"worker-{cluster.kill_worker()}")
                cluster.check_children(allow=tuple(killed))
                time.sleep(settings.harness.poll_interval_s)
            if driver.returncode != 0:
                raise ExperimentError(f"{run.name}: driver exited with code {driver.returncode}\n"
                                      f"{cluster.log_tail('driver')}")
        finally:
            cluster.stop()
        rows = read_metrics(str(metrics)) if metrics.exists() else []
        logger.info("%s: %d rows in %s", run.name, len(rows), metrics)
        outcomes.append(RunOutcome(run.name, metrics, rows, logs=dict(cluster.logs)))
    return outcomes


def _scenario_dict(run: Scenario) -> dict:
    data = {k: v for k, v in run.__dict__.items() if k not in ('events', 'sweep_workers')}
    data['events'] = [{'iteration': it, 'action': action} for it, action in run.events]
    return data


def adaptation_scenario(workers: int = 4, partitions: int = 16, spin_us: float = 500.0, phase: int = 10,
                        output: str = 'output/runs') -> Scenario:
    """
    Four phases of `phase` iterations each: templates off, templates on,
    half the workers, all workers again
    """
    if workers < 4:
        raise ExperimentError(f"the adaptation scenario needs at least 4 workers, got {workers}")
    return Scenario(
        name=f"adaptation-w{workers}",
        benchmark='spin',
        workers=workers,
        templates=False,
        iterations=4 * phase,
        partitions=partitions,
        spin_us=spin_us,
        output=output,
        events=[(phase, 'templates_on'), (2 * phase, 'halve'), (3 * phase, 'restore_workers')],
    )


def phase_rows(rows: List[dict], phase: int) -> List[List[dict]]:
    """Split adaptation rows into their four phases by iteration number"""
    return [[r for r in rows if i * phase <= r['iteration'] < (i + 1) * phase] for i in range(4)]

