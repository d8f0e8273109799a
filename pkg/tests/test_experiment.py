"""
Multi-process runs over loopback TCP (marked slow)
"""

import os

import pytest

from modules.harness.metrics import amortization, read_metrics, steady_throughput
from modules.harness.runner import run_experiment, run_local
from modules.harness.scenario import Scenario


def tiny(tmp_path, name, **overrides):
    values = dict(name=name, benchmark='lr', workers=2, iterations=4, partitions=4, dim=3, rows=200,
                  estimate_every=2, output=str(tmp_path / 'runs'), data_dir=str(tmp_path / 'data'))
    values.update(overrides)
    return Scenario(**values)


@pytest.mark.slow
def test_processes_agree_with_the_in_process_cluster(tmp_path, settings):
    [remote] = run_experiment(tiny(tmp_path, 'tcp'), settings, timeout_s=120)
    [local] = run_local(tiny(tmp_path, 'local'), settings)

    assert set(remote.logs) == {'controller', 'worker-0', 'worker-1', 'driver'}
    rows = read_metrics(str(remote.metrics))
    assert [r['iteration'] for r in rows if r['block'] == 'lr.optimize'] == [0, 1, 2, 3]
    assert [r['mode'] for r in rows] == [r['mode'] for r in local.rows]


def spin(tmp_path, name, **overrides):
    values = dict(name=name, benchmark='spin', workers=4, iterations=12, partitions=32, spin_us=500.0,
                  output=str(tmp_path / 'runs'), data_dir=str(tmp_path / 'data'))
    values.update(overrides)
    return Scenario(**values)


needs_cores = pytest.mark.skipif((os.cpu_count() or 1) < 4, reason="needs a core per worker")


@pytest.mark.slow
@needs_cores
def test_spin_throughput_grows_with_workers(tmp_path, settings):
    outcomes = run_experiment(spin(tmp_path, 'scale', sweep_workers=[1, 2, 4]), settings, timeout_s=300)
    throughput = [steady_throughput(o.rows, skip=2) for o in outcomes]
    assert [o.name for o in outcomes] == ['scale-w1', 'scale-w2', 'scale-w4']
    assert throughput == sorted(throughput)


@pytest.mark.slow
@needs_cores
def test_templates_multiply_control_plane_throughput(tmp_path, settings):
    common = dict(partitions=128, spin_us=0.0)
    [templated] = run_experiment(spin(tmp_path, 'cp-on', **common), settings, timeout_s=300)
    [explicit] = run_experiment(spin(tmp_path, 'cp-off', templates=False, **common), settings, timeout_s=300)
    assert {r['mode'] for r in explicit.rows} == {'explicit'}
    assert steady_throughput(templated.rows, skip=2) >= 5 * steady_throughput(explicit.rows, skip=2)


@pytest.mark.slow
def test_install_cost_is_paid_up_front(tmp_path, settings):
    [outcome] = run_experiment(spin(tmp_path, 'amortize', workers=2, partitions=16, spin_us=1000.0),
                               settings, timeout_s=300)
    assert outcome.rows[0]['mode'] == 'record'
    first, steady, cv = amortization(outcome.rows)
    assert first > steady
    assert cv < 0.2
