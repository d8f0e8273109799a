"""
Tests for scenario files, the event script and the adaptation layout
"""

import logging
from pathlib import Path

import pytest

from modules.apps.runner import parse_events
from modules.errors import ConfigError, DriverError, ExperimentError
from modules.harness.runner import _scenario_dict, adaptation_scenario, phase_rows
from modules.harness.scenario import Scenario, load_scenario, scenario_from_dict

SCENARIOS = sorted((Path(__file__).parent.parent / 'config' / 'scenarios').glob('*.toml'))

SWEEP = '''
name = "sweep"
benchmark = "spin"
iterations = 3
partitions = 4

[[events]]
iteration = 2
action = "checkpoint"

[[events]]
iteration = 1
action = "templates_off"

[sweep]
workers = [1, 3]
'''


@pytest.mark.parametrize('path', SCENARIOS, ids=lambda p: p.stem)
def test_shipped_scenarios_load(path):
    scenario = load_scenario(str(path))
    assert scenario.name
    assert scenario.runs()


def test_toml_scenario_with_events_and_sweep(tmp_path):
    path = tmp_path / 'sweep.toml'
    path.write_text(SWEEP, encoding='utf-8')
    scenario = load_scenario(str(path))
    assert scenario.events == [(1, 'templates_off'), (2, 'checkpoint')]
    assert scenario.needs_checkpoints()

    runs = scenario.runs()
    assert [(r.name, r.workers) for r in runs] == [('sweep-w1', 1), ('sweep-w3', 3)]
    params = runs[1].params()
    assert (params.benchmark, params.workers, params.partitions) == ('spin', 3, 4)
    assert runs[0].metrics_path() == Path('output/runs/sweep-w1.csv')


@pytest.mark.parametrize('data', [
    {'benchmark': 'lr'},
    {'name': 'x', 'benchmark': 'pagerank'},
    {'name': 'x', 'workers': 0},
    {'name': 'x', 'partitions': 0},
    {'name': 'x', 'events': [{'iteration': 1, 'action': 'explode'}]},
    {'name': 'x', 'events': [{'iteration': 1}]},
    {'name': 'x', 'workers': 1, 'events': [{'iteration': 1, 'action': 'halve'}]},
    {'name': 'x', 'sweep': {'workers': [2, 0]}},
])
def test_invalid_scenarios(data):
    with pytest.raises(ConfigError):
        scenario_from_dict(data)


def test_unknown_keys_warn(caplog):
    with caplog.at_level(logging.WARNING):
        scenario = scenario_from_dict({'name': 'x', 'colour': 'blue'})
    assert scenario.name == 'x'
    assert 'colour' in caplog.text


def test_unreadable_scenario_files(tmp_path):
    with pytest.raises(ConfigError):
        load_scenario(str(tmp_path / 'missing.toml'))
    bad = tmp_path / 'bad.toml'
    bad.write_text('name = ', encoding='utf-8')
    with pytest.raises(ConfigError):
        load_scenario(str(bad))


def test_scenarios_survive_the_json_hand_off():
    scenario = Scenario(name='r', benchmark='kmeans', workers=3, events=[(4, 'kill_worker')], checkpoint_every=2)
    assert scenario_from_dict(_scenario_dict(scenario)) == scenario


def test_event_parsing():
    assert parse_events([(3, 'halve'), {'iteration': '1', 'action': 'checkpoint'}]) == [
        (1, 'checkpoint'), (3, 'halve')]
    with pytest.raises(DriverError):
        parse_events([(1, 'reboot')])


def test_adaptation_layout():
    scenario = adaptation_scenario(workers=4, phase=5)
    assert scenario.iterations == 20
    assert scenario.templates is False
    assert scenario.events == [(5, 'templates_on'), (10, 'halve'), (15, 'restore_workers')]
    with pytest.raises(ExperimentError):
        adaptation_scenario(workers=3)

    rows = [{'iteration': i} for i in range(20)]
    phases = phase_rows(rows, 5)
    assert [len(p) for p in phases] == [5, 5, 5, 5]
    assert phases[2][0]['iteration'] == 10
