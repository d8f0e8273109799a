"""
Tests for the controller status API
"""

import pytest

from modules.controller.status_api import StatusBridge, create_app
from modules.protocol.messages import CheckpointCmd, RebalanceCmd


@pytest.fixture
def bridge():
    submitted = []
    bridge = StatusBridge(submitted.append)
    bridge.submitted = submitted
    bridge.publish({'generation': 2, 'epoch': 1, 'active_workers': [0, 1]},
                   {'entries': {'5': {'version': 3, 'holders': [1]}}})
    return bridge


@pytest.fixture
def client(bridge):
    app = create_app(bridge)
    app.config['TESTING'] = True
    return app.test_client()


def test_status_and_directory(client):
    status = client.get('/api/status').get_json()
    assert status['success'] and status['status']['epoch'] == 1
    directory = client.get('/api/directory').get_json()
    assert directory['directory']['entries']['5']['version'] == 3


def test_rebalance_is_queued(client, bridge):
    response = client.post('/api/rebalance', json={'workers': [0, '1']})
    assert response.status_code == 200
    assert response.get_json()['workers'] == [0, 1]
    assert bridge.submitted == [RebalanceCmd([0, 1])]


@pytest.mark.parametrize('body', [{}, {'workers': []}, {'workers': 'all'}, {'workers': ['x']}])
def test_bad_rebalance_requests(client, bridge, body):
    assert client.post('/api/rebalance', json=body).status_code == 400
    assert bridge.submitted == []


def test_checkpoint_is_queued(client, bridge):
    body = client.post('/api/checkpoint', json={}).get_json()
    assert body['checkpoint_id'] == 'api-2'
    assert bridge.submitted == [CheckpointCmd('api-2', {'source': 'api'}, {})]

    named = client.post('/api/checkpoint', json={'checkpoint_id': 'mine'}).get_json()
    assert named['checkpoint_id'] == 'mine'
