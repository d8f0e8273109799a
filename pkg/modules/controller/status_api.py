"""
Controller status API

A small Flask app served next to the controller. It only reads snapshots
published by the event loop and queues commands back into it; it never
touches scheduler state directly.
"""

import logging
import threading
from typing import Callable, Optional

from flask import Flask, jsonify, request
from werkzeug.serving import make_server

from ..protocol.messages import CheckpointCmd, RebalanceCmd

logger = logging.getLogger(__name__)


class StatusBridge:
    """Thread-safe hand-off between the controller loop and the API"""

    def __init__(self, submit: Callable[[object], None]):
        self._submit = submit
        self._lock = threading.Lock()
        self._status: dict = {}
        self._directory: dict = {}

    def publish(self, status: dict, directory: dict) -> None:
        with self._lock:
            self._status = status
            self._directory = directory

    def status(self) -> dict:
        with self._lock:
            return dict(self._status)

    def directory(self) -> dict:
        with self._lock:
            return dict(self._directory)

    def submit(self, message) -> None:
        self._submit(message)


def create_app(bridge: StatusBridge) -> Flask:
    app = Flask(__name__)

    @app.route('/api/status')
    def api_status():
        """Placement, epoch, cache and message counters"""
        return jsonify({'success': True, 'status': bridge.status()})

    @app.route('/api/directory')
    def api_directory():
        """Object versions and holders"""
        return jsonify({'success': True, 'directory': bridge.directory()})

    @app.route('/api/rebalance', methods=['POST'])
    def api_rebalance():
        """Queue a rebalance to the given worker set"""
        try:
            data = request.get_json(silent=True) or {}
            workers = data.get('workers')
            if not isinstance(workers, list) or not workers:
                return jsonify({'error': 'workers must be a non-empty list'}), 400
            workers = [int(w) for w in workers]
            bridge.submit(RebalanceCmd(workers))
            return jsonify({'success': True, 'queued': 'rebalance', 'workers': workers})
        except (TypeError, ValueError) as e:
            return jsonify({'error': f'bad worker id: {e}'}), 400
        except Exception as e:
            logger.exception("rebalance request failed")
            return jsonify({'error': str(e)}), 500

    @app.route('/api/checkpoint', methods=['POST'])
    def api_checkpoint():
        """Queue a checkpoint of the current object versions"""
        try:
            data = request.get_json(silent=True) or {}
            checkpoint_id = str(data.get('checkpoint_id') or f"api-{bridge.status().get('generation', 0)}")
            bridge.submit(CheckpointCmd(checkpoint_id, {'source': 'api'}, {}))
            return jsonify({'success': True, 'queued': 'checkpoint', 'checkpoint_id': checkpoint_id})
        except Exception as e:
            logger.exception("checkpoint request failed")
            return jsonify({'error': str(e)}), 500

    return app


class StatusServer:
    """Runs the status app on a background thread"""

    def __init__(self, bridge: StatusBridge, host: str = '127.0.0.1', port: int = 0):
        self.app = create_app(bridge)
        self._server = make_server(host, port, self.app, threaded=True)
        self.port = self._server.server_port
        self._thread: Optional[threading.Thread] = None

    def start(self) -> 'StatusServer':
        self._thread = threading.Thread(target=self._server.serve_forever, name='status-api', daemon=True)
        self._thread.start()
        logger.info("status API on http://127.0.0.1:%d/api/status", self.port)
        return self

    def stop(self) -> None:
        self._server.shutdown()
