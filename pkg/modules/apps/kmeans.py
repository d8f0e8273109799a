"""
k-means: assign per partition, ordered update, broadcast of the new centroids
"""

import json
import logging
from typing import List

import numpy as np

from ..driver.client import BlockHandle, DriverClient
from ..driver.stages import StageSpec
from ..errors import DriverError
from .base import Benchmark, BenchmarkParams
from .datasets import decode_matrix, decode_vector, generate_points, partition_bounds, write_dataset

logger = logging.getLogger(__name__)

STEP = 'kmeans.step'

ASSIGN = StageSpec('Assign', reads=('points[p]', 'pcent[p]'), writes=('partial[p]',))
UPDATE = StageSpec('KUpdate', reads=('centroids', 'partial[*]'), writes=('centroids', 'shift'), partitioned=False)
BROADCAST = StageSpec('Broadcast', reads=('centroids',), writes=('pcent[p]',))


class KMeans(Benchmark):
    name = 'kmeans'

    def __init__(self, params: BenchmarkParams):
        if params.k <= 0:
            raise DriverError(f"k-means needs k > 0, got {params.k}")
        super().__init__(params)
        self.path = params.dataset_path('points')
        self.bounds = partition_bounds(params.rows, params.partitions)

    def initial_state(self) -> dict:
        return {'shift': None}

    def setup(self, client: DriverClient) -> None:
        P = self.params.partitions
        objects = client.objects
        for name in ('points', 'pcent', 'partial'):
            objects.define(name, P)
        objects.define('centroids')
        objects.define('shift')
        client.define_objects()
        if not self.path.exists():
            write_dataset(self.path, generate_points(self.params.rows, self.params.dim, self.params.k,
                                                     self.params.seed))

        def load(start: int, stop: int) -> bytes:
            return json.dumps({'path': str(self.path), 'start': start, 'stop': stop}).encode('utf-8')

        with client.block('kmeans.setup') as blk:
            for p, (start, stop) in enumerate(self.bounds):
                blk.spawn('Load', writes=[objects['points', p]], params=load(start, stop), partition=p)
            blk.spawn('Load', writes=[objects['centroids']], params=load(0, self.params.k))
            blk.stage(BROADCAST, P)

    def step(self, client: DriverClient, iteration: int, state: dict) -> List[BlockHandle]:
        P = self.params.partitions
        with client.block(STEP, readback=[client.objects['shift']]) as blk:
            blk.stage(ASSIGN, P)
            blk.stage(UPDATE, P)
            blk.stage(BROADCAST, P)
        return [blk.handle]

    def result(self, client: DriverClient) -> np.ndarray:
        centroids = client.objects['centroids']
        return decode_matrix(client.read_objects([centroids])[centroids]).copy()

    @staticmethod
    def shift(handle: BlockHandle, client: DriverClient) -> float:
        return float(decode_vector(handle.value(client.objects['shift']))[0])
