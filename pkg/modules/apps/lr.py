"""
Logistic regression with a nested loop

The inner loop is the optimizer block: a gradient per partition, an ordered
reduce into `coeff` that also takes the ascent step, and a broadcast of the
new coefficients back to every partition. Every `estimate_every` iterations
the estimator block measures the held-out error; the learning rate halves
whenever that error rises.
"""

import json
import logging
from typing import List

import numpy as np

from ..driver.client import BlockHandle, DriverClient
from ..driver.stages import StageSpec
from .base import Benchmark, BenchmarkParams
from .datasets import decode_vector, encode_vector, generate_lr, partition_bounds, write_dataset

logger = logging.getLogger(__name__)

OPTIMIZE = 'lr.optimize'
ESTIMATE = 'lr.estimate'

GRADIENT = StageSpec('Gradient', reads=('tdata[p]', 'pcoeff[p]'), writes=('grad[p]',))
BROADCAST = StageSpec('Broadcast', reads=('coeff',), writes=('pcoeff[p]',))
ESTIMATE_STAGE = StageSpec('Estimate', reads=('edata[p]', 'pcoeff[p]'), writes=('err[p]',))
ERROR_REDUCE = StageSpec('ErrorReduce', reads=('err[*]',), writes=('error',), partitioned=False)


def reduce_params(rate: float, rows: int) -> bytes:
    return encode_vector(np.array([rate, float(rows)]))


def load_params(path, start: int, stop: int) -> bytes:
    return json.dumps({'path': str(path), 'start': start, 'stop': stop}).encode('utf-8')


class LogisticRegression(Benchmark):
    name = 'lr'

    def __init__(self, params: BenchmarkParams):
        super().__init__(params)
        self.train_path = params.dataset_path('lr')
        self.held_path = params.dataset_path('lr', params.seed + 1)
        self.bounds = partition_bounds(params.rows, params.partitions)

    def initial_state(self) -> dict:
        return {'rate': self.params.learning_rate, 'last_error': None, 'error': None, 'gnorm': None}

    def write_datasets(self) -> None:
        if not self.train_path.exists():
            write_dataset(self.train_path, generate_lr(self.params.rows, self.params.dim, self.params.seed))
        if not self.held_path.exists():
            write_dataset(self.held_path, generate_lr(self.params.rows, self.params.dim, self.params.seed + 1))

    def setup(self, client: DriverClient) -> None:
        P = self.params.partitions
        objects = client.objects
        for name in ('tdata', 'edata', 'pcoeff', 'grad', 'err'):
            objects.define(name, P)
        for name in ('coeff', 'gnorm', 'error'):
            objects.define(name)
        client.define_objects()
        self.write_datasets()

        with client.block('lr.setup') as blk:
            for p, (start, stop) in enumerate(self.bounds):
                blk.spawn('Load', writes=[objects['tdata', p]], params=load_params(self.train_path, start, stop),
                          partition=p)
                blk.spawn('Load', writes=[objects['edata', p]], params=load_params(self.held_path, start, stop),
                          partition=p)
            blk.spawn('Const', writes=[objects['coeff']], params=encode_vector(np.zeros(self.params.dim)))
            blk.stage(BROADCAST, P)
        logger.info("lr: %d rows x %d features in %d partitions", self.params.rows, self.params.dim, P)

    def optimize(self, client: DriverClient, state: dict) -> BlockHandle:
        P = self.params.partitions
        objects = client.objects
        with client.block(OPTIMIZE, readback=[objects['gnorm']]) as blk:
            blk.stage(GRADIENT, P)
            blk.spawn('Reduce', reads=[objects['coeff'], *objects['grad']],
                      writes=[objects['coeff'], objects['gnorm']],
                      params=reduce_params(state['rate'], self.params.rows))
            blk.stage(BROADCAST, P)
        return blk.handle

    def estimate(self, client: DriverClient, state: dict) -> BlockHandle:
        objects = client.objects
        with client.block(ESTIMATE, readback=[objects['error']]) as blk:
            blk.stage(ESTIMATE_STAGE, self.params.partitions)
            blk.stage(ERROR_REDUCE, self.params.partitions)
        handle = blk.handle.result()
        error = float(decode_vector(handle.values[objects['error']])[0])
        if state['last_error'] is not None and error > state['last_error']:
            state['rate'] = state['rate'] / 2
            logger.info("held-out error rose to %.4f; learning rate now %g", error, state['rate'])
        state['last_error'] = error
        state['error'] = error
        return handle

    def step(self, client: DriverClient, iteration: int, state: dict) -> List[BlockHandle]:
        handles = [self.optimize(client, state)]
        if self.params.threshold_g > 0:
            state['gnorm'] = float(decode_vector(handles[0].value(client.objects['gnorm']))[0])
        if self.params.estimate_every and (iteration + 1) % self.params.estimate_every == 0:
            handles.append(self.estimate(client, state))
        return handles

    def finished(self, state: dict) -> bool:
        return (self.params.threshold_g > 0 and state.get('gnorm') is not None
                and state['gnorm'] < self.params.threshold_g)

    def result(self, client: DriverClient) -> np.ndarray:
        coeff = client.objects['coeff']
        return decode_vector(client.read_objects([coeff])[coeff]).copy()
