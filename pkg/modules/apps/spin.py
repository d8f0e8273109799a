"""
Spin benchmark: one busy-wait task per partition per iteration

Tasks touch only a per-partition counter, so the run measures how many
tasks per second the control plane can keep workers fed with.
"""

from typing import List

from ..driver.client import BlockHandle, DriverClient
from ..driver.stages import StageSpec
from ..worker.registry import spin_params
from .base import Benchmark

STEP = 'spin.step'


class Spin(Benchmark):
    name = 'spin'

    def setup(self, client: DriverClient) -> None:
        client.objects.define('dummy', self.params.partitions)
        client.define_objects()
        self.stage = StageSpec('Spin', reads=('dummy[p]',), writes=('dummy[p]',),
                               params=spin_params(self.params.spin_us))

    def step(self, client: DriverClient, iteration: int, state: dict) -> List[BlockHandle]:
        with client.block(STEP) as blk:
            blk.stage(self.stage, self.params.partitions)
        return [blk.handle]

    def result(self, client: DriverClient) -> List[int]:
        """Per-partition spin counters"""
        ids = client.objects['dummy']
        values = client.read_objects(ids)
        return [int.from_bytes(values[o], 'little') if values[o] else 0 for o in ids]
