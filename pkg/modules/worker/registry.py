"""
Stage registry: stage name -> kernel

A kernel takes the payloads of a task's reads (in declaration order) and its
params, and returns one payload per write. Kernels must be deterministic:
re-executing a task on the same inputs yields the same bytes.
"""

import hashlib
import logging
import struct
import time
from typing import Callable, Dict, List, Sequence

from ..errors import KernelError

logger = logging.getLogger(__name__)

Kernel = Callable[[List[bytes], bytes, int], List[bytes]]

_DURATION = struct.Struct('<d')
_COUNTER = struct.Struct('<Q')


class StageRegistry:
    def __init__(self):
        self._kernels: Dict[str, Kernel] = {}

    def register(self, name: str, kernel: Kernel = None):
        """Register a kernel; usable directly or as a decorator"""
        if kernel is None:
            return lambda fn: self.register(name, fn)
        self._kernels[name] = kernel
        return kernel

    def __contains__(self, name: str) -> bool:
        return name in self._kernels

    def stages(self) -> List[str]:
        return sorted(self._kernels)

    def run(self, stage: str, inputs: Sequence[bytes], params: bytes, write_count: int) -> List[bytes]:
        try:
            kernel = self._kernels[stage]
        except KeyError:
            raise KernelError(f"unknown stage {stage!r}") from None
        outputs = kernel(list(inputs), params, write_count)
        if len(outputs) != write_count:
            raise KernelError(f"stage {stage!r} produced {len(outputs)} outputs for {write_count} writes")
        return [bytes(o) for o in outputs]


def noop(inputs: List[bytes], params: bytes, write_count: int) -> List[bytes]:
    return [b''] * write_count


def const(inputs: List[bytes], params: bytes, write_count: int) -> List[bytes]:
    """Every write receives the params bytes"""
    return [params] * write_count


def spin(inputs: List[bytes], params: bytes, write_count: int) -> List[bytes]:
    """Busy-wait for the duration in params (float64 microseconds), then bump a counter"""
    duration_us = _DURATION.unpack(params)[0] if len(params) >= _DURATION.size else 0.0
    if duration_us < 0:
        raise KernelError(f"negative spin duration {duration_us}")
    deadline = time.perf_counter() + duration_us / 1e6
    while time.perf_counter() < deadline:
        pass
    count = _COUNTER.unpack(inputs[0])[0] if inputs and len(inputs[0]) == _COUNTER.size else 0
    return [_COUNTER.pack(count + 1)] * write_count


def tag(inputs: List[bytes], params: bytes, write_count: int) -> List[bytes]:
    """Digest of params and inputs; a write's value identifies the whole history that produced it"""
    digest = hashlib.sha1(params)
    for payload in inputs:
        digest.update(_COUNTER.pack(len(payload)))
        digest.update(payload)
    base = digest.digest()
    return [hashlib.sha1(base + bytes([i])).digest() for i in range(write_count)]


def spin_params(duration_us: float) -> bytes:
    return _DURATION.pack(float(duration_us))


def builtin_registry() -> StageRegistry:
    registry = StageRegistry()
    registry.register('Noop', noop)
    registry.register('Const', const)
    registry.register('Spin', spin)
    registry.register('Tag', tag)
    return registry


def default_registry() -> StageRegistry:
    """Built-in stages plus the benchmark kernels"""
    from ..apps.kernels import register_app_stages

    registry = builtin_registry()
    register_app_stages(registry)
    logger.debug("registered stages %s", registry.stages())
    return registry
