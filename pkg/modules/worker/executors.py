"""
Compute executors

`submit(fn, callback)` runs `fn` and eventually calls `callback(result, error)`
on the runtime's own thread. The inline executor does both immediately; the
pool executor runs `fn` on a thread and posts the callback back through the
worker's event loop.
"""

from concurrent.futures import Future, ThreadPoolExecutor
from typing import Any, Callable, Optional

Callback = Callable[[Any, Optional[BaseException]], None]


class InlineExecutor:
    slots = 1

    def submit(self, fn: Callable[[], Any], callback: Callback) -> None:
        try:
            result = fn()
        except Exception as e:
            callback(None, e)
            return
        callback(result, None)

    def shutdown(self) -> None:
        pass


class PoolExecutor:
    def __init__(self, slots: int, post: Callable[[Callable[[], None]], None]):
        self.slots = max(1, slots)
        self._post = post
        self._pool = ThreadPoolExecutor(max_workers=self.slots, thread_name_prefix='compute')

    def submit(self, fn: Callable[[], Any], callback: Callback) -> None:
        def done(future: Future) -> None:
            error = future.exception()
            result = None if error else future.result()
            self._post(lambda: callback(result, error))

        self._pool.submit(fn).add_done_callback(done)

    def shutdown(self) -> None:
        self._pool.shutdown(wait=False, cancel_futures=True)
