"""Wall and virtual clocks.

Scenario runs and proxy scheduling take a clock so that tests and transcripts
are deterministic on the virtual clock while live deployments use wall time.
"""

from __future__ import annotations

import heapq
import itertools
import time
from typing import Callable


class WallClock:
    def __init__(self):
        self._t0 = time.monotonic()

    def now_ms(self) -> float:
        return (time.monotonic() - self._t0) * 1000.0


class VirtualClock:
    """Manually advanced clock with a timer wheel.

    ``advance`` moves time forward and fires due callbacks in (time, FIFO)
    order, so two runs that schedule the same work produce the same sequence.
    """

    def __init__(self, start_ms: float = 0.0):
        self._now = start_ms
        self._counter = itertools.count()
        self._timers: list[tuple[float, int, Callable[[], None]]] = []

    def now_ms(self) -> float:
        return self._now

    def call_at(self, at_ms: float, fn: Callable[[], None]) -> None:
        heapq.heappush(self._timers, (max(at_ms, self._now), next(self._counter), fn))

    def advance_to(self, t_ms: float) -> None:
        while self._timers and self._timers[0][0] <= t_ms:
            due, _, fn = heapq.heappop(self._timers)
            self._now = max(self._now, due)
            fn()
        self._now = max(self._now, t_ms)

    def advance(self, delta_ms: float) -> None:
        self.advance_to(self._now + delta_ms)
