"""Time sources. Production code uses the wall clock; tests run instantly."""

from __future__ import annotations

import time
from typing import Protocol, runtime_checkable


@runtime_checkable
class Clock(Protocol):
    def now_ms(self) -> int: ...

    def sleep_ms(self, duration_ms: float) -> None: ...


class SystemClock:
    """Wall-clock time."""

    def now_ms(self) -> int:
        return int(time.monotonic() * 1000)

    def sleep_ms(self, duration_ms: float) -> None:
        if duration_ms > 0:
            time.sleep(duration_ms / 1000.0)


class TestClock:
    """Simulated clock: sleeping advances time instantly."""

    __test__ = False  # not a pytest test class

    def __init__(self, start_ms: int = 0):
        self._now = start_ms

    def now_ms(self) -> int:
        return self._now

    def sleep_ms(self, duration_ms: float) -> None:
        if duration_ms > 0:
            self._now += int(duration_ms)

    def advance_to(self, t_ms: int) -> None:
        self._now = max(self._now, t_ms)
