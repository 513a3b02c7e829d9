"""Injectable millisecond clocks.

Everything in rbf that needs "now" or "sleep" takes one of these, so the
same code path runs against wall time in production and virtual time in
the simulator and tests.
"""

from __future__ import annotations

import time


class WallClock:
    """Real time, millisecond resolution."""

    def now_ms(self) -> int:
        return int(time.time() * 1000)

    def sleep_ms(self, duration_ms: int) -> None:
        if duration_ms > 0:
            time.sleep(duration_ms / 1000.0)


class VirtualClock:
    """Manually advanced clock for deterministic tests and simulation.

    sleep_ms() advances time instead of blocking, so polling loops run
    instantly while still observing the correct virtual timestamps.
    """

    def __init__(self, start_ms: int = 0):
        self._now = int(start_ms)

    def now_ms(self) -> int:
        return self._now

    def sleep_ms(self, duration_ms: int) -> None:
        if duration_ms < 0:
            raise ValueError("cannot sleep a negative duration")
        self._now += int(duration_ms)

    def advance_to(self, t_ms: int) -> None:
        if t_ms < self._now:
            raise ValueError("virtual clock cannot move backwards")
        self._now = int(t_ms)


MINUTE_MS = 60_000
HOUR_MS = 3_600_000


def minutes_to_ms(minutes: float) -> int:
    return round(minutes * MINUTE_MS)


def hours_to_ms(hours: float) -> int:
    return round(hours * HOUR_MS)


def ms_to_minutes(ms: int) -> float:
    return ms / MINUTE_MS
