"""Inter-publish interval statistics.

Population standard deviation throughout, so numbers compare unambiguously
against reported tables. The streaming computation (Welford) is paired
with a brute-force pass used as an independent check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class EmptySelectionError(Exception):
    pass


@dataclass(frozen=True)
class IntervalStats:
    label: str
    count: int
    min_min: float
    avg_min: float
    max_min: float
    std_min: float

    def __post_init__(self):
        if not (self.min_min <= self.avg_min <= self.max_min):
            raise ValueError("interval stats violate min <= avg <= max")
        if self.std_min < 0:
            raise ValueError("std must be non-negative")

    def format_row(self) -> str:
        return (
            f"{self.label}: min={self.min_min:.1f} avg={self.avg_min:.1f} "
            f"max={self.max_min:.1f} std={self.std_min:.1f} (n={self.count})"
        )


def interval_stats_streaming(gaps_min, label: str = "") -> IntervalStats:
    """Single-pass min/avg/max/population-std over interval lengths."""
    count = 0
    mean = 0.0
    m2 = 0.0
    lo = math.inf
    hi = -math.inf
    for gap in gaps_min:
        count += 1
        delta = gap - mean
        mean += delta / count
        m2 += delta * (gap - mean)
        lo = min(lo, gap)
        hi = max(hi, gap)
    if count == 0:
        raise EmptySelectionError("no intervals in selection")
    return IntervalStats(
        label=label,
        count=count,
        min_min=lo,
        avg_min=mean,
        max_min=hi,
        std_min=math.sqrt(m2 / count),
    )


def interval_stats_bruteforce(gaps_min, label: str = "") -> IntervalStats:
    """Textbook two-pass computation; the oracle for the streaming path."""
    gaps = list(gaps_min)
    if not gaps:
        raise EmptySelectionError("no intervals in selection")
    mean = sum(gaps) / len(gaps)
    variance = sum((g - mean) ** 2 for g in gaps) / len(gaps)
    return IntervalStats(
        label=label,
        count=len(gaps),
        min_min=min(gaps),
        avg_min=mean,
        max_min=max(gaps),
        std_min=math.sqrt(variance),
    )


def publish_gaps_min(publish_times_ms) -> list[float]:
    times = sorted(publish_times_ms)
    return [(b - a) / 60_000.0 for a, b in zip(times, times[1:])]
