"""Drawdown statistics of a discovered-count series."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def drawdowns(series) -> np.ndarray:
    """Relative shortfall below the running maximum at each point (0 where the maximum is 0)."""
    x = np.asarray(series, dtype=float)
    peak = np.maximum.accumulate(x)
    return np.where(peak > 0, (peak - x) / np.where(peak > 0, peak, 1.0), 0.0)


def max_drawdown(series) -> float:
    x = np.asarray(series)
    return float(drawdowns(x).max()) if x.size else 0.0


@dataclass(frozen=True)
class Cycle:
    """A drop to ``trough`` below running maximum ``peak``, recovered at ``recovery_index``."""

    peak: float
    trough_index: int
    trough: float
    recovery_index: int
    recovered_to: float


def find_cycle(series, drop: float = 0.2, recovery: float = 0.95) -> Cycle | None:
    """First drawdown of at least ``drop`` after which the series regains ``recovery`` of its peak.

    Returns the deepest trough before the recovery point, or ``None``.
    """
    x = np.asarray(series, dtype=float)
    if x.size < 2:
        return None
    peak = np.maximum.accumulate(x)
    for i in np.flatnonzero((peak > 0) & (x <= (1.0 - drop) * peak)):
        later = np.flatnonzero(x[i + 1:] >= recovery * peak[i])
        if later.size:
            j = int(i + 1 + later[0])
            start = int(np.flatnonzero(x[: i + 1] == peak[i])[-1])
            trough = start + int(np.argmin(x[start:j]))
            return Cycle(float(peak[i]), trough, float(x[trough]), j, float(x[j]))
    return None


def has_forgetting_cycle(series, drop: float = 0.2, recovery: float = 0.95) -> bool:
    return find_cycle(series, drop, recovery) is not None
