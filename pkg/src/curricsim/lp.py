"""Learning-progress estimation and task sampling.

Each task keeps two chained exponential moving averages of its measured
success rate: a fast one tracking the raw per-round rate and a slow one
smoothing the fast one.  Their difference, after a reweighting that
stretches the low-probability end of [0, 1], is the learning-progress
signal.  Learning progress is turned into a sampling distribution by
z-scoring, a sigmoid centred on the 90% normal quantile, and normalising.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Any, Sequence

import numpy as np
from scipy.special import expit

from .errors import DomainError, UnknownTaskError

DEFAULT_TAU = 1250.0
DEFAULT_P_THETA = 0.1
DEFAULT_SLOPE = 4.0
#: 90% quantile of the standard normal, the sigmoid centre.
SIGMOID_CENTER = NormalDist().inv_cdf(0.9)

LP_STATE_SCHEMA = "curricsim.lp_state/1"


def _check_p_theta(p_theta: float) -> None:
    if not 0.0 < p_theta < 0.5:
        raise DomainError(f"p_theta must lie in (0, 0.5), got {p_theta}")


def reweight(p, p_theta: float = DEFAULT_P_THETA):
    """Map success probabilities through ``(1-θ)p / (p + θ(1-2p))``.

    The map fixes 0 and 1, is strictly increasing, and has slope
    ``(1-θ)/θ`` at zero, so differences between small probabilities are
    magnified.  Accepts a scalar or an array; returns the same kind.
    """
    _check_p_theta(p_theta)
    arr = np.asarray(p, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise DomainError("probabilities must lie in [0, 1]")
    out = (1.0 - p_theta) * arr / (arr + p_theta * (1.0 - 2.0 * arr))
    if np.ndim(out) == 0:
        return float(out)
    return out


@dataclass
class LpState:
    """Per-task fast/slow success estimates.

    Arrays are indexed by task id.  ``initialized[i]`` turns true on the
    first measurement of task ``i``; unmeasured tasks keep their initial
    estimates.
    """

    p_fast: np.ndarray
    p_slow: np.ndarray
    initialized: np.ndarray
    tau: float = DEFAULT_TAU
    p_theta: float = DEFAULT_P_THETA

    def __post_init__(self):
        self.p_fast = np.array(self.p_fast, dtype=float)
        self.p_slow = np.array(self.p_slow, dtype=float)
        self.initialized = np.array(self.initialized, dtype=bool)
        if not (self.p_fast.shape == self.p_slow.shape == self.initialized.shape):
            raise DomainError("p_fast, p_slow and initialized must have equal length")
        if self.p_fast.ndim != 1:
            raise DomainError("LpState arrays must be one-dimensional")
        if not self.tau > 0:
            raise DomainError(f"tau must be positive, got {self.tau}")
        _check_p_theta(self.p_theta)
        for name in ("p_fast", "p_slow"):
            arr = getattr(self, name)
            if np.any(arr < 0.0) or np.any(arr > 1.0):
                raise DomainError(f"{name} must lie in [0, 1]")

    @classmethod
    def fresh(cls, task_count: int, tau: float = DEFAULT_TAU,
              p_theta: float = DEFAULT_P_THETA, initial: float = 0.0) -> "LpState":
        return cls(
            p_fast=np.full(task_count, initial),
            p_slow=np.full(task_count, initial),
            initialized=np.zeros(task_count, dtype=bool),
            tau=tau,
            p_theta=p_theta,
        )

    @property
    def task_count(self) -> int:
        return int(self.p_fast.shape[0])

    @property
    def alpha(self) -> float:
        return 1.0 / self.tau

    def update(self, task: int, measured_rate: float) -> "LpState":
        """Advance both EMAs of one task by one round."""
        if not 0 <= task < self.task_count:
            raise UnknownTaskError(f"unknown task id {task}")
        if not 0.0 <= measured_rate <= 1.0:
            raise DomainError(f"measured rate must lie in [0, 1], got {measured_rate}")
        a = self.alpha
        self.p_fast[task] += a * (measured_rate - self.p_fast[task])
        self.p_slow[task] += a * (self.p_fast[task] - self.p_slow[task])
        self.initialized[task] = True
        return self

    def update_many(self, tasks: np.ndarray, rates: np.ndarray) -> "LpState":
        """Vectorised :meth:`update` for a set of distinct tasks.

        Performs the same floating-point operations per task as
        :meth:`update`, so the two are interchangeable.
        """
        tasks = np.asarray(tasks, dtype=np.intp)
        rates = np.asarray(rates, dtype=float)
        if tasks.size == 0:
            return self
        if tasks.min() < 0 or tasks.max() >= self.task_count:
            raise UnknownTaskError("unknown task id in batch update")
        if np.any(rates < 0.0) or np.any(rates > 1.0):
            raise DomainError("measured rates must lie in [0, 1]")
        a = self.alpha
        fast = self.p_fast[tasks]
        fast = fast + a * (rates - fast)
        self.p_fast[tasks] = fast
        slow = self.p_slow[tasks]
        self.p_slow[tasks] = slow + a * (fast - slow)
        self.initialized[tasks] = True
        return self

    def copy(self) -> "LpState":
        return LpState(self.p_fast.copy(), self.p_slow.copy(), self.initialized.copy(),
                       self.tau, self.p_theta)

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema": LP_STATE_SCHEMA,
            "tau": self.tau,
            "p_theta": self.p_theta,
            "tasks": [
                {"p_fast": float(f), "p_slow": float(s), "initialized": bool(i)}
                for f, s, i in zip(self.p_fast, self.p_slow, self.initialized)
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "LpState":
        if doc.get("schema") != LP_STATE_SCHEMA:
            raise DomainError(f"unsupported LpState schema {doc.get('schema')!r}")
        tasks = doc["tasks"]
        return cls(
            p_fast=[t["p_fast"] for t in tasks],
            p_slow=[t["p_slow"] for t in tasks],
            initialized=[t["initialized"] for t in tasks],
            tau=float(doc["tau"]),
            p_theta=float(doc["p_theta"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_json(cls, text: str) -> "LpState":
        return cls.from_dict(json.loads(text))


def update_emas(state: LpState, task: int, measured_rate: float) -> LpState:
    """Functional alias for :meth:`LpState.update` (mutates and returns ``state``)."""
    return state.update(task, measured_rate)


@dataclass(frozen=True)
class LpScores:
    lp_bidirectional: np.ndarray
    lp_unidirectional: np.ndarray
    sampling_probability: np.ndarray


def learning_progress(state: LpState) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(lp_bidirectional, lp_unidirectional)`` per task."""
    diff = (reweight(state.p_fast, state.p_theta)
            - reweight(state.p_slow, state.p_theta))
    diff = np.atleast_1d(diff)
    return np.abs(diff), np.maximum(diff, 0.0)


def sampling_distribution(lp: Sequence[float] | np.ndarray,
                          slope: float = DEFAULT_SLOPE,
                          center: float = SIGMOID_CENTER) -> np.ndarray:
    """Convert learning-progress values into task sampling probabilities.

    Identical values (zero spread) yield the uniform distribution.  Mean
    and variance use correctly rounded sums, so permuting ``lp`` permutes
    the output bit for bit.
    """
    lp = np.asarray(lp, dtype=float)
    if lp.ndim != 1 or lp.size < 2:
        raise DomainError("need at least two tasks")
    if not np.all(np.isfinite(lp)):
        raise DomainError("learning progress must be finite")
    if np.any(lp < 0):
        raise DomainError("learning progress must be non-negative")
    n = lp.size
    if lp.min() == lp.max():
        return np.full(n, 1.0 / n)
    mean = math.fsum(lp) / n
    dev = lp - mean
    sd = math.sqrt(math.fsum(dev * dev) / n)
    if sd == 0.0:
        return np.full(n, 1.0 / n)
    w = expit(slope * (dev / sd - center))
    return w / math.fsum(w)


def score(state: LpState, bidirectional: bool = True,
          slope: float = DEFAULT_SLOPE) -> LpScores:
    """Learning progress of both kinds plus the sampling distribution of one."""
    bi, uni = learning_progress(state)
    pi = sampling_distribution(bi if bidirectional else uni, slope=slope)
    return LpScores(bi, uni, pi)
