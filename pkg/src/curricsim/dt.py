"""Bias-variance analysis of the difference-quotient slope estimator.

The slope of a success curve ``mu(t)`` is estimated from two snapshots,
each an average of ``n`` Bernoulli draws, taken ``delta_t`` apart.  The
expected squared error to second order is::

    err2 = 2 * sigma2_bar / (n * delta_t**2) + mu''(t)**2 * delta_t**2 / 4

with ``sigma2_bar`` the mean Bernoulli variance of the two snapshots.  It
is minimised at ``delta_t_opt = (8 * sigma2_bar / (n * mu''**2)) ** 0.25``,
where both terms are equal.  :func:`empirical_err2_curve` measures the
same quantity by Monte Carlo.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar

from .errors import DomainError, NoOptimumError
from .lp import DEFAULT_P_THETA, LpState, reweight
from .seeding import stream

_NO_OPTIMUM = "an optimum exists if and only if mu''(t) is non-zero"


class SuccessCurve:
    """A success-probability curve ``mu`` on ``[t0, t1]`` with two derivatives."""

    family = "abstract"

    def __init__(self, t0: float, t1: float):
        if not t1 > t0:
            raise DomainError("curve domain must satisfy t0 < t1")
        self.t0 = float(t0)
        self.t1 = float(t1)

    def mu(self, t):
        raise NotImplementedError

    def d1(self, t):
        raise NotImplementedError

    def d2(self, t):
        raise NotImplementedError

    def variance(self, t):
        m = self.mu(t)
        return m * (1.0 - m)

    def _check_range(self, samples: int = 2001) -> None:
        m = self.mu(np.linspace(self.t0, self.t1, samples))
        if np.any(m < 0.0) or np.any(m > 1.0):
            raise DomainError(f"{self.family} curve leaves [0, 1] on its domain")

    def params(self) -> dict:
        return {"family": self.family, "t0": self.t0, "t1": self.t1}


class LogisticCurve(SuccessCurve):
    family = "logistic"

    def __init__(self, midpoint: float = 1000.0, scale: float = 50.0,
                 t0: float = 0.0, t1: float = 2000.0):
        super().__init__(t0, t1)
        if not scale > 0:
            raise DomainError("logistic scale must be positive")
        self.midpoint = float(midpoint)
        self.scale = float(scale)

    def mu(self, t):
        return 1.0 / (1.0 + np.exp(-(np.asarray(t, dtype=float) - self.midpoint) / self.scale))

    def d1(self, t):
        m = self.mu(t)
        return m * (1.0 - m) / self.scale

    def d2(self, t):
        m = self.mu(t)
        return m * (1.0 - m) * (1.0 - 2.0 * m) / self.scale ** 2

    def params(self) -> dict:
        return {**super().params(), "midpoint": self.midpoint, "scale": self.scale}


class LinearCurve(SuccessCurve):
    family = "linear"

    def __init__(self, intercept: float = 0.1, slope: float = 4e-4,
                 t0: float = 0.0, t1: float = 2000.0):
        super().__init__(t0, t1)
        self.intercept = float(intercept)
        self.slope = float(slope)
        self._check_range()

    def mu(self, t):
        return self.intercept + self.slope * np.asarray(t, dtype=float)

    def d1(self, t):
        return np.full_like(np.asarray(t, dtype=float), self.slope)

    def d2(self, t):
        return np.zeros_like(np.asarray(t, dtype=float))

    def params(self) -> dict:
        return {**super().params(), "intercept": self.intercept, "slope": self.slope}


class QuadraticCurve(SuccessCurve):
    """``mu(t) = a + b t + c t**2``."""

    family = "quadratic"

    def __init__(self, a: float = 0.0, b: float = 0.0, c: float = 2e-7,
                 t0: float = 0.0, t1: float = 2000.0):
        super().__init__(t0, t1)
        self.a, self.b, self.c = float(a), float(b), float(c)
        self._check_range()

    def mu(self, t):
        t = np.asarray(t, dtype=float)
        return self.a + self.b * t + self.c * t * t

    def d1(self, t):
        return self.b + 2.0 * self.c * np.asarray(t, dtype=float)

    def d2(self, t):
        return np.full_like(np.asarray(t, dtype=float), 2.0 * self.c)

    def params(self) -> dict:
        return {**super().params(), "a": self.a, "b": self.b, "c": self.c}


class TableCurve(SuccessCurve):
    """Tabulated curve, interpolated by a natural cubic spline."""

    family = "custom-table"

    def __init__(self, times: Sequence[float], values: Sequence[float]):
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if times.ndim != 1 or times.size < 4 or times.shape != values.shape:
            raise DomainError("table needs at least four (time, value) pairs")
        super().__init__(times[0], times[-1])
        self._spline = CubicSpline(times, values, bc_type="natural")
        self._times, self._values = times, values
        self._check_range()

    def mu(self, t):
        return self._spline(np.asarray(t, dtype=float))

    def d1(self, t):
        return self._spline(np.asarray(t, dtype=float), 1)

    def d2(self, t):
        return self._spline(np.asarray(t, dtype=float), 2)

    def params(self) -> dict:
        return {**super().params(), "times": self._times.tolist(), "values": self._values.tolist()}


def curve_from_params(doc: dict) -> SuccessCurve:
    doc = dict(doc)
    family = doc.pop("family")
    if family == "logistic":
        return LogisticCurve(**doc)
    if family == "linear":
        return LinearCurve(**doc)
    if family == "quadratic":
        return QuadraticCurve(**doc)
    if family == "custom-table":
        return TableCurve(doc["times"], doc["values"])
    raise DomainError(f"unknown curve family {family!r}")


@dataclass(frozen=True)
class EstimatorSpec:
    n: int
    delta_t: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DomainError("n must be an integer >= 1")
        if not self.delta_t > 0:
            raise DomainError("delta_t must be positive")


def _check_lag(curve: SuccessCurve, t: float, delta_t: float) -> None:
    if t - delta_t < curve.t0:
        raise DomainError(f"t - delta_t = {t - delta_t} precedes curve start {curve.t0}")
    if t > curve.t1:
        raise DomainError(f"t = {t} lies beyond curve end {curve.t1}")


def difference_quotients(spec: EstimatorSpec, curve: SuccessCurve, t: float,
                         rng: np.random.Generator, size: int) -> np.ndarray:
    """``size`` independent slope estimates at ``t``.

    A snapshot mean of ``n`` Bernoulli draws is drawn directly as a
    binomial count over ``n``.
    """
    _check_lag(curve, t, spec.delta_t)
    now = rng.binomial(spec.n, float(curve.mu(t)), size=size)
    before = rng.binomial(spec.n, float(curve.mu(t - spec.delta_t)), size=size)
    return (now - before) / (spec.n * spec.delta_t)


def difference_quotient(spec: EstimatorSpec, curve: SuccessCurve, t: float,
                        rng: np.random.Generator) -> float:
    return float(difference_quotients(spec, curve, t, rng, 1)[0])


def mean_variance(curve: SuccessCurve, t: float, delta_t: float) -> float:
    return 0.5 * float(curve.variance(t) + curve.variance(t - delta_t))


def analytic_err2(spec: EstimatorSpec, curve: SuccessCurve, t: float,
                  sigma2_bar: float | None = None) -> float:
    """Second-order expected squared error of the slope estimate.

    ``sigma2_bar`` defaults to the mean variance of the two snapshots;
    pass a value to hold it fixed (as the closed-form optimum does).
    """
    if not spec.delta_t > 0:
        raise DomainError("delta_t must be positive")
    if sigma2_bar is None:
        sigma2_bar = mean_variance(curve, t, spec.delta_t)
    dt = spec.delta_t
    return 2.0 * sigma2_bar / (spec.n * dt * dt) + 0.25 * float(curve.d2(t)) ** 2 * dt * dt


def error_terms(n: int, sigma2_bar: float, curvature: float, delta_t: float) -> tuple[float, float]:
    """The (variance, squared bias) terms of the error separately."""
    return 2.0 * sigma2_bar / (n * delta_t ** 2), 0.25 * curvature ** 2 * delta_t ** 2


def optimal_delta_t_closed_form(n: int, sigma2_bar: float, curvature: float) -> float:
    if curvature == 0:
        raise NoOptimumError(_NO_OPTIMUM)
    return (8.0 * sigma2_bar / (n * curvature ** 2)) ** 0.25


def optimal_delta_t(n: int, curve: SuccessCurve, t: float) -> float:
    """Closed-form optimal lag, with the variance taken at ``t`` itself."""
    curvature = float(curve.d2(t))
    if curvature == 0:
        raise NoOptimumError(_NO_OPTIMUM)
    return optimal_delta_t_closed_form(n, float(curve.variance(t)), curvature)


def numeric_optimal_delta_t(n: int, curve: SuccessCurve, t: float,
                            frozen_variance: bool = True) -> float:
    """Minimise :func:`analytic_err2` over the lag numerically.

    With ``frozen_variance`` the variance is held at its value at ``t``,
    which is the objective the closed form solves exactly; otherwise the
    lag-dependent mean variance is used.
    """
    curvature = float(curve.d2(t))
    if curvature == 0:
        raise NoOptimumError(_NO_OPTIMUM)
    guess = optimal_delta_t(n, curve, t)
    upper = min(10.0 * guess, t - curve.t0)
    sigma2 = float(curve.variance(t)) if frozen_variance else None

    def objective(log_dt: float) -> float:
        return analytic_err2(EstimatorSpec(n, math.exp(log_dt)), curve, t, sigma2)

    res = minimize_scalar(objective, bounds=(math.log(guess / 10.0), math.log(upper)),
                          method="bounded", options={"xatol": 1e-12, "maxiter": 500})
    return float(math.exp(res.x))


def log_grid(center: float, decades: float = 2.0, per_decade: int = 25) -> np.ndarray:
    """Logarithmic lag grid spanning ``decades`` decades centred on ``center``."""
    if not center > 0:
        raise DomainError("grid centre must be positive")
    half = int(round(decades * per_decade / 2))
    k = np.arange(-half, half + 1)
    return center * 10.0 ** (k / per_decade)


MC_BLOCK = 10_000
MC_TAG = "dt-monte-carlo"


@dataclass(frozen=True)
class Err2Table:
    delta_t: np.ndarray
    empirical_err2: np.ndarray
    empirical_stderr: np.ndarray
    trials: int


def empirical_err2_curve(n: int, grid: Sequence[float], curve: SuccessCurve, t: float,
                         trials: int, seed: int = 0) -> Err2Table:
    """Monte Carlo mean squared error of the slope estimate at each lag.

    Trials run in blocks of :data:`MC_BLOCK`; block ``b`` of grid point
    ``g`` draws from a generator keyed by ``(seed, g, b)``, so results do
    not depend on how blocks are scheduled.  Accumulation is in block
    order.
    """
    if trials < 1:
        raise DomainError("trials must be >= 1")
    grid = np.asarray(grid, dtype=float)
    truth = float(curve.d1(t))
    means = np.empty(grid.size)
    errs = np.empty(grid.size)
    for g, dt in enumerate(grid):
        spec = EstimatorSpec(n, float(dt))
        total = 0.0
        total_sq = 0.0
        done = 0
        b = 0
        while done < trials:
            size = min(MC_BLOCK, trials - done)
            est = difference_quotients(spec, curve, t, stream(seed, MC_TAG, g, b), size)
            sq = (est - truth) ** 2
            total += float(np.sum(sq))
            total_sq += float(np.sum(sq * sq))
            done += size
            b += 1
        mean = total / trials
        means[g] = mean
        if trials > 1:
            var = max(total_sq / trials - mean * mean, 0.0) * trials / (trials - 1)
            errs[g] = math.sqrt(var / trials)
        else:
            errs[g] = math.nan
    return Err2Table(grid, means, errs, trials)


def exact_err2(n: int, curve: SuccessCurve, t: float, delta_t: float) -> float:
    """Exact expected squared error (no Taylor truncation) of the estimator."""
    _check_lag(curve, t, delta_t)
    var = float(curve.variance(t) + curve.variance(t - delta_t)) / (n * delta_t ** 2)
    bias = float(curve.mu(t) - curve.mu(t - delta_t)) / delta_t - float(curve.d1(t))
    return var + bias * bias


#: Offset of the default evaluation point from the logistic midpoint, in
#: units of the logistic scale.  Here the neglected higher-order terms of
#: the error expansion nearly cancel out to twice the optimal lag.
DEFAULT_EVAL_OFFSET = -0.96


def default_eval_time(curve: LogisticCurve) -> float:
    return curve.midpoint + DEFAULT_EVAL_OFFSET * curve.scale


@dataclass
class DtStudy:
    """A lag sweep comparing the analytic error with its Monte Carlo estimate.

    By default the grid is :func:`log_grid` around the closed-form optimum,
    which requires non-zero curvature.  With ``closed_form=False`` an
    explicit ``grid`` is required and no optimum is reported.
    """

    curve: SuccessCurve
    t: float
    n: int = 200
    trials: int = 100_000
    seed: int = 0
    decades: float = 2.0
    per_decade: int = 25
    grid: Sequence[float] | None = None
    closed_form: bool = True

    def run(self) -> dict:
        summary: dict = {}
        if self.closed_form:
            closed = optimal_delta_t(self.n, self.curve, self.t)
            summary["delta_t_opt_closed_form"] = closed
            summary["delta_t_opt_numeric"] = numeric_optimal_delta_t(
                self.n, self.curve, self.t, frozen_variance=True)
            summary["delta_t_opt_numeric_lag_dependent_variance"] = numeric_optimal_delta_t(
                self.n, self.curve, self.t, frozen_variance=False)
        elif self.grid is None:
            raise DomainError("an explicit grid is required without the closed-form optimum")
        if self.grid is not None:
            grid = np.asarray(self.grid, dtype=float)
        else:
            grid = log_grid(summary["delta_t_opt_closed_form"], self.decades, self.per_decade)
        if grid.ndim != 1 or grid.size == 0 or np.any(grid <= 0):
            raise DomainError("grid must be a non-empty list of positive lags")
        table = empirical_err2_curve(self.n, grid, self.curve, self.t, self.trials, self.seed)
        analytic = np.array([analytic_err2(EstimatorSpec(self.n, float(d)), self.curve, self.t)
                             for d in grid])
        summary.update({
            "empirical_argmin": float(grid[int(np.argmin(table.empirical_err2))]),
            "t": self.t,
            "n": self.n,
            "trials": self.trials,
            "seed": self.seed,
            "curve": self.curve.params(),
        })
        return {
            "grid": grid,
            "analytic_err2": analytic,
            "empirical_err2": table.empirical_err2,
            "empirical_stderr": table.empirical_stderr,
            "summary": summary,
        }


def lp_trace(curve: SuccessCurve, rounds: int, tau: float,
             p_theta: float = DEFAULT_P_THETA) -> np.ndarray:
    """Bidirectional learning progress when ``mu(t)`` is measured exactly each round ``t``."""
    state = LpState.fresh(1, tau=tau, p_theta=p_theta)
    rates = np.clip(curve.mu(np.arange(rounds, dtype=float)), 0.0, 1.0)
    fast = np.empty(rounds)
    slow = np.empty(rounds)
    for t in range(rounds):
        state.update(0, float(rates[t]))
        fast[t] = state.p_fast[0]
        slow[t] = state.p_slow[0]
    return np.abs(reweight(fast, p_theta) - reweight(slow, p_theta))


def lp_peak_lag(curve: LogisticCurve, rounds: int, tau: float) -> int:
    """Rounds by which the learning-progress peak trails the logistic midpoint."""
    return int(np.argmax(lp_trace(curve, rounds, tau))) - int(round(curve.midpoint))
