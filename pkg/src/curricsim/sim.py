"""Synthetic task-dependency learner driven by a curriculum.

A learner holds one skill ``s_i`` per task.  Task ``i`` can only be learned
as fast as the product of its prerequisites' skills allows, and every task
in a context group decays while the group as a whole receives too little
effort.  Each round a sampler proposes a task distribution, the exploration
bonus diverts part of the effort to collectable items in the exploration
set, skills move, and rollouts drawn from the sampler's distribution feed the
learning-progress estimator.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from graphlib import CycleError, TopologicalSorter
from typing import Any, Iterable, Sequence

import numpy as np

from .bonus import (DEFAULT_THRESHOLD, DYNAMIC_COEFFICIENT, FIXED_COEFFICIENT, BonusMode,
                    ExplorationSet)
from .errors import ConfigError, DomainError, UnknownTaskError
from .lp import DEFAULT_P_THETA, DEFAULT_SLOPE, LpState, learning_progress, sampling_distribution
from .seeding import stream

DISCOVERY_THRESHOLD = 0.05
MEASURE_TAG = "learner-sim/measure"


@dataclass(frozen=True)
class TaskGraph:
    """Tasks, their prerequisite edges, context groups and success ceilings."""

    prerequisites: tuple[tuple[int, ...], ...]
    group: tuple[str, ...]
    cap: tuple[float, ...]
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        n = len(self.prerequisites)
        object.__setattr__(self, "prerequisites",
                           tuple(tuple(sorted(set(int(j) for j in p))) for p in self.prerequisites))
        object.__setattr__(self, "group", tuple(str(g) for g in self.group))
        object.__setattr__(self, "cap", tuple(float(c) for c in self.cap))
        if n < 2:
            raise DomainError("a task graph needs at least two tasks")
        if len(self.group) != n or len(self.cap) != n:
            raise DomainError("prerequisites, group and cap must have one entry per task")
        if self.names is not None and len(self.names) != n:
            raise DomainError("names must have one entry per task")
        for i, pre in enumerate(self.prerequisites):
            for j in pre:
                if not 0 <= j < n:
                    raise UnknownTaskError(f"task {i} lists unknown prerequisite {j}")
                if j == i:
                    raise DomainError(f"task {i} lists itself as a prerequisite")
        for i, c in enumerate(self.cap):
            if not 0.0 < c <= 1.0:
                raise DomainError(f"cap of task {i} must lie in (0, 1], got {c}")
        try:
            order = tuple(TopologicalSorter({i: p for i, p in enumerate(self.prerequisites)})
                          .static_order())
        except CycleError as exc:
            raise DomainError(f"prerequisite relation has a cycle: {exc.args[1]}") from None
        object.__setattr__(self, "_order", order)

    @property
    def task_count(self) -> int:
        return len(self.prerequisites)

    @property
    def groups(self) -> tuple[str, ...]:
        """Distinct group labels in order of first appearance."""
        return tuple(dict.fromkeys(self.group))

    def topological_order(self) -> tuple[int, ...]:
        return self._order  # type: ignore[attr-defined]

    def cap_array(self) -> np.ndarray:
        return np.array(self.cap, dtype=float)

    @classmethod
    def chain(cls, n: int, group: str = "g0", cap: float = 1.0) -> "TaskGraph":
        """``n`` tasks where task ``i`` requires task ``i-1``."""
        return cls(tuple(() if i == 0 else (i - 1,) for i in range(n)),
                   (group,) * n, (cap,) * n)

    def to_config(self) -> list[dict[str, Any]]:
        out = []
        for i in range(self.task_count):
            doc: dict[str, Any] = {"id": i}
            if self.names is not None:
                doc["name"] = self.names[i]
            doc.update(prerequisites=list(self.prerequisites[i]), group=self.group[i],
                       cap=self.cap[i])
            out.append(doc)
        return out

    @classmethod
    def from_config(cls, tasks: Sequence[dict[str, Any]]) -> "TaskGraph":
        if not isinstance(tasks, list) or not tasks:
            raise ConfigError("must be a non-empty list of task objects", "tasks")
        by_id: dict[int, dict] = {}
        for pos, doc in enumerate(tasks):
            where = f"tasks[{pos}]"
            if not isinstance(doc, dict):
                raise ConfigError("must be an object", where)
            for key in ("id", "prerequisites", "group"):
                if key not in doc:
                    raise ConfigError("missing required field", f"{where}.{key}")
            tid = doc["id"]
            if not isinstance(tid, int) or isinstance(tid, bool) or tid < 0:
                raise ConfigError("must be a non-negative integer", f"{where}.id")
            if tid in by_id:
                raise ConfigError(f"duplicate task id {tid}", f"{where}.id")
            if not isinstance(doc["prerequisites"], list):
                raise ConfigError("must be a list of task ids", f"{where}.prerequisites")
            by_id[tid] = doc
        n = len(by_id)
        if sorted(by_id) != list(range(n)):
            raise ConfigError(f"task ids must be exactly 0..{n - 1}", "tasks")
        ordered = [by_id[i] for i in range(n)]
        names = None
        if any("name" in d for d in ordered):
            names = tuple(str(d.get("name", d["id"])) for d in ordered)
        try:
            return cls(tuple(tuple(d["prerequisites"]) for d in ordered),
                       tuple(d["group"] for d in ordered),
                       tuple(float(d.get("cap", 1.0)) for d in ordered),
                       names)
        except (DomainError, UnknownTaskError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc), "tasks") from None


@dataclass(frozen=True)
class LearnerParams:
    """Skill-dynamics and measurement constants.

    ``lp_tau`` is the EMA time scale used by the simulator's estimator, in
    rounds.  One simulator round stands for many optimizer steps, so it is
    far shorter than the per-step default of :class:`~curricsim.lp.LpState`.
    ``snapshot_every`` thins the recorded per-task series; the discovered
    count is recorded every round regardless.
    """

    eta_learn: float = 0.0095
    rho_forget: float = 0.02
    gamma_ref: float = 0.003
    lambda_collectable: float = 0.5
    rollouts_per_round: int = 16384
    lp_tau: float = 50.0
    p_theta: float = DEFAULT_P_THETA
    sigmoid_slope: float = DEFAULT_SLOPE
    exploration_threshold: float = DEFAULT_THRESHOLD
    hysteresis: float = 0.0
    max_n: int | None = None
    discovery_threshold: float = DISCOVERY_THRESHOLD
    discovery_source: str = "true"
    snapshot_every: int = 1

    def __post_init__(self):
        checks = [
            ("eta_learn", self.eta_learn >= 0),
            ("rho_forget", self.rho_forget >= 0),
            ("gamma_ref", self.gamma_ref > 0),
            ("lambda_collectable", 0.0 <= self.lambda_collectable <= 1.0),
            ("rollouts_per_round", isinstance(self.rollouts_per_round, int)
             and self.rollouts_per_round >= 1),
            ("lp_tau", self.lp_tau > 0),
            ("p_theta", 0.0 < self.p_theta < 0.5),
            ("sigmoid_slope", self.sigmoid_slope > 0),
            ("exploration_threshold", 0.0 <= self.exploration_threshold <= 1.0),
            ("hysteresis", self.hysteresis >= 0),
            ("max_n", self.max_n is None or (isinstance(self.max_n, int) and self.max_n >= 1)),
            ("discovery_threshold", 0.0 <= self.discovery_threshold < 1.0),
            ("discovery_source", self.discovery_source in ("true", "ema")),
            ("snapshot_every", isinstance(self.snapshot_every, int) and self.snapshot_every >= 1),
        ]
        for name, ok in checks:
            if not ok:
                raise ConfigError(f"invalid value {getattr(self, name)!r}", f"params.{name}")

    @classmethod
    def from_config(cls, doc: dict[str, Any] | None) -> "LearnerParams":
        doc = dict(doc or {})
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError("unknown parameter", f"params.{unknown[0]}")
        for key in ("rollouts_per_round", "snapshot_every", "max_n"):
            if isinstance(doc.get(key), float) and doc[key].is_integer():
                doc[key] = int(doc[key])
        for key, value in doc.items():
            if key != "discovery_source" and value is not None and (
                    isinstance(value, bool) or not isinstance(value, (int, float))):
                raise ConfigError("must be a number", f"params.{key}")
        return cls(**doc)


@dataclass
class LearnerState:
    skill: np.ndarray
    params: LearnerParams = field(default_factory=LearnerParams)

    @classmethod
    def fresh(cls, task_count: int, params: LearnerParams | None = None) -> "LearnerState":
        return cls(np.zeros(task_count), params or LearnerParams())


class Sampler(str, Enum):
    UNIFORM = "uniform"
    LP_BIDIRECTIONAL = "lp_bidirectional"
    LP_UNIDIRECTIONAL = "lp_unidirectional"


@dataclass(frozen=True)
class Treatment:
    sampler: Sampler
    bonus_mode: BonusMode
    bonus_coefficient: float

    def __post_init__(self):
        object.__setattr__(self, "sampler", Sampler(self.sampler))
        object.__setattr__(self, "bonus_mode", BonusMode(self.bonus_mode))
        if self.bonus_coefficient < 0:
            raise DomainError("bonus coefficient must be non-negative")

    @property
    def name(self) -> str:
        for key, t in TREATMENTS.items():
            if t == self:
                return key
        return f"{self.sampler.value}-{self.bonus_mode.value}-{self.bonus_coefficient:g}"

    def to_config(self) -> dict[str, Any]:
        return {"sampler": self.sampler.value, "bonus_mode": self.bonus_mode.value,
                "bonus_coefficient": self.bonus_coefficient}

    @classmethod
    def from_config(cls, doc: dict[str, Any]) -> "Treatment":
        if not isinstance(doc, dict):
            raise ConfigError("must be an object", "treatment")
        for key in ("sampler", "bonus_mode"):
            if key not in doc:
                raise ConfigError("missing required field", f"treatment.{key}")
        try:
            sampler = Sampler(doc["sampler"])
        except ValueError:
            raise ConfigError(f"unknown sampler {doc['sampler']!r}; expected one of "
                              f"{[s.value for s in Sampler]}", "treatment.sampler") from None
        try:
            mode = BonusMode(doc["bonus_mode"])
        except ValueError:
            raise ConfigError(f"unknown bonus mode {doc['bonus_mode']!r}",
                              "treatment.bonus_mode") from None
        default = {BonusMode.OFF: 0.0, BonusMode.FIXED: FIXED_COEFFICIENT,
                   BonusMode.DYNAMIC: DYNAMIC_COEFFICIENT}[mode]
        coef = doc.get("bonus_coefficient", default)
        if isinstance(coef, bool) or not isinstance(coef, (int, float)) or coef < 0:
            raise ConfigError("must be a non-negative number", "treatment.bonus_coefficient")
        return cls(sampler, mode, float(coef))


TREATMENTS: dict[str, Treatment] = {
    "uniform-off": Treatment(Sampler.UNIFORM, BonusMode.OFF, 0.0),
    "uniform-fixed": Treatment(Sampler.UNIFORM, BonusMode.FIXED, FIXED_COEFFICIENT),
    "uniform-dynamic": Treatment(Sampler.UNIFORM, BonusMode.DYNAMIC, DYNAMIC_COEFFICIENT),
    "lp_bidirectional-dynamic": Treatment(Sampler.LP_BIDIRECTIONAL, BonusMode.DYNAMIC,
                                          DYNAMIC_COEFFICIENT),
    "lp_unidirectional-dynamic": Treatment(Sampler.LP_UNIDIRECTIONAL, BonusMode.DYNAMIC,
                                           DYNAMIC_COEFFICIENT),
}


def check_treatment(treatment: Treatment) -> bool:
    """Warn when a treatment is not one of the five named ones."""
    if treatment in TREATMENTS.values():
        return True
    warnings.warn(f"treatment {treatment.to_config()} matches none of the named treatments "
                  f"{sorted(TREATMENTS)}", stacklevel=2)
    return False


class _Compiled:
    """Index arrays for vectorised per-round updates."""

    def __init__(self, graph: TaskGraph):
        n = graph.task_count
        width = max(1, max(len(p) for p in graph.prerequisites))
        # Missing slots point at a constant 1.0 appended to the skill vector.
        self.prereq = np.full((n, width), n, dtype=np.intp)
        for i, pre in enumerate(graph.prerequisites):
            self.prereq[i, :len(pre)] = pre
        labels = graph.groups
        self.gidx = np.array([labels.index(g) for g in graph.group], dtype=np.intp)
        self.group_count = len(labels)
        self.cap = graph.cap_array()

    def learnability(self, skill: np.ndarray) -> np.ndarray:
        ext = np.append(skill, 1.0)
        return np.prod(ext[self.prereq], axis=1)


def learnability(graph: TaskGraph, state: LearnerState, task: int | None = None):
    """Product of prerequisite skills, for one task or (``task=None``) all tasks."""
    if task is not None:
        if not 0 <= task < graph.task_count:
            raise UnknownTaskError(f"unknown task id {task}")
        v = 1.0
        for j in graph.prerequisites[task]:
            v *= float(state.skill[j])
        return v
    return _Compiled(graph).learnability(np.asarray(state.skill, dtype=float))


def _allocate(pi: np.ndarray, mask: np.ndarray, coefficient: float, learn: np.ndarray,
              lam: float) -> np.ndarray:
    collectable = mask & (learn >= lam)
    size = int(np.count_nonzero(collectable))
    if size == 0:
        return pi.copy()
    budget = min(coefficient, 0.9)
    return (1.0 - budget) * pi + np.where(collectable, budget / size, 0.0)


def allocate_effort(pi: np.ndarray, xset: ExplorationSet, graph: TaskGraph,
                    state: LearnerState) -> np.ndarray:
    """Mix the sampling distribution with a uniform share over collectable bonus items."""
    pi = np.asarray(pi, dtype=float)
    if abs(pi.sum() - 1.0) > 1e-9:
        raise DomainError("pi must sum to 1")
    learn = learnability(graph, state)
    return _allocate(pi, xset.mask, xset.coefficient, learn, state.params.lambda_collectable)


def _step(skill: np.ndarray, effort: np.ndarray, learn: np.ndarray, gidx: np.ndarray,
          group_count: int, p: LearnerParams) -> np.ndarray:
    g_effort = np.bincount(gidx, weights=effort, minlength=group_count)
    pressure = np.maximum(0.0, 1.0 - g_effort[gidx] / p.gamma_ref)
    new = skill + p.eta_learn * effort * learn * (1.0 - skill) - p.rho_forget * pressure * skill
    return np.clip(new, 0.0, 1.0)


def step_skills(graph: TaskGraph, state: LearnerState, effort: np.ndarray) -> LearnerState:
    """One synchronous skill update; returns a new state."""
    effort = np.asarray(effort, dtype=float)
    if abs(effort.sum() - 1.0) > 1e-9:
        raise DomainError("effort must sum to 1")
    c = _Compiled(graph)
    learn = c.learnability(np.asarray(state.skill, dtype=float))
    return LearnerState(_step(state.skill, effort, learn, c.gidx, c.group_count, state.params),
                        state.params)


def rollout_counts(pi: np.ndarray, rollouts: int) -> np.ndarray:
    return np.rint(rollouts * np.asarray(pi, dtype=float)).astype(np.int64)


def measure_successes(graph: TaskGraph, state: LearnerState, pi: np.ndarray,
                      rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Rollouts ``n_i = round(R pi_i)`` and binomial successes at ``cap_i s_i``."""
    n = rollout_counts(pi, state.params.rollouts_per_round)
    p = np.clip(graph.cap_array() * state.skill, 0.0, 1.0)
    return n, rng.binomial(n, p)


def discovered_count(p_true: Iterable[float], threshold: float = DISCOVERY_THRESHOLD) -> int:
    """Number of tasks whose success probability strictly exceeds ``threshold``."""
    return int(np.count_nonzero(np.asarray(list(p_true) if not isinstance(p_true, np.ndarray)
                                           else p_true, dtype=float) > threshold))


@dataclass
class RunRecord:
    """Time series of one treatment run.

    Per-task arrays have one row per snapshot round (``snapshot_rounds``).
    ``lp_bi``, ``lp_uni``, ``pi`` and ``in_exploration_set`` are the values
    the round acted on; ``skill``, ``p_true``, ``p_fast`` and ``p_slow`` are
    the states after it.  ``discovered`` holds one count per round.
    """

    graph: TaskGraph
    treatment: Treatment
    params: LearnerParams
    rounds: int
    seed: int
    snapshot_rounds: np.ndarray
    skill: np.ndarray
    p_true: np.ndarray
    p_fast: np.ndarray
    p_slow: np.ndarray
    lp_bi: np.ndarray
    lp_uni: np.ndarray
    pi: np.ndarray
    in_exploration_set: np.ndarray
    discovered: np.ndarray
    final_skill: np.ndarray
    final_lp_state: LpState

    @property
    def final_p_true(self) -> np.ndarray:
        return self.graph.cap_array() * self.final_skill

    def final_discovered_set(self) -> frozenset[int]:
        return frozenset(int(i) for i in
                         np.flatnonzero(self.final_p_true > self.params.discovery_threshold))

    def exploration_bitmasks(self) -> list[int]:
        return [sum(1 << int(i) for i in np.flatnonzero(row)) for row in self.in_exploration_set]


def run_treatment(graph: TaskGraph, treatment: Treatment, rounds: int, seed: int,
                  params: LearnerParams | None = None) -> RunRecord:
    if not isinstance(rounds, int) or rounds < 1:
        raise DomainError("rounds must be an integer >= 1")
    p = params or LearnerParams()
    check_treatment(treatment)
    c = _Compiled(graph)
    n_tasks = graph.task_count
    rng = stream(seed, MEASURE_TAG)
    skill = np.zeros(n_tasks)
    lp_state = LpState.fresh(n_tasks, tau=p.lp_tau, p_theta=p.p_theta)
    xset = ExplorationSet(n_tasks, treatment.bonus_mode, treatment.bonus_coefficient,
                          threshold=p.exploration_threshold, hysteresis=p.hysteresis,
                          max_n=p.max_n)
    uniform = np.full(n_tasks, 1.0 / n_tasks)
    dynamic = treatment.bonus_mode is BonusMode.DYNAMIC
    ema_discovery = p.discovery_source == "ema"

    snap_rounds = [t for t in range(rounds) if t % p.snapshot_every == 0 or t == rounds - 1]
    n_snap = len(snap_rounds)
    shape = (n_snap, n_tasks)
    rec = {k: np.empty(shape) for k in
           ("skill", "p_true", "p_fast", "p_slow", "lp_bi", "lp_uni", "pi")}
    in_set = np.empty(shape, dtype=bool)
    discovered = np.empty(rounds, dtype=np.int64)
    snap_i = 0

    for t in range(rounds):
        lp_bi, lp_uni = learning_progress(lp_state)
        if treatment.sampler is Sampler.UNIFORM:
            pi = uniform
        else:
            lp = lp_bi if treatment.sampler is Sampler.LP_BIDIRECTIONAL else lp_uni
            pi = sampling_distribution(lp, slope=p.sigmoid_slope)
        if dynamic:
            xset.refresh(lp_state)
        learn = c.learnability(skill)
        effort = _allocate(pi, xset.mask, xset.coefficient, learn, p.lambda_collectable)
        skill = _step(skill, effort, learn, c.gidx, c.group_count, p)
        p_true = c.cap * skill
        n = rollout_counts(pi, p.rollouts_per_round)
        k = rng.binomial(n, p_true)
        measured = np.flatnonzero(n > 0)
        lp_state.update_many(measured, k[measured] / n[measured])
        basis = lp_state.p_fast if ema_discovery else p_true
        discovered[t] = np.count_nonzero(basis > p.discovery_threshold)
        if snap_i < n_snap and snap_rounds[snap_i] == t:
            rec["skill"][snap_i] = skill
            rec["p_true"][snap_i] = p_true
            rec["p_fast"][snap_i] = lp_state.p_fast
            rec["p_slow"][snap_i] = lp_state.p_slow
            rec["lp_bi"][snap_i] = lp_bi
            rec["lp_uni"][snap_i] = lp_uni
            rec["pi"][snap_i] = pi
            in_set[snap_i] = xset.mask
            snap_i += 1

    return RunRecord(graph, treatment, p, rounds, seed, np.array(snap_rounds, dtype=np.int64),
                     in_exploration_set=in_set, discovered=discovered, final_skill=skill.copy(),
                     final_lp_state=lp_state, **rec)


@dataclass(frozen=True)
class RunConfig:
    """A fully resolved run: graph, treatment, parameters, length and seed."""

    graph: TaskGraph
    treatment: Treatment
    params: LearnerParams
    rounds: int
    seed: int
    name: str | None = None

    def to_dict(self) -> dict[str, Any]:
        doc: dict[str, Any] = {}
        if self.name:
            doc["name"] = self.name
        doc.update(tasks=self.graph.to_config(), treatment=self.treatment.to_config(),
                   params=asdict(self.params), rounds=self.rounds, seed=self.seed)
        return doc

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "RunConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        for key in ("tasks", "treatment"):
            if key not in doc:
                raise ConfigError("missing required field", key)
        graph = TaskGraph.from_config(doc["tasks"])
        treatment = Treatment.from_config(doc["treatment"])
        params = LearnerParams.from_config(doc.get("params"))
        rounds = doc.get("rounds", 50_000)
        if isinstance(rounds, bool) or not isinstance(rounds, int) or rounds < 1:
            raise ConfigError("must be an integer >= 1", "rounds")
        seed = doc.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
            raise ConfigError("must be an unsigned 64-bit integer", "seed")
        name = doc.get("name")
        if name is not None and not isinstance(name, str):
            raise ConfigError("must be a string", "name")
        return cls(graph, treatment, params, rounds, seed, name)

    def replace(self, **changes) -> "RunConfig":
        doc = {f.name: getattr(self, f.name) for f in fields(self)}
        doc.update(changes)
        return RunConfig(**doc)

    def run(self) -> RunRecord:
        return run_treatment(self.graph, self.treatment, self.rounds, self.seed, self.params)
