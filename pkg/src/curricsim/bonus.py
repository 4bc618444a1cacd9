"""Within-episode exploration bonus and the dynamic exploration set.

An item in the exploration set pays ``coefficient * 0.5**N`` when the
agent's inventory of it reaches a new episode maximum ``N``.  Dropping an
item and picking it up again never lifts the inventory above a previous
maximum, so it pays nothing.  In dynamic mode the set holds exactly the
tasks whose fast success estimate is below a threshold.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import IO

import numpy as np

from .errors import ContractError, DomainError, UnknownTaskError
from .lp import LpState

DEFAULT_THRESHOLD = 0.1
FIXED_COEFFICIENT = 0.05
DYNAMIC_COEFFICIENT = 0.5


class BonusMode(str, Enum):
    OFF = "off"
    FIXED = "fixed"
    DYNAMIC = "dynamic"


@dataclass
class EpisodeLedger:
    """Per-item counters for one episode; both reset when a new episode begins."""

    collection_count: np.ndarray
    max_inventory: np.ndarray

    @classmethod
    def fresh(cls, item_count: int) -> "EpisodeLedger":
        return cls(np.zeros(item_count, dtype=np.int64), np.zeros(item_count, dtype=np.int64))

    @property
    def item_count(self) -> int:
        return int(self.max_inventory.shape[0])

    def reset(self) -> None:
        self.collection_count[:] = 0
        self.max_inventory[:] = 0


@dataclass
class ExplorationSet:
    """Tasks currently eligible for the exploration bonus.

    ``hysteresis`` widens the removal threshold to ``threshold + hysteresis``
    (re-admission stays at ``threshold``).  ``max_n`` optionally stops the
    bonus after the ``max_n``-th new maximum.
    """

    task_count: int
    mode: BonusMode = BonusMode.DYNAMIC
    coefficient: float = DYNAMIC_COEFFICIENT
    threshold: float = DEFAULT_THRESHOLD
    hysteresis: float = 0.0
    max_n: int | None = None
    mask: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.mode = BonusMode(self.mode)
        if self.coefficient < 0:
            raise DomainError("bonus coefficient must be non-negative")
        if not 0.0 <= self.threshold <= 1.0:
            raise DomainError("threshold must lie in [0, 1]")
        if self.hysteresis < 0:
            raise DomainError("hysteresis must be non-negative")
        if self.mode is not BonusMode.DYNAMIC or self.mask is None:
            # A fresh dynamic set admits everything: all estimates start at 0.
            fill = self.mode is not BonusMode.OFF
            self.mask = np.full(self.task_count, fill, dtype=bool)
        else:
            self.mask = np.array(self.mask, dtype=bool)
            if self.mask.shape != (self.task_count,):
                raise DomainError("mask length must equal task_count")

    @property
    def members(self) -> frozenset[int]:
        return frozenset(int(i) for i in np.flatnonzero(self.mask))

    def __contains__(self, task: int) -> bool:
        return bool(self.mask[task])

    def refresh(self, lp_state: LpState) -> "ExplorationSet":
        """Recompute dynamic membership from the fast success estimates."""
        if self.mode is not BonusMode.DYNAMIC:
            raise ContractError(f"refresh requires dynamic mode, set is {self.mode.value}")
        if lp_state.task_count != self.task_count:
            raise DomainError("task count mismatch between set and LpState")
        p = lp_state.p_fast
        if self.hysteresis == 0.0:
            self.mask = p < self.threshold
        else:
            stay = self.mask & (p < self.threshold + self.hysteresis)
            self.mask = stay | (p < self.threshold)
        return self

    def bitmask(self) -> int:
        """Membership as an integer with bit ``i`` set for task ``i``."""
        return sum(1 << int(i) for i in np.flatnonzero(self.mask))


def refresh_exploration_set(xset: ExplorationSet, lp_state: LpState) -> ExplorationSet:
    return xset.refresh(lp_state)


def bonus_for_collection(ledger: EpisodeLedger, item: int, new_inventory_count: int,
                         xset: ExplorationSet) -> float:
    """Reward for an item collection that leaves ``new_inventory_count`` held.

    Pays only when the count exceeds the episode's previous maximum, and
    records the new maximum.  Items outside the set pay nothing and leave
    the ledger untouched.
    """
    if new_inventory_count < 0:
        raise DomainError("inventory count must be non-negative")
    if not 0 <= item < ledger.item_count:
        raise UnknownTaskError(f"unknown item {item}")
    if item not in xset:
        return 0.0
    n = int(new_inventory_count)
    if n <= ledger.max_inventory[item]:
        return 0.0
    ledger.max_inventory[item] = n
    ledger.collection_count[item] += 1
    if xset.max_n is not None and n > xset.max_n:
        return 0.0
    return xset.coefficient * 0.5 ** n


class BonusEventLog:
    """Writes bonus events as JSON lines ``{round, item, N, reward}``."""

    def __init__(self, stream: IO[str]):
        self._stream = stream

    def record(self, round_index: int, item: int, n: int, reward: float) -> None:
        self._stream.write(json.dumps({"round": round_index, "item": item, "N": n,
                                       "reward": reward}) + "\n")
