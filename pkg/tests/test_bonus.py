import io
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from curricsim.bonus import (BonusEventLog, BonusMode, EpisodeLedger, ExplorationSet,
                             bonus_for_collection, refresh_exploration_set)
from curricsim.errors import ContractError, DomainError, UnknownTaskError
from curricsim.lp import LpState


def dynamic_set(n=3, **kw):
    return ExplorationSet(n, BonusMode.DYNAMIC, 0.5, **kw)


class TestBonus:
    def test_geometric_sequence(self):
        ledger = EpisodeLedger.fresh(2)
        xs = dynamic_set(2)
        assert bonus_for_collection(ledger, 0, 1, xs) == 0.25
        assert bonus_for_collection(ledger, 0, 2, xs) == 0.125
        assert ledger.max_inventory.tolist() == [2, 0]
        assert ledger.collection_count.tolist() == [2, 0]

    def test_drop_and_repick_pays_nothing(self):
        ledger = EpisodeLedger.fresh(1)
        xs = dynamic_set(1)
        bonus_for_collection(ledger, 0, 1, xs)
        bonus_for_collection(ledger, 0, 2, xs)
        before = (ledger.max_inventory.copy(), ledger.collection_count.copy())
        assert bonus_for_collection(ledger, 0, 1, xs) == 0.0  # dropped one
        assert bonus_for_collection(ledger, 0, 2, xs) == 0.0  # picked it back up
        assert np.array_equal(ledger.max_inventory, before[0])
        assert np.array_equal(ledger.collection_count, before[1])
        assert bonus_for_collection(ledger, 0, 3, xs) == 0.5 * 0.5 ** 3

    def test_not_in_set(self):
        ledger = EpisodeLedger.fresh(3)
        xs = ExplorationSet(3, BonusMode.OFF)
        assert bonus_for_collection(ledger, 1, 5, xs) == 0.0
        assert ledger.max_inventory.sum() == 0

    def test_fixed_coefficient(self):
        xs = ExplorationSet(2, BonusMode.FIXED, 0.05)
        assert bonus_for_collection(EpisodeLedger.fresh(2), 1, 1, xs) == pytest.approx(0.025)

    def test_fifty_copies_bounded(self):
        ledger = EpisodeLedger.fresh(1)
        xs = dynamic_set(1)
        total = sum(bonus_for_collection(ledger, 0, n, xs) for n in range(1, 51))
        assert total <= 0.5
        assert total == pytest.approx(0.5 * (1 - 0.5 ** 50), abs=1e-15)

    def test_errors(self):
        ledger = EpisodeLedger.fresh(2)
        with pytest.raises(DomainError):
            bonus_for_collection(ledger, 0, -1, dynamic_set(2))
        with pytest.raises(UnknownTaskError):
            bonus_for_collection(ledger, 5, 1, dynamic_set(2))

    def test_max_n_cutoff(self):
        ledger = EpisodeLedger.fresh(1)
        xs = dynamic_set(1, max_n=2)
        rewards = [bonus_for_collection(ledger, 0, n, xs) for n in (1, 2, 3)]
        assert rewards == [0.25, 0.125, 0.0]
        assert ledger.max_inventory[0] == 3

    def test_reset(self):
        ledger = EpisodeLedger.fresh(2)
        bonus_for_collection(ledger, 0, 3, dynamic_set(2))
        ledger.reset()
        assert ledger.max_inventory.sum() == 0 and ledger.collection_count.sum() == 0
        assert bonus_for_collection(ledger, 0, 1, dynamic_set(2)) == 0.25

    @given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 20)), max_size=200))
    def test_budget_and_determinism(self, events):
        def play():
            ledger = EpisodeLedger.fresh(4)
            xs = dynamic_set(4)
            return [bonus_for_collection(ledger, i, n, xs) for i, n in events], ledger

        rewards, ledger = play()
        assert rewards == play()[0]
        assert sum(rewards) <= 0.5 * 4
        per_item = np.zeros(4)
        for (i, _), r in zip(events, rewards):
            per_item[i] += r
        assert np.all(per_item <= 0.5)

    def test_event_log(self):
        buf = io.StringIO()
        BonusEventLog(buf).record(3, 1, 2, 0.125)
        assert json.loads(buf.getvalue()) == {"round": 3, "item": 1, "N": 2, "reward": 0.125}


class TestExplorationSet:
    def test_mode_memberships(self):
        assert ExplorationSet(3, BonusMode.FIXED).members == {0, 1, 2}
        assert ExplorationSet(3, BonusMode.OFF).members == frozenset()
        assert dynamic_set(3).members == {0, 1, 2}

    def test_fresh_run_all_members(self):
        xs = refresh_exploration_set(dynamic_set(3), LpState.fresh(3))
        assert xs.members == {0, 1, 2}

    def test_strict_threshold(self):
        lp = LpState([0.05, 0.15, 0.1], [0.0, 0.0, 0.0], [True] * 3)
        assert refresh_exploration_set(dynamic_set(3), lp).members == {0}

    def test_readmission_after_decay(self):
        xs = dynamic_set(1)
        lp = LpState.fresh(1, tau=2.0)
        for _ in range(10):
            lp.update(0, 1.0)
        assert 0 not in xs.refresh(lp)
        for _ in range(20):
            lp.update(0, 0.0)
            xs.refresh(lp)
            assert xs.members == ({0} if lp.p_fast[0] < 0.1 else set())
        assert 0 in xs

    def test_permanently_high_never_returns(self):
        xs = dynamic_set(2)
        lp = LpState.fresh(2, tau=3.0)
        rng = np.random.default_rng(0)
        lp.update(0, 1.0)
        lp.update(0, 1.0)
        for _ in range(200):
            lp.update(0, float(rng.uniform(0.6, 1.0)))
            lp.update(1, float(rng.uniform(0.0, 0.05)))
            xs.refresh(lp)
            assert 0 not in xs and 1 in xs

    def test_hysteresis(self):
        xs = dynamic_set(1, hysteresis=0.05)
        assert 0 in xs.refresh(LpState([0.12], [0.0], [True]))
        assert 0 not in xs.refresh(LpState([0.2], [0.0], [True]))
        assert 0 not in xs.refresh(LpState([0.12], [0.0], [True]))
        assert 0 in xs.refresh(LpState([0.08], [0.0], [True]))

    def test_refresh_requires_dynamic(self):
        with pytest.raises(ContractError):
            ExplorationSet(2, BonusMode.FIXED).refresh(LpState.fresh(2))

    def test_bitmask(self):
        lp = LpState([0.05, 0.5, 0.0], [0.0] * 3, [True] * 3)
        assert dynamic_set(3).refresh(lp).bitmask() == 0b101

    def test_validation(self):
        with pytest.raises(DomainError):
            ExplorationSet(2, BonusMode.DYNAMIC, -1.0)
        with pytest.raises(DomainError):
            ExplorationSet(2, BonusMode.DYNAMIC, mask=np.array([True]))
        with pytest.raises(DomainError):
            dynamic_set(2).refresh(LpState.fresh(3))
