import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import expit
from scipy.stats import norm

from curricsim.errors import DomainError, UnknownTaskError
from curricsim.lp import (SIGMOID_CENTER, LpState, learning_progress, reweight,
                          sampling_distribution, score, update_emas)

# Frozen oracles, computed by hand before the implementation existed.
F_02 = 0.18 / 0.26
LP_02_01 = F_02 - 0.5  # 0.1923076923...
F_07_MINUS_F_06 = 0.63 / 0.66 - 0.54 / 0.58  # 0.0235109...
# Expected probability share of the top decile for i.i.d. normal lp, k=4.
TOP_DECILE_SHARE_K4 = 0.65296


class TestReweight:
    def test_fixed_points(self):
        assert reweight(0.0) == 0.0
        assert reweight(1.0) == 1.0

    @pytest.mark.parametrize("p,expected", [(0.1, 0.5), (0.5, 0.9), (0.2, F_02)])
    def test_values(self, p, expected):
        assert reweight(p, 0.1) == pytest.approx(expected, abs=1e-12)

    def test_small_probabilities_magnified(self):
        low = reweight(0.2) - reweight(0.1)
        high = reweight(0.7) - reweight(0.6)
        assert low == pytest.approx(0.19231, abs=1e-5)
        assert high == pytest.approx(F_07_MINUS_F_06, abs=1e-12)
        assert low > high
        assert reweight(0.1) - reweight(0.0) > reweight(0.9) - reweight(0.8)

    def test_strictly_increasing_on_grid(self):
        grid = np.linspace(0.0, 1.0, 10_000)
        assert np.all(np.diff(reweight(grid)) > 0)

    def test_array_in_array_out(self):
        out = reweight(np.array([0.0, 0.1, 1.0]))
        assert isinstance(out, np.ndarray)
        np.testing.assert_allclose(out, [0.0, 0.5, 1.0], atol=1e-12)

    @pytest.mark.parametrize("p", [-0.01, 1.01, float("nan")])
    def test_domain(self, p):
        with pytest.raises(DomainError):
            reweight(p)

    @pytest.mark.parametrize("theta", [0.0, 0.5, -0.1])
    def test_theta_domain(self, theta):
        with pytest.raises(DomainError):
            reweight(0.3, theta)


class TestEma:
    def test_single_step(self):
        s = LpState.fresh(3)
        update_emas(s, 0, 1.0)
        assert s.p_fast[0] == pytest.approx(0.0008, abs=1e-15)
        assert s.p_slow[0] == pytest.approx(6.4e-7, abs=1e-15)
        assert s.initialized.tolist() == [True, False, False]
        assert s.p_fast[1] == 0.0 and s.p_slow[2] == 0.0

    def test_fixed_point(self):
        s = LpState.fresh(2, initial=0.37)
        s.update(1, 0.37)
        assert s.p_fast[1] == 0.37 and s.p_slow[1] == 0.37

    def test_convergence(self):
        s = LpState.fresh(1)
        for _ in range(int(20 * s.tau)):
            s.update(0, 0.6)
        assert abs(s.p_fast[0] - 0.6) < 1e-3
        assert abs(s.p_slow[0] - 0.6) < 1e-3

    def test_errors(self):
        s = LpState.fresh(2)
        with pytest.raises(UnknownTaskError):
            s.update(2, 0.5)
        with pytest.raises(UnknownTaskError):
            s.update(-1, 0.5)
        with pytest.raises(DomainError):
            s.update(0, 1.5)

    def test_update_many_matches_update(self):
        rng = np.random.default_rng(3)
        a, b = LpState.fresh(6, tau=7.0), LpState.fresh(6, tau=7.0)
        for _ in range(50):
            tasks = np.flatnonzero(rng.random(6) < 0.5)
            rates = rng.random(tasks.size)
            a.update_many(tasks, rates)
            for t, r in zip(tasks, rates):
                b.update(int(t), float(r))
        assert np.array_equal(a.p_fast, b.p_fast)
        assert np.array_equal(a.p_slow, b.p_slow)
        assert np.array_equal(a.initialized, b.initialized)

    def test_invalid_state(self):
        with pytest.raises(DomainError):
            LpState.fresh(2, tau=0.0)
        with pytest.raises(DomainError):
            LpState([0.5, 1.2], [0.0, 0.0], [False, False])

    def test_json_roundtrip(self):
        s = LpState.fresh(3, tau=40.0)
        s.update(1, 0.3)
        doc = json.loads(s.to_json())
        assert doc["schema"] == "curricsim.lp_state/1"
        assert set(doc["tasks"][0]) == {"p_fast", "p_slow", "initialized"}
        back = LpState.from_json(s.to_json())
        assert np.array_equal(back.p_fast, s.p_fast)
        assert np.array_equal(back.initialized, s.initialized)
        assert back.tau == 40.0

    def test_bad_schema(self):
        with pytest.raises(DomainError):
            LpState.from_dict({"schema": "other", "tasks": []})


class TestLearningProgress:
    def test_equal_estimates(self):
        s = LpState([0.3, 0.8], [0.3, 0.8], [True, True])
        bi, uni = learning_progress(s)
        assert bi.tolist() == [0.0, 0.0] and uni.tolist() == [0.0, 0.0]

    def test_rising_and_falling(self):
        s = LpState([0.2, 0.1], [0.1, 0.2], [True, True])
        bi, uni = learning_progress(s)
        assert bi[0] == pytest.approx(0.19231, abs=1e-5)
        assert bi[1] == pytest.approx(LP_02_01, abs=1e-12)
        assert uni[0] == pytest.approx(LP_02_01, abs=1e-12)
        assert uni[1] == 0.0

    @given(st.floats(0, 1), st.floats(0, 1))
    def test_symmetry(self, a, b):
        ab = learning_progress(LpState([a], [b], [True]))
        ba = learning_progress(LpState([b], [a], [True]))
        assert ab[0][0] == ba[0][0]
        assert ab[1] <= ab[0]
        if a != b:
            assert ab[1][0] * ba[1][0] == 0.0


class TestSamplingDistribution:
    def test_uniform_fallback(self):
        np.testing.assert_array_equal(sampling_distribution([0.2] * 5), np.full(5, 0.2))

    def test_largest_entry_wins(self):
        pi = sampling_distribution([0.1, 0.4, 0.2, 0.0])
        assert np.argmax(pi) == 1
        assert np.sum(pi == pi.max()) == 1

    def test_errors(self):
        with pytest.raises(DomainError):
            sampling_distribution([0.5])
        with pytest.raises(DomainError):
            sampling_distribution([0.5, -0.1])
        with pytest.raises(DomainError):
            sampling_distribution([0.5, math.inf])

    def test_center_constant(self):
        assert SIGMOID_CENTER == pytest.approx(1.2816, abs=1e-4)

    def test_top_decile_oracle(self):
        """The frozen oracle equals the quadrature of the sigmoid against the normal density."""
        z90 = norm.ppf(0.9)
        w = lambda z: expit(4.0 * (z - SIGMOID_CENTER)) * norm.pdf(z)  # noqa: E731
        top = integrate.quad(w, z90, np.inf)[0]
        total = integrate.quad(w, -np.inf, np.inf)[0]
        assert top / total == pytest.approx(TOP_DECILE_SHARE_K4, abs=5e-6)

    def test_top_decile_share_near_oracle(self):
        rng = np.random.default_rng(11)
        shares = []
        for _ in range(20):
            lp = rng.standard_normal(1000)
            pi = sampling_distribution(lp - lp.min())
            shares.append(np.sort(pi)[-100:].sum())
        assert np.mean(shares) == pytest.approx(TOP_DECILE_SHARE_K4, abs=0.02)

    @settings(max_examples=50)
    @given(st.lists(st.floats(0, 10, allow_subnormal=False), min_size=2, max_size=30),
           st.randoms(use_true_random=False))
    def test_properties(self, values, rnd):
        lp = np.array(values)
        pi = sampling_distribution(lp)
        assert abs(pi.sum() - 1.0) < 1e-9
        assert np.all(pi > 0)
        order = np.argsort(lp, kind="stable")
        assert np.all(np.diff(pi[order]) >= -1e-15)
        perm = list(range(lp.size))
        rnd.shuffle(perm)
        assert np.array_equal(sampling_distribution(lp[perm]), pi[perm])

    def test_score_bundle(self):
        s = LpState([0.2, 0.1, 0.0], [0.1, 0.2, 0.0], [True, True, False])
        bi = score(s)
        uni = score(s, bidirectional=False)
        np.testing.assert_array_equal(bi.lp_bidirectional, uni.lp_bidirectional)
        assert bi.sampling_probability[0] == pytest.approx(bi.sampling_probability[1])
        assert uni.sampling_probability[0] > uni.sampling_probability[1]
