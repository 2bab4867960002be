import math
from decimal import Decimal, getcontext

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from secbroadcast.errors import DomainError, SpecError
from secbroadcast.gaussian import (
    GaussianParallelSpec, PowerAllocation, gaussian_common_capacity, gaussian_sum_capacity, gaussian_wiretap_rate,
    project_power,
)


def closed_form(P, a, b):
    return max(0.0, 0.5 * (math.log1p(P / a) - math.log1p(P / b)))


class TestScalarRate:
    def test_zero_power(self):
        assert gaussian_wiretap_rate(0.0, 1.0, 4.0) == 0.0

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0, 1e6), st.floats(0.01, 10), st.floats(0, 5))
    def test_eve_not_noisier_gives_zero(self, P, s2e, extra):
        assert gaussian_wiretap_rate(P, s2e + extra, s2e) == 0.0

    def test_high_precision_value(self):
        getcontext().prec = 40
        ref = float(Decimal(0.5) * (Decimal(11) / Decimal("3.5")).ln())
        assert ref == pytest.approx(0.5726, abs=1e-4)
        assert gaussian_wiretap_rate(10.0, 1.0, 4.0) == pytest.approx(ref, abs=1e-15)

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            gaussian_wiretap_rate(-1.0, 1.0, 2.0)
        with pytest.raises(DomainError):
            gaussian_wiretap_rate(1.0, 0.0, 2.0)

    def test_saturation(self):
        for a, b in [(1.0, 4.0), (0.3, 0.9), (2.0, 50.0)]:
            assert gaussian_wiretap_rate(1e8, a, b) == pytest.approx(0.5 * math.log(b / a), abs=1e-4)


class TestSpecTypes:
    def test_validation(self):
        with pytest.raises(SpecError):
            GaussianParallelSpec([[1.0, 2.0]], [1.0], 1.0)
        with pytest.raises(SpecError):
            GaussianParallelSpec([[0.0]], [1.0], 1.0)
        with pytest.raises(SpecError):
            GaussianParallelSpec([[1.0]], [1.0], -1.0)

    def test_round_trip(self):
        s = GaussianParallelSpec([[1, 4], [4, 1]], [2, 2], 10)
        t = GaussianParallelSpec.from_dict(s.to_dict())
        assert np.array_equal(t.sigma2, s.sigma2) and t.P == 10.0

    def test_allocation_feasibility(self):
        assert PowerAllocation(np.array([1.0, 2.0])).feasible(3.0)
        assert not PowerAllocation(np.array([1.0, 2.1])).feasible(3.0)
        with pytest.raises(SpecError):
            PowerAllocation(np.array([-1.0, 2.0]))

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-10, 10), min_size=1, max_size=6), st.floats(0.1, 20))
    def test_projection(self, v, P):
        x = project_power(np.array(v), P)
        assert x.min() >= 0 and x.sum() == pytest.approx(P, rel=1e-9)


class TestCommon:
    def test_k1_m1_reduction(self):
        rng = np.random.default_rng(2024)
        for _ in range(50):
            P = float(10 ** rng.uniform(-2, 4))
            a, b = (float(x) for x in 10 ** rng.uniform(-1, 1, size=2))
            r = gaussian_common_capacity(GaussianParallelSpec([[a]], [b], P))
            assert r.value == pytest.approx(closed_form(P, a, b), abs=1e-9)

    def test_eve_stronger_everywhere(self):
        r = gaussian_common_capacity(GaussianParallelSpec([[1, 3], [2, 5]], [0.5, 1.0], 10))
        assert r.value == 0.0 and r.argmax["powers"] == [0.0, 0.0]

    def test_symmetric_instance_grid_oracle(self):
        spec = GaussianParallelSpec([[1, 4], [4, 1]], [2, 2], 10)
        P1 = np.arange(0, 10.0 + 1e-9, 0.01)
        u0 = [closed_form(p, 1, 2) + closed_form(10 - p, 4, 2) for p in P1]
        u1 = [closed_form(p, 4, 2) + closed_form(10 - p, 1, 2) for p in P1]
        oracle = max(min(x, y) for x, y in zip(u0, u1))
        r = gaussian_common_capacity(spec)
        assert r.value == pytest.approx(oracle, abs=1e-9)
        assert r.argmax["powers"] == pytest.approx([5.0, 5.0], abs=1e-6)
        # each user gets only its good channel: one wiretap term at half power
        assert r.value == pytest.approx(0.5 * math.log(6 / 3.5), abs=1e-9)
        assert r.solver_diag["kkt_residual"] < 1e-6

    def test_asymmetric_grid_oracle(self):
        from scipy.optimize import brentq
        spec = GaussianParallelSpec([[0.5, 3.0], [2.0, 0.8]], [4.0, 6.0], 4.0)
        s0 = lambda p: closed_form(p, 0.5, 4) + closed_form(4 - p, 3, 6)  # noqa: E731
        s1 = lambda p: closed_form(p, 2, 4) + closed_form(4 - p, 0.8, 6)  # noqa: E731
        P1 = np.linspace(0, 4.0, 40001)
        F = [min(s0(p), s1(p)) for p in P1]
        k = int(np.argmax(F))
        oracle = F[k]
        # the optimum sits on the crossing of the two user sums; refine it
        lo, hi = P1[max(k - 1, 0)], P1[min(k + 1, P1.size - 1)]
        if (s0(lo) - s1(lo)) * (s0(hi) - s1(hi)) < 0:
            x = brentq(lambda p: s0(p) - s1(p), lo, hi, xtol=1e-15)
            oracle = max(oracle, min(s0(x), s1(x)))
        r = gaussian_common_capacity(spec)
        assert r.value == pytest.approx(oracle, abs=1e-9)
        assert r.solver_diag["kkt_residual"] < 1e-6

    def test_monotone_in_power(self):
        spec = GaussianParallelSpec([[0.5, 3.0, 1.0], [2.0, 0.8, 1.5]], [4.0, 6.0, 2.0], 0.0)
        prev_c = prev_s = -1.0
        for P in [0.0, 0.1, 0.5, 1, 2, 5, 10, 50, 200]:
            c = gaussian_common_capacity(spec.with_power(P)).value
            s = gaussian_sum_capacity(spec.with_power(P)).value
            assert c >= prev_c - 1e-9 and s >= prev_s - 1e-9
            assert s >= c - 1e-9
            prev_c, prev_s = c, s

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10 ** 6))
    def test_kkt_and_sum_dominance(self, seed):
        rng = np.random.default_rng(seed)
        K, M = rng.integers(2, 4), rng.integers(1, 4)
        spec = GaussianParallelSpec(10 ** rng.uniform(-1, 1, size=(K, M)), 10 ** rng.uniform(-1, 1, size=M),
                                    float(10 ** rng.uniform(-1, 2)))
        c = gaussian_common_capacity(spec)
        s = gaussian_sum_capacity(spec)
        assert s.value >= c.value - 1e-9
        assert sum(c.argmax["powers"]) <= spec.P + 1e-9
        if c.value > 0:
            assert c.solver_diag["kkt_residual"] < 1e-6


class TestSum:
    def test_m1_uses_strongest_user(self):
        spec = GaussianParallelSpec([[3.0], [0.7], [1.2]], [2.0], 5.0)
        r = gaussian_sum_capacity(spec)
        assert r.value == pytest.approx(closed_form(5.0, 0.7, 2.0), abs=1e-12)
        assert r.argmax["served_user"] == [1]

    def test_all_eve_dominated(self):
        r = gaussian_sum_capacity(GaussianParallelSpec([[3.0, 2.0]], [1.0, 1.0], 5.0))
        assert r.value == 0.0 and r.argmax["powers"] == [0.0, 0.0]

    def test_two_channel_grid(self):
        spec = GaussianParallelSpec([[1.0, 1.0]], [4.0, 9.0], 2.0)
        P1 = np.arange(0, 2.0 + 1e-12, 1e-4)
        oracle = max(closed_form(p, 1, 4) + closed_form(2 - p, 1, 9) for p in P1)
        r = gaussian_sum_capacity(spec)
        assert r.value == pytest.approx(oracle, abs=1e-5)
        assert r.value >= oracle - 1e-12
        assert r.argmax["powers"][1] > r.argmax["powers"][0]
        assert r.solver_diag["kkt_residual"] < 1e-6

    def test_dense_grid_random_m2(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            s2 = 10 ** rng.uniform(-1, 0.5, size=(2, 2))
            s2e = 10 ** rng.uniform(0, 1, size=2)
            P = float(10 ** rng.uniform(-1, 1.5))
            a = s2.min(axis=0)
            Pg = np.linspace(0, P, 100001)
            oracle = np.max(0.5 * np.maximum(np.log1p(Pg / a[0]) - np.log1p(Pg / s2e[0]), 0)
                            + 0.5 * np.maximum(np.log1p((P - Pg) / a[1]) - np.log1p((P - Pg) / s2e[1]), 0))
            assert gaussian_sum_capacity(GaussianParallelSpec(s2, s2e, P)).value == pytest.approx(oracle, abs=1e-5)
