import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import binary_mi, grid_oracle_common, hb, random_degraded_binary, random_stochastic
from secbroadcast.bounds import (
    AuxiliarySpec, common_capacity_reversely_degraded, common_rate_lower, common_rate_upper, genie_collapse,
    no_secrecy_common_capacity, single_codebook_rate, sum_capacity_reversely_degraded,
)
from secbroadcast.channels import (
    Dmc, ParallelChannel, ParallelChannelSet, bsc, conditional_mutual_information, mutual_information,
)
from secbroadcast.errors import PreconditionError, SizeError, SpecError

BASE = float(hb(0.2) - hb(0.1))  # 0.17530 nats


def one(rx, eve, order=None):
    return ParallelChannelSet((ParallelChannel(tuple(rx), eve, order),))


def two_user_crossed():
    """User 0 strong on channel 0, user 1 strong on channel 1."""
    c0 = ParallelChannel((bsc(0.05), bsc(0.25)), bsc(0.15), (0, "e", 1))
    c1 = ParallelChannel((bsc(0.25), bsc(0.05)), bsc(0.15), (1, "e", 0))
    return ParallelChannelSet((c0, c1))


def eve_wins_for_one_user():
    """Eavesdropper beats user 1 only on channel 0; single codebook pays for it."""
    c0 = ParallelChannel((bsc(0.0), bsc(0.3)), bsc(0.1), (0, "e", 1))
    c1 = ParallelChannel((bsc(0.3), bsc(0.0)), bsc(0.1), (1, "e", 0))
    return ParallelChannelSet((c0, c1))


def blahut_arimoto(W, iters=20000):
    W = np.asarray(W, dtype=float)
    p = np.full(W.shape[0], 1.0 / W.shape[0])
    for _ in range(iters):
        q = p @ W
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.where(W > 0, W * np.log(W / q), 0.0).sum(axis=1)
        p = p * np.exp(d)
        p /= p.sum()
    q = p @ W
    with np.errstate(divide="ignore", invalid="ignore"):
        return float((p[:, None] * np.where(W > 0, W * np.log(W / q), 0.0)).sum())


class TestLower:
    def test_identical_eavesdropper(self):
        s = one([bsc(0.2), bsc(0.2)], bsc(0.2))
        assert common_rate_lower(s).value == pytest.approx(0.0, abs=1e-12)

    def test_single_bsc_pair(self):
        a = np.linspace(0, 1, 1001)
        oracle = float(np.max(binary_mi(bsc(0.1).matrix, a) - binary_mi(bsc(0.2).matrix, a)))
        assert oracle == pytest.approx(0.1753, abs=1e-4)
        r = common_rate_lower(one([bsc(0.1)], bsc(0.2)))
        assert r.bound_kind == "lower"
        assert r.value == pytest.approx(oracle, abs=1e-9)
        assert r.argmax["input_laws"][0] == pytest.approx([0.5, 0.5], abs=1e-4)
        assert r.solver_diag["certified"] is False

    def test_crossed_instance_matches_capacity(self):
        s = two_user_crossed()
        lo = common_rate_lower(s).value
        assert lo == pytest.approx(common_capacity_reversely_degraded(s).value, abs=1e-8)
        assert lo > 0.1

    def test_active_sets_follow_positive_brackets(self):
        r = common_rate_lower(two_user_crossed())
        assert r.argmax["active_sets"] == [[0], [1]]

    def test_aux_mismatch(self):
        s = one([bsc(0.1)], bsc(0.2))
        with pytest.raises(SpecError):
            common_rate_lower(s, AuxiliarySpec((3,), ("identity",)))
        with pytest.raises(SpecError):
            common_rate_lower(s, AuxiliarySpec((2, 2), ("identity", "identity")))
        with pytest.raises(SpecError):
            AuxiliarySpec((17,), ("general",))

    def test_prefix_map_helps_when_eve_is_noisier_only_in_part(self):
        # Receiver and eavesdropper share a clean symbol; a stochastic prefix can only help.
        W = Dmc([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        E = Dmc([[1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
        s = one([W], E)
        ident = common_rate_lower(s).value
        gen = common_rate_lower(s, AuxiliarySpec((3,), ("general",)), seed=1)
        assert gen.value >= ident - 1e-9
        assert np.allclose(np.sum(gen.argmax["prefix_maps"][0], axis=1), 1.0)


class TestUpper:
    def test_identical_marginals(self):
        s = one([bsc(0.2)], bsc(0.2))
        assert common_rate_upper(s).value == pytest.approx(0.0, abs=1e-12)

    def test_degraded_instance_equals_capacity(self):
        s = two_user_crossed()
        up = common_rate_upper(s)
        assert up.solver_diag["heuristic"] is False
        assert up.value == pytest.approx(common_capacity_reversely_degraded(s).value, abs=1e-8)

    def test_sandwich_on_random_generic_pairs(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            s = one([Dmc(random_stochastic(rng, 2, 2))], Dmc(random_stochastic(rng, 2, 2)))
            lo = common_rate_lower(s, restarts=4).value
            up = common_rate_upper(s, restarts=4).value
            assert lo <= up + 1e-6

    def test_non_degraded_is_flagged_heuristic(self):
        a = Dmc([[0.9, 0.1], [0.3, 0.7]])
        e = Dmc([[0.6, 0.4], [0.05, 0.95]])
        r = common_rate_upper(one([a], e))
        assert r.solver_diag["heuristic"] is True
        assert r.solver_diag["free_pairs"] == [[0, 0]]
        # every iterate is itself an upper bound, and the search never goes up
        hist = r.solver_diag["outer_history"]
        assert r.value == pytest.approx(min(hist))
        assert r.value >= common_rate_lower(one([a], e)).value - 1e-6


class TestCapacity:
    def test_single_degraded_pair(self):
        r = common_capacity_reversely_degraded(one([bsc(0.1)], bsc(0.2), (0, "e")))
        assert r.bound_kind == "exact"
        assert r.value == pytest.approx(BASE, abs=1e-9)
        assert r.solver_diag["witness_upper"] == pytest.approx(r.solver_diag["witness_lower"], abs=1e-10)

    def test_eavesdropper_strongest(self):
        c = ParallelChannel((bsc(0.2), bsc(0.3)), bsc(0.1), ("e", 0, 1))
        s = ParallelChannelSet((c, c))
        assert common_capacity_reversely_degraded(s).value == 0.0

    def test_missing_order(self):
        s = one([Dmc([[0.9, 0.1], [0.3, 0.7]])], Dmc([[0.6, 0.4], [0.05, 0.95]]))
        with pytest.raises(PreconditionError):
            common_capacity_reversely_degraded(s)
        with pytest.raises(PreconditionError):
            sum_capacity_reversely_degraded(s)

    def test_symmetric_two_channel_grid(self):
        s = two_user_crossed()
        oracle, _ = grid_oracle_common(s, step=1e-2)
        r = common_capacity_reversely_degraded(s)
        assert r.value == pytest.approx(oracle, abs=1e-6)
        # symmetric: optimum is each user's single good channel at uniform input
        assert r.value == pytest.approx(float(hb(0.15) - hb(0.05)), abs=1e-8)


class TestComparisonRates:
    def test_no_secrecy_single_channel_is_shannon_capacity(self):
        W = np.array([[0.8, 0.15, 0.05], [0.1, 0.2, 0.7]])
        r = no_secrecy_common_capacity(one([Dmc(W)], Dmc(W)))
        assert r.value == pytest.approx(blahut_arimoto(W), abs=1e-8)

    def test_noiseless(self):
        c = ParallelChannel((Dmc(np.eye(2)),) * 3, bsc(0.5))
        s = ParallelChannelSet((c, c))
        assert no_secrecy_common_capacity(s).value == pytest.approx(2 * math.log(2), abs=1e-10)

    def test_no_secrecy_dominates(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            s = random_degraded_binary(rng, 2, 2)
            assert no_secrecy_common_capacity(s, restarts=5).value >= \
                common_capacity_reversely_degraded(s, restarts=5).value - 1e-9

    def test_single_codebook_equal_when_eve_weakest(self):
        c0 = ParallelChannel((bsc(0.05), bsc(0.1)), bsc(0.3), (0, 1, "e"))
        c1 = ParallelChannel((bsc(0.12), bsc(0.02)), bsc(0.25), (1, 0, "e"))
        s = ParallelChannelSet((c0, c1))
        assert single_codebook_rate(s).value == pytest.approx(common_capacity_reversely_degraded(s).value, abs=1e-6)

    def test_single_codebook_strictly_below(self):
        s = eve_wins_for_one_user()
        sc = single_codebook_rate(s).value
        cap = common_capacity_reversely_degraded(s).value
        assert sc < cap - 0.01

    def test_single_codebook_zero_when_receivers_are_eve(self):
        c = ParallelChannel((bsc(0.2), bsc(0.2)), bsc(0.2))
        assert single_codebook_rate(ParallelChannelSet((c, c))).value == pytest.approx(0.0, abs=1e-12)

    def test_single_codebook_size_limit(self):
        W = Dmc(np.full((5, 2), 0.5))
        c = ParallelChannel((W,), W)
        with pytest.raises(SizeError):
            single_codebook_rate(ParallelChannelSet((c, c, c)))


class TestSumCapacity:
    def test_k1_equals_common(self):
        s = ParallelChannelSet((ParallelChannel((bsc(0.1),), bsc(0.2), (0, "e")),
                                ParallelChannel((bsc(0.3),), bsc(0.05), ("e", 0))))
        assert sum_capacity_reversely_degraded(s).value == pytest.approx(
            common_capacity_reversely_degraded(s).value, abs=1e-9)

    def test_eve_strongest(self):
        c = ParallelChannel((bsc(0.2),), bsc(0.1), ("e", 0))
        assert sum_capacity_reversely_degraded(ParallelChannelSet((c, c))).value == 0.0

    def test_two_channel_per_channel_oracle(self):
        s = two_user_crossed()
        a = np.linspace(0, 1, 1001)
        oracle = sum(float(np.max(binary_mi(bsc(0.05).matrix, a) - binary_mi(bsc(0.15).matrix, a)))
                     for _ in range(2))
        r = sum_capacity_reversely_degraded(s)
        assert r.value == pytest.approx(oracle, abs=1e-7)
        assert r.argmax["served_user"] == [0, 1]


class TestProperties:
    def test_clipped_difference_equals_coupling_form(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            s = random_degraded_binary(rng, 2, 2)
            for c in s.channels:
                p = rng.dirichlet(np.ones(2))
                for i in range(2):
                    J = c.user_eve_coupling(i)
                    cmi = conditional_mutual_information(J, p)
                    diff = mutual_information(c.receivers[i], p) - mutual_information(c.eavesdropper, p)
                    assert cmi == pytest.approx(max(diff, 0.0), abs=1e-10)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10 ** 6))
    def test_sandwich_and_sum_dominance(self, seed):
        s = random_degraded_binary(np.random.default_rng(seed), 2, 2)
        lo = common_rate_lower(s, restarts=5).value
        up = common_rate_upper(s, restarts=5).value
        cap = common_capacity_reversely_degraded(s, restarts=5).value
        assert lo <= up + 1e-6
        assert up == pytest.approx(lo, abs=1e-6)
        assert cap == pytest.approx(lo, abs=1e-6)
        assert sum_capacity_reversely_degraded(s, restarts=5).value >= cap - 1e-9

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10 ** 6))
    def test_monotonicity(self, seed):
        rng = np.random.default_rng(seed)
        s = random_degraded_binary(rng, 2, 2)
        full = common_capacity_reversely_degraded(s, restarts=5).value
        for u in range(2):
            assert common_capacity_reversely_degraded(s.drop_user(u), restarts=5).value >= full - 1e-9
        first = ParallelChannelSet(s.channels[:1])
        assert common_capacity_reversely_degraded(first, restarts=5).value <= full + 1e-9
        assert sum_capacity_reversely_degraded(first, restarts=5).value <= \
            sum_capacity_reversely_degraded(s, restarts=5).value + 1e-9

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10 ** 6))
    def test_genie_collapse_equals_sum_capacity(self, seed):
        s = random_degraded_binary(np.random.default_rng(seed), 3, 2)
        g = genie_collapse(s)
        assert g.K == 1
        assert common_capacity_reversely_degraded(g).value == pytest.approx(
            sum_capacity_reversely_degraded(s).value, abs=1e-9)

    def test_report_round_trip(self):
        from secbroadcast.report import RateReport
        r = common_capacity_reversely_degraded(two_user_crossed())
        d = r.to_dict("bits")
        assert d["value"] == pytest.approx(r.value / math.log(2))
        back = RateReport.from_dict(d)
        assert back.value == pytest.approx(r.value, abs=1e-15)
        assert back.solver_diag["witness_upper"] == pytest.approx(r.solver_diag["witness_upper"], abs=1e-15)
