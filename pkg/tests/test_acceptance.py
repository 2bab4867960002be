"""The ten acceptance criteria at their stated tolerances.

Each test records one PASS/FAIL line, printed in the terminal summary.
"""
import math
import time

import numpy as np

from conftest import ACCEPTANCE_LINES
from helpers import grid_oracle_common, random_degraded_binary
from secbroadcast.bounds import common_capacity_reversely_degraded, common_rate_lower, common_rate_upper
from secbroadcast.bounds import single_codebook_rate
from secbroadcast.channels import (
    JointChannel, ParallelChannel, ParallelChannelSet, bsc, conditional_mutual_information, mutual_information,
)
from secbroadcast.cli import run
from secbroadcast.fading import FadingSpec, common_rate_fading, order_stat_check, sum_rate_bounds
from secbroadcast.gaussian import GaussianParallelSpec, gaussian_common_capacity, gaussian_sum_capacity
from secbroadcast.wiretap import SubChannel, WiretapCodeSpec, build_codebooks, exact_equivocation, simulate

LN2 = math.log(2)


def record(n: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def test_criterion_1_rayleigh_common_limit():
    t = time.perf_counter()
    r = common_rate_fading(FadingSpec(1, 1e6))
    dt = time.perf_counter() - t
    bits = r.value / LN2
    record(1, abs(bits - 0.7089) <= 0.002 and dt < 5.0, f"value={bits:.5f} bits (target 0.7089 +- 0.002), {dt:.2f} s")


def test_criterion_2_k_independence():
    v = [common_rate_fading(FadingSpec(K, 1e6)).value for K in (1, 2, 10, 50)]
    spread = max(v) - min(v)
    record(2, spread <= 1e-6, f"spread over K in {{1,2,10,50}} = {spread:.2e} nats")


def test_criterion_3_gap_contract():
    t = time.perf_counter()
    parts, ok = [], True
    for K in (2, 4, 8, 16, 32):
        b = sum_rate_bounds(FadingSpec(K, 100.0, method="monte_carlo", trials=1_000_000, seed=0))
        lim = 2 * LN2 / (K + 1) + 3 * b.gap_stderr
        z = (b.prob_eve_wins - 1 / (K + 1)) / b.prob_eve_wins_stderr
        ok &= b.gap <= lim and abs(z) <= 3
        parts.append(f"K={K}: gap={b.gap:.4f}<={lim:.4f} z={z:+.2f}")
    dt = time.perf_counter() - t
    ok &= dt < 60.0
    record(3, ok, "; ".join(parts) + f"; {dt:.1f} s")


def test_criterion_4_figure_bounds(tmp_path, capsys):
    from secbroadcast.io import read_csv
    path = tmp_path / "fig.csv"
    assert run(["fading", "figure-bounds", "--users", "64", "--no-timestamp", "-o", str(path)]) == 0
    header, rows = read_csv(path.read_text())
    K = np.array([int(r[0]) for r in rows])
    up = np.array([float(r[1]) for r in rows])
    lo = np.array([float(r[2]) for r in rows])
    rel = (up[-1] - lo[-1]) / up[-1]
    ok = (header[1:3] == ["upper_nats", "lower_nats"] and K.tolist() == list(range(1, 65))
          and np.all(np.diff(up) >= 0) and np.all(np.diff(lo) >= 0) and np.all(lo <= up) and rel < 0.02)
    record(4, bool(ok), f"64 rows, monotone, lower<=upper, relative gap at K=64 = {rel:.4%}")


def test_criterion_5_degraded_exactness():
    rng = np.random.default_rng(20240)
    worst_gap = worst_oracle = 0.0
    for t in range(100):
        K, M = 1 + t % 2, 1 + (t // 2) % 2
        s = random_degraded_binary(rng, K, M)
        lo = common_rate_lower(s).value
        up = common_rate_upper(s).value
        oracle, _ = grid_oracle_common(s, step=1e-3)
        worst_gap = max(worst_gap, up - lo)
        worst_oracle = max(worst_oracle, abs(up - oracle), abs(lo - oracle))
    record(5, worst_gap <= 1e-5 and worst_oracle <= 1e-4,
           f"max(upper-lower)={worst_gap:.2e}, max |bound-grid|={worst_oracle:.2e} over 100 instances")


def test_criterion_6_single_codebook_suboptimal():
    # eavesdropper beats user 1 only on channel 0 and user 0 only on channel 1
    c0 = ParallelChannel((bsc(0.0), bsc(0.3)), bsc(0.1), (0, "e", 1))
    c1 = ParallelChannel((bsc(0.3), bsc(0.0)), bsc(0.1), (1, "e", 0))
    s = ParallelChannelSet((c0, c1))
    sc = single_codebook_rate(s).value
    cap = common_capacity_reversely_degraded(s).value
    record(6, sc < cap - 0.01, f"single codebook {sc:.4f} < capacity {cap:.4f} - 0.01")


def test_criterion_7_gaussian_reductions():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(50):
        P = float(10 ** rng.uniform(-2, 4))
        a, b = (float(x) for x in 10 ** rng.uniform(-1, 1, size=2))
        ref = max(0.0, 0.5 * (math.log1p(P / a) - math.log1p(P / b)))
        worst = max(worst, abs(gaussian_common_capacity(GaussianParallelSpec([[a]], [b], P)).value - ref))
    worst_sum = 0.0
    for _ in range(10):
        s2 = 10 ** rng.uniform(-1, 0.5, size=(2, 2))
        s2e = 10 ** rng.uniform(0, 1, size=2)
        P = float(10 ** rng.uniform(-1, 1.5))
        a = s2.min(axis=0)
        g = np.linspace(0, P, 200_001)
        oracle = np.max(0.5 * np.maximum(np.log1p(g / a[0]) - np.log1p(g / s2e[0]), 0)
                        + 0.5 * np.maximum(np.log1p((P - g) / a[1]) - np.log1p((P - g) / s2e[1]), 0))
        worst_sum = max(worst_sum, abs(gaussian_sum_capacity(GaussianParallelSpec(s2, s2e, P)).value - oracle))
    record(7, worst <= 1e-9 and worst_sum <= 1e-5,
           f"K=M=1 max err {worst:.1e} (50 triples); sum vs grid max err {worst_sum:.1e} (10 instances)")


def test_criterion_8_wiretap_secrecy_behavior():
    ch = (SubChannel((bsc(0.05),), bsc(0.3), [0.5, 0.5]),)
    spec = WiretapCodeSpec(n=10, rate=LN2 / 10, channels=ch, seed=0)
    R = spec.rate
    books = build_codebooks(spec)
    design = exact_equivocation(books).joint_leakage
    control = exact_equivocation(build_codebooks(spec.replace(bin_sizes=(1,)))).joint_leakage
    err = simulate(books, 10_000, mode="ml").error_rate
    parts = {"design leakage < 0.1R": design < 0.1 * R, "Q=1 leakage > 0.5R": control > 0.5 * R,
             "ML error < 0.15": err < 0.15}
    detail = (f"Q={spec.bin_counts[0]}: leakage={design / R:.3f}R; Q=1: leakage={control / R:.3f}R; "
              f"error={err:.4f}; failed parts: {[k for k, v in parts.items() if not v] or 'none'}")
    record(8, all(parts.values()), detail)


def test_criterion_9_property_suites():
    rng = np.random.default_rng(99)
    concave_ok = True
    for _ in range(500):
        nx, ny, nz = rng.integers(2, 4, size=3)
        J = JointChannel(rng.dirichlet(np.ones(ny * nz), size=nx).reshape(nx, ny, nz))
        p0, p1 = rng.dirichlet(np.ones(nx)), rng.dirichlet(np.ones(nx))
        lam = rng.uniform()
        mid = conditional_mutual_information(J, lam * p0 + (1 - lam) * p1)
        ends = lam * conditional_mutual_information(J, p0) + (1 - lam) * conditional_mutual_information(J, p1)
        concave_ok &= bool(mid >= ends - 1e-12)
    worst_coupling = 0.0
    for _ in range(100):
        s = random_degraded_binary(rng, 2, 2)
        for c in s.channels:
            p = rng.dirichlet(np.ones(2))
            for i in range(2):
                diff = mutual_information(c.receivers[i], p) - mutual_information(c.eavesdropper, p)
                worst_coupling = max(worst_coupling, abs(conditional_mutual_information(c.user_eve_coupling(i), p) - max(diff, 0)))
    r = order_stat_check(2, 400_000, 0)
    ok = concave_ok and worst_coupling <= 1e-10 and r.bound_holds and r.decomposition_holds
    record(9, ok, f"concavity 500/500={concave_ok}; coupling identity max err {worst_coupling:.1e}; "
                  f"cond. mean {r.conditional_mean:.4f}<=2ln2: {r.bound_holds}; decomposition p-values "
                  f"{r.increment_ks_pvalue:.3f}/{r.increment_independence_pvalue:.3f}/{r.decomposition_ks_pvalue:.3f}")


WIRETAP_DOC = ('{"channels": [{"receivers": [[[0.95, 0.05], [0.05, 0.95]]], '
               '"eavesdropper": [[0.7, 0.3], [0.3, 0.7]], "input_law": [0.5, 0.5]}]}')


def test_criterion_10_determinism(tmp_path, capsys):
    wt = tmp_path / "wiretap.json"
    wt.write_text(WIRETAP_DOC)
    commands = {
        "simulate wiretap": ["simulate", "wiretap", "-i", str(wt), "--n", "8", "10", "--rate", "0.0866",
                             "--trials", "3000", "--seed", "5"],
        "fading common": ["fading", "common", "--users", "4", "--snr", "100", "--method", "monte_carlo",
                          "--trials", "140000", "--seed", "5", "--format", "csv"],
        "fading sum-bounds": ["fading", "sum-bounds", "--users", "2", "8", "--snr", "100", "--method",
                              "monte_carlo", "--trials", "140000", "--seed", "5"],
        "fading figure-bounds": ["fading", "figure-bounds", "--users", "8", "--seed", "5"],
        "fading collusion": ["fading", "collusion", "--users", "4", "--snr", "100", "--method", "monte_carlo",
                             "--trials", "20000", "--seed", "5", "--max-colluders", "5"],
    }
    bad = []
    for name, argv in commands.items():
        outs = []
        for k, workers in enumerate(("1", "1", "4")):
            path = tmp_path / f"out{k}.csv"
            assert run(argv + ["--workers", workers, "--no-timestamp", "-o", str(path)]) == 0
            outs.append(path.read_bytes())
        if not outs[0] == outs[1] == outs[2]:
            bad.append(name)
    capsys.readouterr()
    record(10, not bad, f"{len(commands)} stochastic subcommands byte-identical (2 runs, workers 1 and 4); "
                        f"mismatches: {bad or 'none'}")
