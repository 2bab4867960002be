"""Secrecy bounds and capacities for parallel broadcast channels.

All operations return a RateReport whose value is in nats per channel use.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog, minimize_scalar

from .channels import (
    EAVESDROPPER, MAX_ALPHABET, ZERO, ParallelChannel, ParallelChannelSet,
    degraded_coupling, independent_coupling, is_degraded, mi_channel_grad,
)
from .errors import PreconditionError, SizeError, SpecError
from .report import RateReport
from .simplex import MaxMinProblem, Term, project_simplex, simplex_grid, solve

RESTARTS = 20
MAX_JOINT_INPUT = 64


@dataclass(frozen=True)
class AuxiliarySpec:
    """Per-channel auxiliary alphabet size and mode ('identity' or 'general')."""

    sizes: tuple
    modes: tuple

    def __post_init__(self):
        if len(self.sizes) != len(self.modes):
            raise SpecError("aux sizes and modes must have equal length")
        for s, m in zip(self.sizes, self.modes):
            if m not in ("identity", "general"):
                raise SpecError(f"unknown auxiliary mode {m!r}")
            if not 1 <= int(s) <= MAX_ALPHABET:
                raise SpecError(f"auxiliary alphabet size {s} outside 1..{MAX_ALPHABET}")

    @classmethod
    def identity(cls, chans: ParallelChannelSet) -> "AuxiliarySpec":
        return cls(tuple(c.n_in for c in chans.channels), ("identity",) * chans.M)

    def check(self, chans: ParallelChannelSet) -> None:
        if len(self.sizes) != chans.M:
            raise SpecError(f"aux describes {len(self.sizes)} channels, instance has {chans.M}")
        for j, (s, m) in enumerate(zip(self.sizes, self.modes)):
            if m == "identity" and s != chans.channels[j].n_in:
                raise SpecError(f"identity aux on channel {j} needs size {chans.channels[j].n_in}")


def _meta(op: str, chans: ParallelChannelSet, **kw) -> dict:
    return {"operation": op, "K": chans.K, "M": chans.M, "units": "nats", **kw}


def _laws(point) -> list:
    return [np.asarray(p).tolist() for p in point]


def _user_precedes_eve(c: ParallelChannel, i: int) -> bool:
    return c.rank(i) < c.rank(EAVESDROPPER)


def _require_order(chans: ParallelChannelSet, what: str) -> None:
    missing = [j for j, c in enumerate(chans.channels) if c.order is None]
    if missing:
        raise PreconditionError(f"{what} needs a degradation order on every channel; missing on {missing}")


# ------------------------------------------------------------------ lower bound

def _lower_problem(chans: ParallelChannelSet, fs) -> MaxMinProblem:
    terms = []
    for i in range(chans.K):
        row = []
        for j, c in enumerate(chans.channels):
            f = fs[j]
            row.append(Term(f @ c.receivers[i].matrix, f @ c.eavesdropper.matrix, clip=True))
        terms.append(row)
    return MaxMinProblem([f.shape[0] for f in fs], terms)


def _prefix_objective(chans, fs, ps):
    """Exact Eq.-4 objective at (p, f) and its supergradient in each f_j."""
    K, M = chans.K, chans.M
    g = np.zeros((K, M))
    grads = np.empty((K, M), dtype=object)
    for j, c in enumerate(chans.channels):
        We = c.eavesdropper.matrix
        ve, dve = mi_channel_grad(fs[j] @ We, ps[j])
        ge = dve @ We.T
        for i in range(K):
            Wi = c.receivers[i].matrix
            vi, dvi = mi_channel_grad(fs[j] @ Wi, ps[j])
            g[i, j] = vi - ve
            grads[i, j] = dvi @ Wi.T - ge
    S = np.maximum(g, 0.0).sum(axis=1)
    F = S.min()
    w = (S <= F + 1e-9).astype(float)
    w /= w.sum()
    out = [np.zeros_like(f) for f in fs]
    for i in range(K):
        for j in range(M):
            if g[i, j] > 0:
                out[j] += w[i] * grads[i, j]
    return F, out


def _ascend_maps(chans, fs, ps, free, iters: int = 200):
    fs = [f.copy() for f in fs]
    F, G = _prefix_objective(chans, fs, ps)
    eta = 1.0
    for _ in range(iters):
        while eta > 1e-12:
            trial = [project_simplex(f + eta * g) if free[j] else f for j, (f, g) in enumerate(zip(fs, G))]
            step2 = sum(float(np.sum((t - f) ** 2)) for t, f in zip(trial, fs))
            if step2 == 0:
                return fs, F
            Ft, Gt = _prefix_objective(chans, trial, ps)
            if Ft >= F + 1e-4 * step2 / eta:
                break
            eta *= 0.5
        else:
            break
        if np.sqrt(step2) / eta < 1e-8:
            fs, F = trial, Ft
            break
        fs, F, G = trial, Ft, Gt
        eta = min(2 * eta, 1e3)
    return fs, F


def common_rate_lower(chans: ParallelChannelSet, aux: AuxiliarySpec | None = None,
                      restarts: int = RESTARTS, seed: int = 0, rounds: int = 8) -> RateReport:
    """Achievable common-message secrecy rate with per-channel prefix maps."""
    aux = aux or AuxiliarySpec.identity(chans)
    aux.check(chans)
    free = [m == "general" for m in aux.modes]
    fs = []
    for j, c in enumerate(chans.channels):
        n, s = c.n_in, aux.sizes[j]
        if not free[j]:
            fs.append(np.eye(n))
            continue
        rng = np.random.default_rng([seed, 1000 + j])
        f = rng.dirichlet(np.ones(n), size=s)
        f[: min(s, n)] = np.eye(n)[: min(s, n)]
        fs.append(f)
    small = all(f.shape[0] <= 3 for f in fs) and chans.M <= 2
    best = None
    warm = ()
    total_rounds = rounds if any(free) else 1
    for r in range(total_rounds):
        prob = _lower_problem(chans, fs)
        res = solve(prob, restarts=restarts if r == 0 else 5, seed=seed, extra_starts=warm, use_grid=small)
        if best is None or res.value > best[0] + 1e-12:
            best = (res.value, res.point, [f.copy() for f in fs], res.diag)
        if not any(free):
            break
        fs_new, F_new = _ascend_maps(chans, fs, res.point, free)
        warm = (res.point,)
        if F_new <= res.value + 1e-10 and r > 0:
            break
        fs = fs_new
    value, point, fs, diag = best
    # active sets S_i as the decoder would use them
    active = []
    for i in range(chans.K):
        S = []
        for j, c in enumerate(chans.channels):
            V = fs[j]
            gi = mi_channel_grad(V @ c.receivers[i].matrix, point[j])[0]
            ge = mi_channel_grad(V @ c.eavesdropper.matrix, point[j])[0]
            if gi - ge > 0:
                S.append(j)
        active.append(S)
    argmax = {"input_laws": _laws(point), "active_sets": active}
    if any(free):
        argmax["prefix_maps"] = [f.tolist() for f in fs]
    diag = dict(diag, certified=False)
    return RateReport(value, "lower", argmax, diag, _meta("common_rate_lower", chans, aux_modes=list(aux.modes)))


# ------------------------------------------------------------------ upper bound

def _pair_coupling(c: ParallelChannel, i: int):
    """Pointwise-optimal coupling when the pair is degraded either way."""
    Wi, We = c.receivers[i], c.eavesdropper
    if c.order is not None:
        return c.user_eve_coupling(i)
    D = is_degraded(Wi, We)
    if D is not None:
        return degraded_coupling(Wi, We, D)
    D = is_degraded(We, Wi)
    if D is not None:
        return degraded_coupling(We, Wi, D).swapped()
    return None


def _mi_joint(T: np.ndarray, p: np.ndarray) -> float:
    return mi_channel_grad(T.reshape(T.shape[0], -1), p)[0]


def _min_coupling(A: np.ndarray, B: np.ndarray, p: np.ndarray, T: np.ndarray, iters: int = 60) -> np.ndarray:
    """Frank-Wolfe minimization of I(X; Y,Z) over couplings of A and B."""
    nx, ny = A.shape
    nz = B.shape[1]
    # transportation constraints for one row x: row sums over z, column sums over y
    Aeq = np.zeros((ny + nz, ny * nz))
    for y in range(ny):
        Aeq[y, y * nz:(y + 1) * nz] = 1.0
    for z in range(nz):
        Aeq[ny + z, z::nz] = 1.0
    cur = _mi_joint(T, p)
    for _ in range(iters):
        _, G = mi_channel_grad(T.reshape(nx, -1), p)
        G = G.reshape(nx, ny, nz)
        S = T.copy()
        for x in range(nx):
            if p[x] <= ZERO:
                continue
            res = linprog(G[x].ravel(), A_eq=Aeq, b_eq=np.concatenate([A[x], B[x]]), bounds=(0, None), method="highs")
            if res.status == 0:
                S[x] = np.maximum(res.x.reshape(ny, nz), 0.0)
        Dir = S - T
        gap = -float(np.sum(G * Dir))
        if gap < 1e-12:
            break
        ls = minimize_scalar(lambda a: _mi_joint(T + a * Dir, p), bounds=(0.0, 1.0), method="bounded",
                             options={"xatol": 1e-10})
        a = float(ls.x)
        new = _mi_joint(T + a * Dir, p)
        if new > cur - 1e-14:
            break
        T, cur = T + a * Dir, new
    return T


def _upper_problem(chans: ParallelChannelSet, couplings) -> MaxMinProblem:
    terms = []
    for i in range(chans.K):
        row = []
        for j, c in enumerate(chans.channels):
            T = couplings[i][j]
            row.append(Term(T.reshape(T.shape[0], -1), c.eavesdropper.matrix, clip=False))
        terms.append(row)
    return MaxMinProblem([c.n_in for c in chans.channels], terms)


def _degraded_upper_problem(chans: ParallelChannelSet) -> MaxMinProblem:
    terms = []
    for i in range(chans.K):
        row = []
        for c in chans.channels:
            if _user_precedes_eve(c, i):
                J = c.user_eve_coupling(i)
                row.append(Term(J.matrix, c.eavesdropper.matrix, clip=False))
            else:
                row.append(None)  # eavesdropper degraded-stronger: I(X;Y|Z) = 0
        terms.append(row)
    return MaxMinProblem([c.n_in for c in chans.channels], terms)


def common_rate_upper(chans: ParallelChannelSet, restarts: int = RESTARTS, seed: int = 0,
                      outer_iters: int = 6) -> RateReport:
    """Coupling-minimized upper bound on the common-message secrecy capacity."""
    if chans.is_ordered:
        res = solve(_degraded_upper_problem(chans), restarts=restarts, seed=seed)
        diag = dict(res.diag, heuristic=False)
        return RateReport(res.value, "upper", {"input_laws": _laws(res.point), "coupling": "degraded"}, diag,
                          _meta("common_rate_upper", chans))
    couplings = [[None] * chans.M for _ in range(chans.K)]
    free = []
    for j, c in enumerate(chans.channels):
        for i in range(chans.K):
            J = _pair_coupling(c, i)
            if J is None:
                J = independent_coupling(c.receivers[i], c.eavesdropper)
                free.append((i, j))
            couplings[i][j] = np.array(J.tensor)
    best = None
    warm = ()
    history = []
    for t in range(outer_iters if free else 1):
        res = solve(_upper_problem(chans, couplings), restarts=restarts if t == 0 else 5, seed=seed,
                    extra_starts=warm)
        history.append(res.value)
        if best is None or res.value < best[0]:
            best = (res.value, res.point, res.diag)
        if not free or (t > 0 and history[-2] - res.value < 1e-9):
            break
        for i, j in free:
            c = chans.channels[j]
            couplings[i][j] = _min_coupling(c.receivers[i].matrix, c.eavesdropper.matrix, res.point[j],
                                            couplings[i][j])
        warm = (res.point,)
    value, point, diag = best
    diag = dict(diag, heuristic=bool(free), outer_history=history, free_pairs=[list(f) for f in free])
    return RateReport(value, "upper", {"input_laws": _laws(point), "coupling": "searched" if free else "degraded"},
                      diag, _meta("common_rate_upper", chans))


# ------------------------------------------------------------------ capacities

def _clipped_difference_problem(chans: ParallelChannelSet) -> MaxMinProblem:
    terms = []
    for i in range(chans.K):
        row = []
        for c in chans.channels:
            if _user_precedes_eve(c, i):
                row.append(Term(c.receivers[i].matrix, c.eavesdropper.matrix, clip=True))
            else:
                row.append(None)
        terms.append(row)
    return MaxMinProblem([c.n_in for c in chans.channels], terms)


def common_capacity_reversely_degraded(chans: ParallelChannelSet, restarts: int = RESTARTS,
                                       seed: int = 0) -> RateReport:
    """Common-message secrecy capacity when every channel is degraded-ordered."""
    _require_order(chans, "common_capacity_reversely_degraded")
    prob = _clipped_difference_problem(chans)
    res = solve(prob, restarts=restarts, seed=seed, use_grid=all(c.n_in <= 3 for c in chans.channels))
    # witnesses: coupling form (upper) and marginal form (lower) at the same law
    pt = [p[None, :] for p in res.point]
    w_up = float(_degraded_upper_problem(chans).value(pt)[0])
    w_lo = float(_lower_problem(chans, [np.eye(c.n_in) for c in chans.channels]).value(pt)[0])
    diag = dict(res.diag, witness_upper=w_up, witness_lower=w_lo)
    return RateReport(res.value, "exact", {"input_laws": _laws(res.point)}, diag,
                      _meta("common_capacity_reversely_degraded", chans))


def no_secrecy_common_capacity(chans: ParallelChannelSet, restarts: int = RESTARTS, seed: int = 0) -> RateReport:
    """Common-message capacity without a secrecy constraint."""
    terms = [[Term(c.receivers[i].matrix, None, clip=False) for c in chans.channels] for i in range(chans.K)]
    prob = MaxMinProblem([c.n_in for c in chans.channels], terms)
    res = solve(prob, restarts=restarts, seed=seed)
    return RateReport(res.value, "exact", {"input_laws": _laws(res.point)}, res.diag,
                      _meta("no_secrecy_common_capacity", chans))


def _kron_all(mats) -> np.ndarray:
    out = np.ones((1, 1))
    for m in mats:
        out = np.kron(out, m)
    return out


def single_codebook_rate(chans: ParallelChannelSet, restarts: int = RESTARTS, seed: int = 0) -> RateReport:
    """Rate of one joint codebook spread over all channels."""
    sizes = [c.n_in for c in chans.channels]
    N = int(np.prod(sizes))
    if N > MAX_JOINT_INPUT:
        raise SizeError(f"joint input alphabet {N} exceeds {MAX_JOINT_INPUT}")
    We = _kron_all([c.eavesdropper.matrix for c in chans.channels])
    terms = [[Term(_kron_all([c.receivers[i].matrix for c in chans.channels]), We, clip=False)]
             for i in range(chans.K)]
    prob = MaxMinProblem([N], terms)
    extra = [[np.eye(N)[0]]]
    for r in range(restarts):
        rng = np.random.default_rng([seed, 500 + r])
        extra.append([_kron_all([rng.dirichlet(np.ones(n))[None, :] for n in sizes])[0]])
    grid = N <= 4
    if grid:
        G = simplex_grid(N, 40)
        F = prob.value([G])
        for k in np.argsort(-F, kind="stable")[:3]:
            extra.append([G[k]])
    res = solve(prob, restarts=restarts, seed=seed, extra_starts=extra)
    law = np.asarray(res.point[0])
    value = res.value
    if value < 0:  # a deterministic input always achieves zero
        value, law = 0.0, np.eye(N)[0]
    diag = dict(res.diag, joint_grid=grid)
    return RateReport(value, "exact", {"joint_input_law": law.tolist(), "joint_shape": sizes}, diag,
                      _meta("single_codebook_rate", chans))


def _strongest_user(c: ParallelChannel) -> int:
    return next(o for o in c.order if o != EAVESDROPPER)


def genie_collapse(chans: ParallelChannelSet) -> ParallelChannelSet:
    """Single-user instance seeing the strongest receiver on every channel."""
    _require_order(chans, "genie_collapse")
    out = []
    for c in chans.channels:
        s = _strongest_user(c)
        order = (0, EAVESDROPPER) if _user_precedes_eve(c, s) else (EAVESDROPPER, 0)
        out.append(ParallelChannel((c.receivers[s],), c.eavesdropper, order))
    return ParallelChannelSet(tuple(out))


def sum_capacity_reversely_degraded(chans: ParallelChannelSet, restarts: int = RESTARTS,
                                    seed: int = 0) -> RateReport:
    """Secrecy sum capacity: each channel serves its strongest user."""
    _require_order(chans, "sum_capacity_reversely_degraded")
    total, laws, served, per = 0.0, [], [], []
    iters = 0
    for c in chans.channels:
        s = _strongest_user(c)
        if not _user_precedes_eve(c, s):
            laws.append(np.full(c.n_in, 1.0 / c.n_in).tolist())
            served.append(None)
            per.append(0.0)
            continue
        prob = MaxMinProblem([c.n_in], [[Term(c.receivers[s].matrix, c.eavesdropper.matrix, clip=False)]])
        res = solve(prob, restarts=restarts, seed=seed, use_grid=c.n_in <= 3)
        v = max(res.value, 0.0)
        total += v
        per.append(v)
        laws.append(np.asarray(res.point[0]).tolist())
        served.append(s)
        iters += res.diag["iterations"]
    return RateReport(total, "exact", {"input_laws": laws, "served_user": served},
                      {"iterations": iters, "restarts": restarts, "per_channel": per},
                      _meta("sum_capacity_reversely_degraded", chans))
