"""Parallel Gaussian wiretap broadcast: common-message and sum capacities.

Real-valued channel convention, rates carry the 1/2 factor.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog, minimize

from .errors import DomainError, SpecError
from .report import RateReport

FEAS_TOL = 1e-9
CONVENTION = "real channel, 0.5*ln(1+snr)"


def gaussian_wiretap_rate(P_j: float, sigma2_i: float, sigma2_e: float) -> float:
    """Secrecy capacity of a scalar Gaussian wiretap channel in nats."""
    if P_j < 0:
        raise DomainError(f"power must be nonnegative, got {P_j}")
    if sigma2_i <= 0 or sigma2_e <= 0:
        raise DomainError("noise variances must be positive")
    if sigma2_i >= sigma2_e:
        return 0.0
    return max(0.0, 0.5 * float(np.log1p(P_j / sigma2_i) - np.log1p(P_j / sigma2_e)))


def _rates(P: np.ndarray, s2: np.ndarray, s2e: np.ndarray) -> np.ndarray:
    # s2: (K, M), P: (..., M) -> (..., K, M)
    P = np.asarray(P)[..., None, :]
    r = 0.5 * (np.log1p(P / s2) - np.log1p(P / s2e))
    return np.where(s2 < s2e, np.maximum(r, 0.0), 0.0)


def _rate_slopes(P: np.ndarray, s2: np.ndarray, s2e: np.ndarray) -> np.ndarray:
    P = np.asarray(P)[..., None, :]
    d = 0.5 * (1.0 / (s2 + P) - 1.0 / (s2e + P))
    return np.where(s2 < s2e, d, 0.0)


@dataclass(frozen=True, eq=False)
class GaussianParallelSpec:
    sigma2: np.ndarray
    sigma2_e: np.ndarray
    P: float

    def __post_init__(self):
        s2 = np.atleast_2d(np.array(self.sigma2, dtype=float))
        s2e = np.array(self.sigma2_e, dtype=float).reshape(-1)
        if s2.shape[1] != s2e.size:
            raise SpecError(f"sigma2 has {s2.shape[1]} channels, sigma2_e has {s2e.size}")
        if np.any(s2 <= 0) or np.any(s2e <= 0) or not (np.all(np.isfinite(s2)) and np.all(np.isfinite(s2e))):
            raise SpecError("noise variances must be positive and finite")
        if not np.isfinite(self.P) or self.P < 0:
            raise SpecError("total power must be a nonnegative number")
        object.__setattr__(self, "sigma2", s2)
        object.__setattr__(self, "sigma2_e", s2e)
        object.__setattr__(self, "P", float(self.P))

    @property
    def K(self) -> int:
        return self.sigma2.shape[0]

    @property
    def M(self) -> int:
        return self.sigma2.shape[1]

    def with_power(self, P: float) -> "GaussianParallelSpec":
        return GaussianParallelSpec(self.sigma2, self.sigma2_e, P)

    def to_dict(self) -> dict:
        return {"sigma2": self.sigma2.tolist(), "sigma2_e": self.sigma2_e.tolist(), "P": self.P}

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianParallelSpec":
        return cls(d["sigma2"], d["sigma2_e"], d["P"])


@dataclass(frozen=True, eq=False)
class PowerAllocation:
    powers: np.ndarray

    def __post_init__(self):
        p = np.array(self.powers, dtype=float).reshape(-1)
        if np.any(p < 0):
            raise SpecError("allocated powers must be nonnegative")
        object.__setattr__(self, "powers", p)

    def feasible(self, P: float) -> bool:
        return float(self.powers.sum()) <= P + FEAS_TOL

    def to_list(self) -> list:
        return self.powers.tolist()


def project_power(v: np.ndarray, P: float) -> np.ndarray:
    """Project onto {x >= 0, sum x = P} by bisection on the shift."""
    v = np.asarray(v, dtype=float)
    lo, hi = v.min() - P / v.size - 1.0, v.max()
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.maximum(v - mid, 0.0).sum() > P:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-16 * max(1.0, abs(mid)):
            break
    x = np.maximum(v - 0.5 * (lo + hi), 0.0)
    s = x.sum()
    return x * (P / s) if s > 0 else np.full(v.size, P / v.size)


def _meta(op: str, spec: GaussianParallelSpec) -> dict:
    return {"operation": op, "K": spec.K, "M": spec.M, "P": spec.P, "units": "nats", "convention": CONVENTION}


def _lagrangian_waterfill(a: np.ndarray, b: np.ndarray, P: float):
    """Maximize sum_j 0.5 ln((1+p_j/a_j)/(1+p_j/b_j)) subject to sum p_j <= P."""
    M = a.size
    live = a < b
    alloc = np.zeros(M)
    if P == 0 or not live.any():
        return alloc, 0.0, 0.0
    a_l, b_l = a[live], b[live]

    def powers(lam):
        c = (b_l - a_l) / (2.0 * lam)
        p = 0.5 * (-(a_l + b_l) + np.sqrt((b_l - a_l) ** 2 + 4.0 * c))
        return np.maximum(p, 0.0)

    slope0 = 0.5 * (1.0 / a_l - 1.0 / b_l)
    lo, hi = np.log(slope0.max()) - 80.0, np.log(slope0.max())
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        if powers(np.exp(mid)).sum() > P:
            lo = mid
        else:
            hi = mid
    lam = np.exp(0.5 * (lo + hi))
    p = powers(lam)
    p *= P / p.sum()
    alloc[live] = p
    slopes = 0.5 * (1.0 / (a_l + p) - 1.0 / (b_l + p))
    on = p > 1e-12
    resid = np.max(np.where(on, np.abs(slopes - lam), np.maximum(slopes - lam, 0.0)))
    return alloc, float(lam), float(resid)


def gaussian_sum_capacity(spec: GaussianParallelSpec) -> RateReport:
    """Each channel serves its least noisy receiver with its own wiretap code."""
    a = spec.sigma2.min(axis=0)
    b = spec.sigma2_e
    alloc, lam, resid = _lagrangian_waterfill(a, b, spec.P)
    per = [gaussian_wiretap_rate(p, ai, bi) for p, ai, bi in zip(alloc, a, b)]
    served = [int(i) if a[j] < b[j] else None for j, i in enumerate(spec.sigma2.argmin(axis=0))]
    return RateReport(
        float(sum(per)), "exact",
        {"powers": alloc.tolist(), "served_user": served},
        {"multiplier": lam, "kkt_residual": resid, "pruned": np.flatnonzero(a >= b).tolist(), "per_channel": per},
        _meta("gaussian_sum_capacity", spec),
    )


def _common_kkt(P: np.ndarray, spec: GaussianParallelSpec, S: np.ndarray) -> float:
    """Stationarity residual of the active-user weighted supergradient."""
    M = spec.M
    D = _rate_slopes(P, spec.sigma2, spec.sigma2_e)  # (K, M)
    active = S <= S.min() + 1e-8 * max(1.0, abs(S.min()))
    idx = np.flatnonzero(active)
    # variables: w (active users), nu, rho; minimize rho
    na = idx.size
    c = np.zeros(na + 2)
    c[-1] = 1.0
    A_ub, b_ub = [], []
    on = P > 1e-9 * max(spec.P, 1.0)
    for j in range(M):
        row = np.concatenate([D[idx, j], [-1.0, -1.0]])
        A_ub.append(row)               # sum w d - nu <= rho
        b_ub.append(0.0)
        if on[j]:
            A_ub.append(np.concatenate([-D[idx, j], [1.0, -1.0]]))  # nu - sum w d <= rho
            b_ub.append(0.0)
    A_eq = [np.concatenate([np.ones(na), [0.0, 0.0]])]
    bounds = [(0, None)] * na + [(None, None), (0, None)]
    res = linprog(c, A_ub=np.array(A_ub), b_ub=b_ub, A_eq=np.array(A_eq), b_eq=[1.0], bounds=bounds, method="highs")
    return float(res.x[-1]) if res.status == 0 else float("inf")


def gaussian_common_capacity(spec: GaussianParallelSpec, restarts: int = 20, seed: int = 0) -> RateReport:
    """Common-message secrecy capacity and its optimal power allocation."""
    if spec.K == 1:
        rep = gaussian_sum_capacity(spec)
        rep.metadata["operation"] = "gaussian_common_capacity"
        rep.solver_diag["method"] = "lagrangian"
        return rep
    K, M, Ptot = spec.K, spec.M, spec.P
    s2, s2e = spec.sigma2, spec.sigma2_e
    live = np.any(s2 < s2e[None, :], axis=0)
    meta = _meta("gaussian_common_capacity", spec)
    if Ptot == 0 or not live.any():
        return RateReport(0.0, "exact", {"powers": [0.0] * M}, {"pruned": list(range(M))}, meta)
    L = np.flatnonzero(live)
    s2l, s2el = s2[:, L], s2e[L]

    def sums(P):
        return _rates(P, s2l, s2el).sum(axis=-1)

    def value(P):
        return sums(P).min(axis=-1)

    starts = [np.full(L.size, Ptot / L.size)]
    for r in range(1, restarts):
        starts.append(np.random.default_rng([seed, r]).dirichlet(np.ones(L.size)) * Ptot)
    best_P, best_v, iters = None, -np.inf, 0
    for P in starts:
        v = value(P)
        eta = Ptot
        for it in range(2000):
            S = sums(P)
            w = (S <= S.min() + 1e-9).astype(float)
            w /= w.sum()
            g = w @ _rate_slopes(P, s2l, s2el)
            while eta > 1e-16 * Ptot:
                Pn = project_power(P + eta * g, Ptot)
                vn = value(Pn)
                step2 = float(np.sum((Pn - P) ** 2))
                if vn >= v + 1e-4 * step2 / eta:
                    break
                eta *= 0.5
            else:
                break
            done = np.sqrt(step2) / eta < 1e-10
            P, v = Pn, vn
            eta = min(eta * 2.0, 1e3 * Ptot)
            if done:
                break
        iters += it
        if v > best_v:
            best_P, best_v = P, v
    # epigraph polish
    z0 = np.concatenate([best_P, [best_v]])
    n = L.size
    cons = [
        {"type": "eq", "fun": lambda z: z[:n].sum() - Ptot, "jac": lambda z: np.concatenate([np.ones(n), [0.0]])},
        {"type": "ineq", "fun": lambda z: sums(np.maximum(z[:n], 0.0)) - z[n],
         "jac": lambda z: np.hstack([_rate_slopes(np.maximum(z[:n], 0.0), s2l, s2el), -np.ones((K, 1))])},
    ]
    res = minimize(lambda z: -z[n], z0, jac=lambda z: -np.eye(n + 1)[n], method="SLSQP",
                   bounds=[(0.0, Ptot)] * n + [(None, None)], constraints=cons,
                   options={"maxiter": 300, "ftol": 1e-16})
    Pp = project_power(np.maximum(res.x[:n], 0.0), Ptot)
    if value(Pp) > best_v:
        best_P, best_v = Pp, value(Pp)
    alloc = np.zeros(M)
    alloc[L] = best_P
    resid = _common_kkt(best_P, GaussianParallelSpec(s2l, s2el, Ptot), sums(best_P))
    diag = {"iterations": iters, "restarts": restarts, "kkt_residual": resid,
            "pruned": np.flatnonzero(~live).tolist(), "method": "projected-supergradient+slsqp"}
    return RateReport(float(best_v), "exact", {"powers": alloc.tolist()}, diag, meta)
