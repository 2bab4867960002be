"""Fast-fading wiretap broadcast: common-message rate and sum-rate bounds.

Complex channel convention (no 1/2 factor). Legitimate gains |H_i|^2 are
exponential with means ``mu``; the eavesdropper gain is a sum of ``colluders``
i.i.d. exponentials of mean ``mu_e`` (a Gamma law).

Inner expectations over the eavesdropper use closed forms for a single
eavesdropper and a fixed Gauss-Legendre rule in log-coordinates otherwise.
Outer expectations use the closed-form density of the strongest user's gain
when users are identically distributed, and Monte Carlo otherwise.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import integrate, stats
from scipy.optimize import minimize_scalar
from scipy.special import digamma, exp1, gammainc, gammaincc, gammainccinv, gammaln

from .errors import DomainError, PreconditionError, SpecError
from .report import RateReport

CONVENTION = "complex channel, ln(1+snr)"
MIN_TRIALS = 10_000
CHUNK = 1 << 16
QUAD_ABS = 1e-10
SEARCH_SAMPLES = 20_000
N_CELLS = 64
N_POWERS = 121

STREAM_SUM = 0
STREAM_COMMON = 1
STREAM_SEARCH = 2
STREAM_ORDER = 3


# ------------------------------------------------------------------ specs

@dataclass(frozen=True)
class FadingSpec:
    K: int
    P: float
    mu: Optional[tuple] = None
    mu_e: float = 1.0
    colluders: int = 1
    method: str = "quadrature"
    trials: int = 100_000
    seed: Optional[int] = None
    workers: int = 1

    def __post_init__(self):
        if int(self.K) < 1:
            raise SpecError("need at least one user")
        mu = tuple(float(m) for m in (self.mu if self.mu is not None else (1.0,) * int(self.K)))
        if len(mu) != int(self.K):
            raise SpecError(f"mu has {len(mu)} entries for K={self.K} users")
        if any(not m > 0 for m in mu) or not self.mu_e > 0:
            raise SpecError("mean gains must be positive")
        if not (math.isfinite(self.P) and self.P >= 0):
            raise SpecError("SNR must be a nonnegative number")
        if int(self.colluders) < 1:
            raise SpecError("colluders must be at least 1")
        if self.method not in ("quadrature", "monte_carlo"):
            raise SpecError("method must be 'quadrature' or 'monte_carlo'")
        if self.method == "monte_carlo":
            if int(self.trials) < MIN_TRIALS:
                raise SpecError(f"monte_carlo needs at least {MIN_TRIALS} trials")
            if self.seed is None:
                raise SpecError("monte_carlo needs a seed")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "K", int(self.K))
        object.__setattr__(self, "colluders", int(self.colluders))
        object.__setattr__(self, "P", float(self.P))
        object.__setattr__(self, "trials", int(self.trials))

    @property
    def iid(self) -> bool:
        return len(set(self.mu)) == 1

    def replace(self, **kw) -> "FadingSpec":
        d = {k: getattr(self, k) for k in ("K", "P", "mu", "mu_e", "colluders", "method", "trials", "seed",
                                           "workers")}
        if "K" in kw and "mu" not in kw:
            d["mu"] = None
        d.update(kw)
        return FadingSpec(**d)

    def to_dict(self) -> dict:
        return {"K": self.K, "P": self.P, "mu": list(self.mu), "mu_e": self.mu_e, "colluders": self.colluders,
                "method": self.method, "trials": self.trials, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "FadingSpec":
        keys = ("K", "P", "mu", "mu_e", "colluders", "method", "trials", "seed")
        return cls(**{k: d[k] for k in keys if k in d and d[k] is not None})


@dataclass(frozen=True)
class QuantizationSpec:
    """Either quantization levels (first level 0) or a single threshold."""

    levels: Optional[tuple] = None
    threshold: Optional[float] = None

    def __post_init__(self):
        if (self.levels is None) == (self.threshold is None):
            raise SpecError("give exactly one of levels or threshold")
        if self.levels is not None:
            lv = tuple(float(a) for a in self.levels)
            if not 1 <= len(lv) <= 64:
                raise SpecError("between 1 and 64 levels supported")
            if lv[0] != 0.0:
                raise SpecError("the first level must be 0")
            if any(b <= a for a, b in zip(lv[:-1], lv[1:])):
                raise SpecError("levels must be strictly increasing")
            object.__setattr__(self, "levels", lv)
        elif not self.threshold >= 0:
            raise SpecError("threshold must be nonnegative")

    @classmethod
    def geometric(cls, q: int, lo: float, hi: float) -> "QuantizationSpec":
        if q < 2:
            return cls(levels=(0.0,))
        return cls(levels=(0.0,) + tuple(np.geomspace(lo, hi, q - 1)))


@dataclass(frozen=True, eq=False)
class PowerPolicy:
    """Piecewise-constant power as a function of the strongest user's gain.

    ``edges[c]`` is the left end of cell c (``edges[0] == 0``); the last cell
    is unbounded. A threshold policy is the two-cell case (0 below T).
    """

    edges: tuple
    powers: tuple
    family: str = "piecewise"

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float)
        p = np.asarray(self.powers, dtype=float)
        if e.size != p.size or e.size < 1 or e[0] != 0 or np.any(np.diff(e) <= 0):
            raise SpecError("policy edges must start at 0, increase strictly and match the powers")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise SpecError("policy powers must be finite and nonnegative")
        object.__setattr__(self, "edges", tuple(e.tolist()))
        object.__setattr__(self, "powers", tuple(p.tolist()))

    @classmethod
    def threshold(cls, T: float, level: float) -> "PowerPolicy":
        if T <= 0:
            return cls((0.0,), (level,), "threshold")
        return cls((0.0, float(T)), (0.0, level), "threshold")

    @classmethod
    def constant(cls, level: float) -> "PowerPolicy":
        return cls((0.0,), (level,), "threshold")

    def power(self, gamma) -> np.ndarray:
        idx = np.searchsorted(np.asarray(self.edges), np.asarray(gamma, dtype=float), side="right") - 1
        return np.asarray(self.powers)[np.clip(idx, 0, None)]

    def average_power(self, users: "_Users") -> float:
        return float(np.dot(users.cell_probs(self.edges), self.powers))

    def to_dict(self) -> dict:
        d = {"family": self.family, "edges": list(self.edges), "powers": list(self.powers)}
        if self.family == "threshold":
            d["threshold"] = self.edges[-1] if len(self.edges) > 1 else 0.0
            d["level"] = self.powers[-1]
        return d


# ------------------------------------------------------------------ laws

def scaled_e1(a) -> np.ndarray:
    """exp(a) * E1(a), stable for large a."""
    a = np.asarray(a, dtype=float)
    out = np.empty_like(a)
    small = a < 50.0
    with np.errstate(over="ignore", invalid="ignore"):
        out[small] = np.exp(a[small]) * exp1(a[small])
    x = a[~small]
    s, term = np.zeros_like(x), 1.0 / np.where(x > 0, x, 1.0)
    for k in range(20):
        s = s + term
        term = term * -(k + 1) / x
    out[~small] = np.where(np.isinf(x), 0.0, s)
    return out


_GL_X, _GL_W = np.polynomial.legendre.leggauss(256)


def _gl_rule(a: float, b: float, nodes=_GL_X, weights=_GL_W):
    half = 0.5 * (b - a)
    return a + half * (nodes + 1.0), half * weights


class Eavesdropper:
    """Gain law Gamma(shape=colluders, scale=mu_e)."""

    def __init__(self, colluders: int = 1, mu_e: float = 1.0):
        self.E = int(colluders)
        self.scale = float(mu_e)
        lo = math.log(self.scale) - 40.0
        hi = math.log(self.scale * float(gammainccinv(self.E, 1e-18)))
        s, ws = _gl_rule(lo, hi)
        self._x = np.exp(s)
        self._sfw = ws * self.sf(self._x) * self._x
        self._t, self._wt = _gl_rule(0.0, 45.0)
        self._cache: dict = {}

    def cdf(self, x):
        return gammainc(self.E, np.asarray(x, dtype=float) / self.scale)

    def sf(self, x):
        return gammaincc(self.E, np.asarray(x, dtype=float) / self.scale)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            lp = (self.E - 1) * np.log(x / self.scale) - x / self.scale - gammaln(self.E) - math.log(self.scale)
        return np.where(x > 0, np.exp(lp), 0.0 if self.E > 1 else 1.0 / self.scale)

    def upper_limit(self, tail: float = 1e-13) -> float:
        return self.scale * float(gammainccinv(self.E, tail))

    def mean_log(self) -> float:
        return float(digamma(self.E) + math.log(self.scale))

    def sample(self, rng, n: int) -> np.ndarray:
        if self.E == 1:
            return rng.exponential(self.scale, n)
        return rng.gamma(self.E, self.scale, n)

    def mean_log1p(self, p) -> np.ndarray:
        """E[ln(1 + G p)] for each power p."""
        p = np.asarray(p, dtype=float)
        pos = p > 0
        out = np.zeros(np.broadcast(p).shape)
        if self.E == 1:
            with np.errstate(divide="ignore"):
                a = np.where(pos, 1.0 / (self.scale * np.where(pos, p, 1.0)), np.inf)
            return np.where(pos, scaled_e1(a), 0.0)
        # integral of sf(x) / (x + 1/p) dx with x = exp(s)
        pp = p[pos]
        vals = np.empty(pp.size)
        for lo in range(0, pp.size, 2048):
            inv = 1.0 / pp[lo:lo + 2048, None]
            vals[lo:lo + 2048] = np.sum(self._sfw / (self._x[None, :] + inv), axis=1)
        out[pos] = vals
        return out

    def clipped_gain(self, g, p) -> np.ndarray:
        """E[{ln((1 + g p) / (1 + G p))}^+] elementwise over broadcast (g, p)."""
        g, p = np.broadcast_arrays(np.asarray(g, dtype=float), np.asarray(p, dtype=float))
        act = (p > 0) & (g > 0)
        out = np.zeros(g.shape)
        if not act.any():
            return out
        ga, pa = g[act], p[act]
        if self.E == 1:
            gs, q = ga / self.scale, pa * self.scale
            a = 1.0 / q
            val = np.log1p(ga * pa) - scaled_e1(a) + np.exp(-gs) * scaled_e1(gs + a)
            out[act] = np.maximum(val, 0.0)
            return out
        # integral over (0, g) of cdf(x) / (x + 1/p) dx with x = g exp(-t)
        gu, inv = np.unique(ga, return_inverse=True)
        W = self._cdf_weights(gu)  # (len(gu), nodes)
        et = np.exp(-self._t)
        vals = np.empty(ga.size)
        for lo in range(0, ga.size, 2048):
            sl = slice(lo, lo + 2048)
            x = ga[sl, None] * et[None, :]
            vals[sl] = np.sum(W[inv[sl]] / (x + 1.0 / pa[sl, None]), axis=1)
        out[act] = vals
        return out

    def _cdf_weights(self, gu: np.ndarray) -> np.ndarray:
        # the same gain nodes recur across power levels; keep the last few tables
        key = gu.tobytes()
        hit = self._cache.get(key)
        if hit is None:
            x = gu[:, None] * np.exp(-self._t)[None, :]
            hit = self._wt * self.cdf(x) * x
            if len(self._cache) >= 32:
                self._cache.pop(next(iter(self._cache)))
            self._cache[key] = hit
        return hit


class _Users:
    """Independent exponential legitimate gains with means ``mu``."""

    def __init__(self, mu: Sequence[float]):
        self.mu = np.asarray(mu, dtype=float)
        self.K = self.mu.size

    @property
    def iid(self) -> bool:
        return bool(np.all(self.mu == self.mu[0]))

    def max_cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.prod(-np.expm1(-x[..., None] / self.mu), axis=-1)

    def max_pdf(self, x):
        if not self.iid:
            raise PreconditionError("closed-form max density needs identically distributed users")
        x = np.asarray(x, dtype=float)
        m, K = self.mu[0], self.K
        return (K / m) * (-np.expm1(-x / m)) ** (K - 1) * np.exp(-x / m)

    def max_upper(self) -> float:
        return float(self.mu.max() * (math.log(self.K) + 34.0))

    def cell_probs(self, edges) -> np.ndarray:
        e = np.asarray(edges, dtype=float)
        F = self.max_cdf(e)
        return np.diff(np.concatenate([F, [1.0]]))

    def sample(self, rng, n: int) -> np.ndarray:
        return rng.exponential(1.0, (n, self.K)) * self.mu


def _chunked(seed: int, stream: int, n: int, draw, workers: int = 1):
    """Evaluate ``draw(rng, size)`` over counter-seeded chunks, in order."""
    sizes = [min(CHUNK, n - lo) for lo in range(0, n, CHUNK)]

    def job(c):
        return draw(np.random.default_rng([seed, stream, c]), sizes[c])

    if workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(job, range(len(sizes))))
    else:
        parts = [job(c) for c in range(len(sizes))]
    return [np.concatenate([p[k] for p in parts]) for k in range(len(parts[0]))]


def _sample_max_eve(spec: FadingSpec, stream: int, n: int):
    users, eve = _Users(spec.mu), Eavesdropper(spec.colluders, spec.mu_e)

    def draw(rng, size):
        return users.sample(rng, size).max(axis=1), eve.sample(rng, size)

    return _chunked(spec.seed, stream, n, draw, spec.workers)


def _meta(op: str, spec: FadingSpec, **kw) -> dict:
    return {"operation": op, "units": "nats", "convention": CONVENTION, "spec": spec.to_dict(), **kw}


# ------------------------------------------------------------------ common message

def _quad(f, a, b, points=None, limit=400):
    val, _ = integrate.quad(f, a, b, epsabs=QUAD_ABS, epsrel=1e-12, limit=limit, points=points)
    return val


def eavesdropper_mean_log1p(eve: Eavesdropper, P: float) -> float:
    """E[ln(1 + G P)] by adaptive quadrature."""
    if P == 0:
        return 0.0
    hi = eve.upper_limit()
    pts = [x for x in (1.0 / P, eve.scale * eve.E) if x < hi]
    return _quad(lambda x: math.log1p(x * P) * float(eve.pdf(x)), 0.0, hi, points=sorted(pts) or None)


def _user_threshold_rate(m: float, P: float, c: float, T: float) -> float:
    """Integral over x >= T of (ln(1 + x P) - c) exp(-x/m)/m."""
    hi = m * 40.0
    if T >= hi:
        return 0.0
    return _quad(lambda x: (math.log1p(x * P) - c) * math.exp(-x / m) / m, T, hi)


def common_rate_fading(spec: FadingSpec) -> RateReport:
    """Achievable common-message secrecy rate over i.i.d. fading states."""
    eve = Eavesdropper(spec.colluders, spec.mu_e)
    meta = _meta("common_rate_fading", spec)
    if spec.P == 0:
        return RateReport(0.0, "lower", {"threshold": None}, {"method": spec.method}, meta)
    if spec.method == "quadrature":
        c = eavesdropper_mean_log1p(eve, spec.P)
        T = math.expm1(c) / spec.P
        per = {m: _user_threshold_rate(m, spec.P, c, T) for m in sorted(set(spec.mu))}
        rates = [per[m] for m in spec.mu]
        i = int(np.argmin(rates))
        return RateReport(max(rates[i], 0.0), "lower", {"threshold": T, "binding_user": i},
                          {"method": "quadrature", "eavesdropper_term": c, "per_user": rates}, meta)
    n = spec.trials
    (he,) = _chunked(spec.seed, STREAM_COMMON, n, lambda rng, s: (eve.sample(rng, s),), spec.workers)
    le = np.log1p(he * spec.P)
    c = float(le.mean())
    rates, ses = [], []
    cache = {}
    for u, m in enumerate(spec.mu):
        if m not in cache:
            (h,) = _chunked(spec.seed, STREAM_COMMON + 100 + len(cache), n,
                            lambda rng, s, m=m: (rng.exponential(m, s),), spec.workers)
            g = np.maximum(np.log1p(h * spec.P) - c, 0.0)
            frac = float(np.mean(g > 0))
            se = math.sqrt(g.var(ddof=1) / n + frac ** 2 * le.var(ddof=1) / n)
            cache[m] = (float(g.mean()), se)
        rates.append(cache[m][0])
        ses.append(cache[m][1])
    i = int(np.argmin(rates))
    return RateReport(max(rates[i], 0.0), "lower", {"threshold": math.expm1(c) / spec.P, "binding_user": i},
                      {"method": "monte_carlo", "stderr": ses[i], "eavesdropper_term": c, "per_user": rates,
                       "trials": n, "seed": spec.seed}, meta)


def quantized_common_rate(spec: FadingSpec, quant: QuantizationSpec) -> RateReport:
    """Common-message rate after pessimistic quantization of each user's gain."""
    eve = Eavesdropper(spec.colluders, spec.mu_e)
    c = eavesdropper_mean_log1p(eve, spec.P)
    meta = _meta("quantized_common_rate", spec)
    mu = np.asarray(spec.mu)
    if quant.levels is not None:
        A = np.asarray(quant.levels)
        upper = np.concatenate([A[1:], [np.inf]])
        probs = np.exp(-A[None, :] / mu[:, None]) - np.exp(-upper[None, :] / mu[:, None])  # (K, q)
        gains = np.maximum(np.log1p(A * spec.P) - c, 0.0)
        rates = probs @ gains
        i = int(np.argmin(rates))
        return RateReport(float(rates[i]), "lower", {"levels": list(A), "binding_user": i},
                          {"eavesdropper_term": c, "per_user": rates.tolist()}, meta)
    T = float(quant.threshold)
    per = {m: _user_threshold_rate(m, spec.P, c, T) for m in sorted(set(spec.mu))}
    rates = [per[m] for m in spec.mu]
    i = int(np.argmin(rates))
    return RateReport(max(rates[i], 0.0), "lower", {"threshold": T, "binding_user": i},
                      {"eavesdropper_term": c, "per_user": rates, "optimal_threshold": math.expm1(c) / spec.P
                       if spec.P > 0 else None}, meta)


# ------------------------------------------------------------------ sum-rate bounds

class _QuadEvaluator:
    """Policy objectives by quadrature against the strongest-user density."""

    def __init__(self, users: _Users, eve: Eavesdropper, kind: str):
        self.users, self.eve, self.kind = users, eve, kind
        self.hi = users.max_upper()
        self._gx, self._gw = np.polynomial.legendre.leggauss(8)

    def psi(self, g, p):
        if self.kind == "upper":
            return self.eve.clipped_gain(g, p)
        g, p = np.broadcast_arrays(np.asarray(g, dtype=float), np.asarray(p, dtype=float))
        return np.log1p(g * p) - self.eve.mean_log1p(p)

    def _nodes(self, a: float, b: float):
        if b <= a:
            return np.zeros(0), np.zeros(0)
        width = 0.5 * float(self.users.mu.max())
        nseg = max(1, int(math.ceil((b - a) / width)))
        cuts = np.linspace(a, b, nseg + 1)
        xs, ws = [], []
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            x, w = _gl_rule(lo, hi, self._gx, self._gw)
            xs.append(x)
            ws.append(w)
        x, w = np.concatenate(xs), np.concatenate(ws)
        return x, w * self.users.max_pdf(x)

    def cells(self, edges):
        out = []
        ends = list(edges[1:]) + [self.hi]
        for a, b in zip(edges, ends):
            out.append(self._nodes(a, min(b, self.hi)))
        return out

    def objective(self, policy: PowerPolicy):
        total = 0.0
        for (x, w), p in zip(self.cells(policy.edges), policy.powers):
            if p > 0 and x.size:
                total += float(np.sum(w * self.psi(x, p)))
        return total, None

    def table(self, edges, pgrid):
        J = np.zeros((len(edges), len(pgrid)))
        for c, (x, w) in enumerate(self.cells(edges)):
            if x.size:
                J[c] = (w[:, None] * self.psi(x[:, None], np.asarray(pgrid)[None, :])).sum(axis=0)
        return J


class _SampleEvaluator:
    """Policy objectives as sample means over (H_max, H_e) draws."""

    def __init__(self, hmax: np.ndarray, he: np.ndarray, kind: str):
        self.hmax, self.he, self.kind = hmax, he, kind

    def _vals(self, g, h, p):
        v = np.log1p(g * p) - np.log1p(h * p)
        return np.maximum(v, 0.0) if self.kind == "upper" else v

    def samples(self, policy: PowerPolicy) -> np.ndarray:
        return self._vals(self.hmax, self.he, policy.power(self.hmax))

    def objective(self, policy: PowerPolicy):
        v = self.samples(policy)
        return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))

    def table(self, edges, pgrid):
        idx = np.searchsorted(np.asarray(edges), self.hmax, side="right") - 1
        J = np.zeros((len(edges), len(pgrid)))
        for k, p in enumerate(pgrid):
            J[:, k] = np.bincount(idx, weights=self._vals(self.hmax, self.he, p), minlength=len(edges))
        return J / self.hmax.size


def _threshold_search(ev, users: _Users, P: float):
    hi = float(users.mu.max()) * (math.log(users.K) + 8.0)
    grid = np.concatenate([[0.0], np.geomspace(1e-3 * users.mu.min(), hi, 60)])

    def f(T):
        T = max(float(T), 0.0)
        S = 1.0 - float(users.max_cdf(T))
        if S <= 1e-300:
            return 0.0
        return ev.objective(PowerPolicy.threshold(T, P / S))[0]

    vals = np.array([f(T) for T in grid])
    k = int(np.argmax(vals))
    bestT, bestv = grid[k], vals[k]
    if 0 < k < grid.size - 1:
        try:
            res = minimize_scalar(lambda t: -f(t), bracket=(grid[k - 1], grid[k], grid[k + 1]), method="golden",
                                  options={"xtol": 1e-6})
            if -res.fun > bestv and grid[k - 1] <= res.x <= grid[k + 1]:
                bestT, bestv = float(res.x), -float(res.fun)
        except ValueError:
            pass
    S = 1.0 - float(users.max_cdf(bestT))
    return PowerPolicy.threshold(bestT, P / S)


def _piecewise_search(ev, users: _Users, P: float):
    lo = 1e-2 * float(users.mu.min())
    hi = float(users.mu.max()) * (math.log(users.K) + 10.0)
    edges = np.concatenate([[0.0], np.geomspace(lo, hi, N_CELLS - 1)])
    w = users.cell_probs(edges)
    pgrid = np.concatenate([[0.0], np.geomspace(1e-4 * P, 1e4 * P, N_POWERS - 1)])
    J = ev.table(edges, pgrid)

    def pick(lam):
        k = np.argmax(J - lam * w[:, None] * pgrid[None, :], axis=1)
        return k, float(np.dot(w, pgrid[k]))

    lo_l, hi_l = -40.0, 20.0
    for _ in range(100):
        mid = 0.5 * (lo_l + hi_l)
        if pick(math.exp(mid))[1] > P:
            lo_l = mid
        else:
            hi_l = mid
    lam = math.exp(hi_l)
    k, _ = pick(lam)
    powers = pgrid[k].copy()
    # continuous refinement of each active cell at the same multiplier
    for c in np.flatnonzero(k > 0):
        a, b = pgrid[max(k[c] - 1, 0)], pgrid[min(k[c] + 1, pgrid.size - 1)]

        def g(p, c=c):
            return _cell_value(ev, edges, c, p) - lam * w[c] * p

        r = minimize_scalar(lambda p: -g(p), bounds=(a, b), method="bounded", options={"xatol": 1e-8 * P})
        if -r.fun > g(powers[c]):
            powers[c] = float(r.x)
    used = float(np.dot(w, powers))
    if used > P:
        powers *= P / used
    return PowerPolicy(tuple(edges), tuple(powers), "piecewise")


def _cell_value(ev, edges, c, p) -> float:
    if isinstance(ev, _QuadEvaluator):
        b = edges[c + 1] if c + 1 < len(edges) else ev.hi
        x, wt = ev._nodes(edges[c], min(b, ev.hi))
        return float(np.sum(wt * ev.psi(x, p))) if x.size else 0.0
    lo = edges[c]
    hi = edges[c + 1] if c + 1 < len(edges) else np.inf
    m = (ev.hmax >= lo) & (ev.hmax < hi)
    return float(np.sum(ev._vals(ev.hmax[m], ev.he[m], p))) / ev.hmax.size


def _search_evaluator(spec: FadingSpec, kind: str):
    users, eve = _Users(spec.mu), Eavesdropper(spec.colluders, spec.mu_e)
    if users.iid:
        return _QuadEvaluator(users, eve, kind), "quadrature"
    if spec.seed is None:
        raise PreconditionError("heterogeneous user means need monte_carlo with a seed")
    hmax, he = _sample_max_eve(spec, STREAM_SEARCH, SEARCH_SAMPLES)
    return _SampleEvaluator(hmax, he, kind), "sample-average"


def _final_evaluator(spec: FadingSpec, kind: str, samples=None):
    users, eve = _Users(spec.mu), Eavesdropper(spec.colluders, spec.mu_e)
    if spec.method == "quadrature" and users.iid:
        return _QuadEvaluator(users, eve, kind)
    if spec.seed is None:
        raise PreconditionError("heterogeneous user means need monte_carlo with a seed")
    if samples is None:
        samples = _sample_max_eve(spec, STREAM_SUM, spec.trials)
    return _SampleEvaluator(samples[0], samples[1], kind)


def _sum_bound(spec: FadingSpec, kind: str, extra_policies=(), samples=None) -> RateReport:
    users = _Users(spec.mu)
    op = "sum_rate_upper" if kind == "upper" else "sum_rate_lower"
    if spec.P == 0:
        pol = PowerPolicy.constant(0.0)
        return RateReport(0.0, kind, {"policy": pol.to_dict()}, {"certified": False}, _meta(op, spec))
    sev, search_mode = _search_evaluator(spec, kind)
    cands = [PowerPolicy.constant(spec.P), _threshold_search(sev, users, spec.P),
             _piecewise_search(sev, users, spec.P)]
    cands += [p for p in extra_policies if p.average_power(users) <= spec.P * (1 + 1e-6) + 1e-12]
    fev = _final_evaluator(spec, kind, samples)
    scored = []
    for i, pol in enumerate(cands):
        v, se = fev.objective(pol)
        scored.append((v, -i, pol, se))
    v, _, best, se = max(scored, key=lambda t: (t[0], t[1]))
    if kind == "lower" and v < 0:
        best, v, se = PowerPolicy.constant(0.0), 0.0, 0.0
    diag = {"certified": False, "search": search_mode, "family": best.family,
            "candidates": {c.family + str(i): s[0] for i, (c, s) in enumerate(zip(cands, scored))},
            "average_power": best.average_power(users),
            "method": "quadrature" if isinstance(fev, _QuadEvaluator) else "monte_carlo"}
    if se is not None:
        diag.update(stderr=se, trials=spec.trials, seed=spec.seed)
    return RateReport(max(v, 0.0), kind, {"policy": best.to_dict()}, diag, _meta(op, spec))


def _policy_from_report(rep: RateReport) -> PowerPolicy:
    d = rep.argmax["policy"]
    return PowerPolicy(tuple(d["edges"]), tuple(d["powers"]), d["family"])


def sum_rate_upper(spec: FadingSpec, extra_policies=()) -> RateReport:
    """Best searched value of the clipped opportunistic-transmission bound."""
    return _sum_bound(spec, "upper", extra_policies)


def sum_rate_lower(spec: FadingSpec, extra_policies=()) -> RateReport:
    """Best searched value of the unclipped bound; any feasible policy is achievable."""
    return _sum_bound(spec, "lower", extra_policies)


@dataclass
class SumBounds:
    upper: RateReport
    lower: RateReport
    gap: float
    gap_stderr: Optional[float] = None
    prob_eve_wins: Optional[float] = None
    prob_eve_wins_stderr: Optional[float] = None


def sum_rate_bounds(spec: FadingSpec) -> SumBounds:
    """Upper and lower bounds; the lower search includes the upper's policy."""
    samples = None
    if spec.method == "monte_carlo" or not _Users(spec.mu).iid:
        if spec.seed is None:
            raise PreconditionError("heterogeneous user means need monte_carlo with a seed")
        samples = _sample_max_eve(spec, STREAM_SUM, spec.trials)
    up = _sum_bound(spec, "upper", (), samples)
    pol = _policy_from_report(up)
    lo = _sum_bound(spec, "lower", (pol,), samples)
    gap = up.value - lo.value
    out = SumBounds(up, lo, gap)
    if samples is not None:
        hmax, he = samples
        d = _SampleEvaluator(hmax, he, "upper").samples(pol) - _SampleEvaluator(hmax, he, "lower").samples(pol)
        out.gap_stderr = float(d.std(ddof=1) / math.sqrt(d.size))
        wins = he >= hmax
        out.prob_eve_wins = float(wins.mean())
        out.prob_eve_wins_stderr = float(wins.std(ddof=1) / math.sqrt(wins.size))
    return out


def colluding_bounds(spec: FadingSpec):
    """Sum-rate bounds against ``spec.colluders`` colluding eavesdroppers."""
    b = sum_rate_bounds(spec)
    for r in (b.upper, b.lower):
        r.metadata["colluders"] = spec.colluders
    return b.upper, b.lower


def collusion_crossing(spec: FadingSpec, max_colluders: int = 64, zero_tol: float = 1e-3):
    """Smallest colluder count whose lower bound falls to ``zero_tol``.

    Returns (crossing or None, rows) where rows are (E, upper, lower).
    """
    rows = []
    for E in range(1, max_colluders + 1):
        up, lo = colluding_bounds(spec.replace(colluders=E))
        rows.append((E, up.value, lo.value))
        if lo.value <= zero_tol:
            return E, rows
    return None, rows


def genie_integrand(gamma, mu, Pbar):
    """ln(1 + gamma Pbar) - ln(1 + min(gamma, mu) Pbar)."""
    gamma, mu, Pbar = (np.asarray(v, dtype=float) for v in (gamma, mu, Pbar))
    if np.any(gamma < 0) or np.any(mu < 0) or np.any(Pbar < 0):
        raise DomainError("gains and power must be nonnegative")
    out = np.log1p(gamma * Pbar) - np.log1p(np.minimum(gamma, mu) * Pbar)
    return float(out) if out.ndim == 0 else out


# ------------------------------------------------------------------ high SNR and gap

def _max_pdf_unit(K: int):
    return lambda x: K * (-math.expm1(-x)) ** (K - 1) * math.exp(-x)


def high_snr_bounds(K: int, colluders: int = 1):
    """Infinite-SNR limits of the sum-rate bounds and the optimal threshold.

    Returns (upper, lower, T) in nats.
    """
    if K < 1:
        raise DomainError("K must be at least 1")
    eve = Eavesdropper(colluders)
    f = _max_pdf_unit(K)
    hi = math.log(K) + 40.0

    def inner(g):
        if g <= 0:
            return 0.0
        return _quad(lambda h: math.log(g / h) * float(eve.pdf(h)), 0.0, g, limit=200)

    upper = _quad(lambda g: f(g) * inner(g), 0.0, hi, points=[math.log(K) + 1.0])
    m = eve.mean_log()

    def lower_at(T):
        T = max(T, 1e-300)
        return _quad(lambda g: f(g) * (math.log(g) - m), T, hi)

    grid = np.geomspace(1e-3, hi * 0.5, 80)
    vals = [lower_at(t) for t in grid]
    k = int(np.argmax(vals))
    T, best = grid[k], vals[k]
    if 0 < k < grid.size - 1:
        res = minimize_scalar(lambda t: -lower_at(t), bracket=(grid[k - 1], grid[k], grid[k + 1]), method="golden",
                              options={"xtol": 1e-10})
        if -res.fun >= best:
            T, best = float(res.x), -float(res.fun)
    return upper, best, T


@dataclass
class GapBound:
    bound: float
    empirical: float
    prob_eve_wins: Optional[float] = None
    prob_stderr: Optional[float] = None
    conditional_mean: Optional[float] = None
    empirical_mc: Optional[float] = None
    empirical_stderr: Optional[float] = None


def gap_bound(K: int, trials: Optional[int] = None, seed: Optional[int] = None, workers: int = 1) -> GapBound:
    """The 2 ln 2 / (K + 1) gap and the exact gap term it bounds."""
    if K < 2:
        raise DomainError("the gap bound needs K >= 2")
    f = _max_pdf_unit(K)
    hi = math.log(K) + 40.0

    def tail(g):
        # E[(ln(H_e / g))^+] for unit exponential H_e
        return _quad(lambda h: math.log(h / g) * math.exp(-h), g, g + 50.0, limit=200) if g > 0 else math.inf

    emp = _quad(lambda g: f(g) * tail(g), 0.0, hi, points=[1.0])
    out = GapBound(2 * math.log(2) / (K + 1), emp)
    if trials:
        if seed is None:
            raise SpecError("Monte Carlo gap check needs a seed")
        spec = FadingSpec(K, 1.0, trials=trials, seed=seed, method="monte_carlo", workers=workers)
        hmax, he = _sample_max_eve(spec, STREAM_ORDER, trials)
        wins = he >= hmax
        v = np.where(wins, np.log(he / hmax), 0.0)
        out.prob_eve_wins = float(wins.mean())
        out.prob_stderr = float(wins.std(ddof=1) / math.sqrt(trials))
        out.conditional_mean = float(v[wins].mean()) if wins.any() else 0.0
        out.empirical_mc = float(v.mean())
        out.empirical_stderr = float(v.std(ddof=1) / math.sqrt(trials))
    return out


@dataclass
class OrderStatReport:
    K: int
    trials: int
    seed: int
    conditional_mean: float
    conditional_stderr: float
    bound: float
    bound_holds: bool
    increment_ks_pvalue: float
    increment_independence_pvalue: float
    decomposition_ks_pvalue: float
    alpha: float = 0.01
    extra: dict = field(default_factory=dict)

    @property
    def decomposition_holds(self) -> bool:
        return min(self.increment_ks_pvalue, self.increment_independence_pvalue,
                   self.decomposition_ks_pvalue) >= self.alpha


def order_stat_check(K: int, trials: int, seed: int, alpha: float = 0.01, workers: int = 1) -> OrderStatReport:
    """Monte Carlo checks of the strongest-user order statistics."""
    if K < 2:
        raise DomainError("order statistic checks need K >= 2")

    def draw(rng, s):
        V = rng.exponential(1.0, (s, K + 1))
        V.sort(axis=1)
        he = rng.exponential(1.0, s)
        hmax = rng.exponential(1.0, (s, K)).max(axis=1)
        fresh = rng.exponential(1.0, s)
        return V[:, -1], V[:, -2], he, hmax, fresh

    top, second, he, hmax, fresh = _chunked(seed, STREAM_ORDER, trials, draw, workers)
    wins = he >= hmax
    r = np.log(he[wins] / hmax[wins])
    cm = float(r.mean())
    cse = float(r.std(ddof=1) / math.sqrt(r.size))
    bound = 2 * math.log(2)
    inc = top - second
    # keep the two-sample test at matched sizes on disjoint halves
    half = trials // 2
    p_inc = float(stats.kstest(inc, "expon").pvalue)
    p_ind = float(stats.spearmanr(second, inc).pvalue)
    p_dec = float(stats.ks_2samp(top[:half], second[half:2 * half] + fresh[half:2 * half]).pvalue)
    return OrderStatReport(K, trials, seed, cm, cse, bound, cm <= bound + 3 * cse, p_inc, p_ind, p_dec, alpha,
                           {"prob_eve_wins": float(wins.mean())})
