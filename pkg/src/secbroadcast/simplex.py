"""Max-min optimization over products of probability simplices.

The objective has the form ``min_i sum_j h(g_ij(p_j))`` where each term is a
difference of two mutual informations, optionally clipped at zero. Phase one
is projected (super)gradient ascent with backtracking and batched random
restarts; phase two polishes with an SLSQP epigraph formulation.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .channels import mi_batch

TIE_TOL = 1e-9
SUFFICIENT = 1e-4


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of each row of ``v`` onto the probability simplex."""
    v = np.asarray(v, dtype=float)
    squeeze = v.ndim == 1
    V = np.atleast_2d(v)
    n = V.shape[1]
    U = -np.sort(-V, axis=1)
    css = np.cumsum(U, axis=1) - 1.0
    ks = np.arange(1, n + 1)
    cond = U - css / ks > 0
    rho = n - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(V.shape[0]), rho] / (rho + 1)
    out = np.maximum(V - theta[:, None], 0.0)
    return out[0] if squeeze else out


def simplex_grid(n: int, steps: int) -> np.ndarray:
    """All points of the n-simplex with coordinates in multiples of 1/steps."""
    if n == 1:
        return np.ones((1, 1))
    if n == 2:
        a = np.arange(steps + 1) / steps
        return np.stack([a, 1 - a], axis=1)
    pts = []
    for k in range(steps + 1):
        sub = simplex_grid(n - 1, steps - k) * (steps - k) if steps - k > 0 else np.zeros((1, n - 1))
        pts.append(np.column_stack([np.full(len(sub), k), sub]))
    return np.vstack(pts) / steps


@dataclass(frozen=True, eq=False)
class Term:
    """``I(X; plus) - I(X; minus)``, clipped at zero when ``clip``."""

    plus: np.ndarray
    minus: Optional[np.ndarray] = None
    clip: bool = True


class MaxMinProblem:
    """``terms[i][j]`` is a Term or None (zero contribution)."""

    def __init__(self, sizes: Sequence[int], terms):
        self.sizes = list(sizes)
        self.terms = [list(row) for row in terms]
        self.K = len(self.terms)
        self.M = len(self.sizes)

    # -- evaluation
    def _term_values(self, ps, grad: bool):
        cache: dict = {}

        def mi(W, j):
            key = (id(W), j)
            if key not in cache:
                cache[key] = mi_batch(W, ps[j], grad=grad)
            return cache[key]

        R = ps[0].shape[0]
        g = np.zeros((self.K, self.M, R))
        G = [[None] * self.M for _ in range(self.K)]
        for i, row in enumerate(self.terms):
            for j, t in enumerate(row):
                if t is None:
                    continue
                a = mi(t.plus, j)
                b = mi(t.minus, j) if t.minus is not None else None
                if grad:
                    v, d = a[0], a[1]
                    if b is not None:
                        v, d = v - b[0], d - b[1]
                    G[i][j] = d
                else:
                    v = a - b if b is not None else a
                g[i, j] = v
        return g, G

    def user_sums(self, ps, active=None) -> np.ndarray:
        """S_i per restart. ``active`` freezes which clipped terms count."""
        g, _ = self._term_values(ps, grad=False)
        return self._sum(g, active)

    def _clipmask(self):
        return np.array([[t is not None and t.clip for t in row] for row in self.terms])

    def _sum(self, g, active):
        clip = self._clipmask()[:, :, None]
        if active is None:
            h = np.where(clip, np.maximum(g, 0.0), g)
        else:
            h = np.where(clip, np.where(active, g, 0.0), g)
        return h.sum(axis=1)

    def value(self, ps) -> np.ndarray:
        return self.user_sums(ps).min(axis=0)

    def supergrad(self, ps):
        g, G = self._term_values(ps, grad=True)
        clip = self._clipmask()[:, :, None]
        S = np.where(clip, np.maximum(g, 0.0), g).sum(axis=1)  # (K, R)
        F = S.min(axis=0)
        w = (S <= F[None, :] + TIE_TOL).astype(float)
        w /= w.sum(axis=0, keepdims=True)
        R = F.size
        grads = [np.zeros((R, n)) for n in self.sizes]
        for i in range(self.K):
            for j in range(self.M):
                if G[i][j] is None:
                    continue
                on = np.ones(R) if not clip[i, j, 0] else (g[i, j] > 0).astype(float)
                grads[j] += (w[i] * on)[:, None] * G[i][j]
        return F, grads, g

    # -- optimization
    def ascend(self, ps, max_iter: int = 500, tol: float = 1e-8):
        ps = [p.copy() for p in ps]
        R = ps[0].shape[0]
        eta = np.ones(R)
        done = np.zeros(R, dtype=bool)
        resid = np.full(R, np.inf)
        F, grads, _ = self.supergrad(ps)
        it = 0
        for it in range(1, max_iter + 1):
            pending = ~done
            if not pending.any():
                break
            accepted = np.zeros(R, dtype=bool)
            trial = [p.copy() for p in ps]
            for _ in range(60):
                todo = pending & ~accepted
                if not todo.any():
                    break
                for j in range(self.M):
                    trial[j][todo] = project_simplex(ps[j][todo] + eta[todo, None] * grads[j][todo])
                step2 = sum(np.sum((trial[j] - ps[j]) ** 2, axis=1) for j in range(self.M))
                Ft = self.value(trial)
                ok = todo & (Ft >= F + SUFFICIENT * step2 / eta)
                tiny = todo & (step2 == 0)
                accepted |= ok
                resid[tiny] = 0.0
                done |= tiny
                shrink = todo & ~ok & ~tiny
                eta[shrink] *= 0.5
                stalled = shrink & (eta < 1e-14)
                done |= stalled
                resid[stalled] = np.sqrt(step2[stalled]) / np.maximum(eta[stalled], 1e-300)
            acc = accepted & ~done
            if acc.any():
                step2 = sum(np.sum((trial[j] - ps[j]) ** 2, axis=1) for j in range(self.M))
                resid[acc] = np.sqrt(step2[acc]) / eta[acc]
                for j in range(self.M):
                    ps[j][acc] = trial[j][acc]
                conv = acc & (resid < tol)
                done |= conv
                eta[acc] = np.minimum(eta[acc] * 2.0, 1e3)
                F, grads, _ = self.supergrad(ps)
            else:
                break
        return ps, F, resid, it

    def polish(self, p_start: Sequence[np.ndarray]):
        """SLSQP on max t s.t. S_i(p) >= t with the clip pattern frozen."""
        p_start = [np.asarray(p, dtype=float) for p in p_start]
        one = [p[None, :] for p in p_start]
        g, _ = self._term_values(one, grad=False)
        active = g > 0
        offs = np.cumsum([0] + self.sizes)

        def split(z):
            return [np.clip(z[offs[j]:offs[j + 1]], 0.0, None)[None, :] for j in range(self.M)]

        def cons(z):
            ps = split(z)
            return self._sum(self._term_values(ps, grad=False)[0], active)[:, 0] - z[-1]

        def cons_jac(z):
            ps = split(z)
            _, G = self._term_values(ps, grad=True)
            clip = self._clipmask()
            J = np.zeros((self.K, z.size))
            for i in range(self.K):
                for j in range(self.M):
                    if G[i][j] is None or (clip[i, j] and not active[i, j, 0]):
                        continue
                    J[i, offs[j]:offs[j + 1]] += G[i][j][0]
                J[i, -1] = -1.0
            return J

        t0 = float(self.user_sums(one, active).min())
        z0 = np.concatenate(p_start + [np.array([t0])])
        eqs = []
        for j in range(self.M):
            a = np.zeros(z0.size)
            a[offs[j]:offs[j + 1]] = 1.0
            eqs.append({"type": "eq", "fun": (lambda z, a=a: a @ z - 1.0), "jac": (lambda z, a=a: a)})
        bounds = [(0.0, 1.0)] * (z0.size - 1) + [(None, None)]
        try:
            res = minimize(
                lambda z: -z[-1], z0, jac=lambda z: np.eye(z.size)[-1] * -1.0,
                method="SLSQP", bounds=bounds,
                constraints=eqs + [{"type": "ineq", "fun": cons, "jac": cons_jac}],
                options={"maxiter": 200, "ftol": 1e-15},
            )
            z = res.x
        except (ValueError, np.linalg.LinAlgError):
            return p_start, 0
        ps = [project_simplex(np.clip(z[offs[j]:offs[j + 1]], 0.0, None)) for j in range(self.M)]
        return ps, int(getattr(res, "nit", 0))


@dataclass
class SolveResult:
    value: float
    point: list
    diag: dict


def dirichlet_starts(sizes, restarts: int, seed: int, extra=()):
    starts = [[np.full(n, 1.0 / n) for n in sizes]]
    for r in range(1, restarts):
        rng = np.random.default_rng([seed, r])
        starts.append([rng.dirichlet(np.ones(n)) for n in sizes])
    for e in extra:
        starts.append([np.asarray(p, dtype=float) for p in e])
    return starts


def grid_starts(problem: MaxMinProblem, top: int = 3):
    """Best points of an exhaustive per-channel grid (tiny problems only)."""
    steps = {1: 1, 2: 200, 3: 40}
    grids = [simplex_grid(n, steps[n]) for n in problem.sizes]
    per = []
    for j, G in enumerate(grids):
        ps = [np.tile(np.full(n, 1.0 / n), (len(G), 1)) for n in problem.sizes]
        ps[j] = G
        g, _ = problem._term_values(ps, grad=False)
        per.append(g[:, j, :])  # (K, |grid_j|)
    clip = problem._clipmask()
    S = 0.0
    for j in range(problem.M):
        h = per[j]
        h = np.where(clip[:, j, None], np.maximum(h, 0.0), h)
        shape = [problem.K] + [1] * problem.M
        shape[1 + j] = len(grids[j])
        S = S + h.reshape(shape)
    F = S.min(axis=0).ravel()
    order = np.argsort(-F, kind="stable")[:top]
    out = []
    for flat in order:
        idx = np.unravel_index(flat, [len(G) for G in grids])
        out.append([grids[j][idx[j]] for j in range(problem.M)])
    return out


def solve(problem: MaxMinProblem, restarts: int = 20, seed: int = 0, extra_starts=(),
          use_grid: bool = False, max_iter: int = 500, tol: float = 1e-8) -> SolveResult:
    """Multi-start ascent plus polish. Best by value, then by start index."""
    starts = dirichlet_starts(problem.sizes, restarts, seed, extra_starts)
    grid_used = False
    if use_grid and all(n <= 3 for n in problem.sizes) and problem.M <= 2:
        starts += grid_starts(problem)
        grid_used = True
    ps0 = [np.array([s[j] for s in starts]) for j in range(problem.M)]
    ps, F, resid, iters = problem.ascend(ps0, max_iter=max_iter, tol=tol)
    # polish the best few candidates, keep the exact objective at each witness
    cand_order = np.lexsort((np.arange(F.size), -F))[: min(4, F.size)]
    best_val, best_pt, best_idx, polished = -np.inf, None, None, False
    for r in sorted(range(F.size), key=lambda r: (-F[r], r)):
        p = [ps[j][r] for j in range(problem.M)]
        val = float(F[r])
        if r in cand_order:
            q, _ = problem.polish(p)
            qv = float(problem.value([x[None, :] for x in q])[0])
            if qv > val:
                p, val = q, qv
                polished = True
        if val > best_val:
            best_val, best_pt, best_idx = val, p, r
    diag = {
        "iterations": int(iters),
        "residual": float(resid[best_idx]) if np.isfinite(resid[best_idx]) else None,
        "restarts": len(starts),
        "best_start": int(best_idx),
        "polished": polished,
        "grid": grid_used,
    }
    return SolveResult(best_val, best_pt, diag)
