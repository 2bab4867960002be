"""Finite-alphabet distributions, channels and information quantities.

Everything here is in nats. Probabilities at or below ``ZERO`` are treated
as exact zeros inside ``p log p`` terms.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linprog

from .errors import AlphabetError, CouplingError, SpecError

ZERO = 1e-15
SUM_TOL = 1e-12
DEGRADED_TOL = 1e-9
MARGINAL_TOL = 1e-10
MAX_ALPHABET = 16
EAVESDROPPER = "e"


def _check_stochastic_rows(m: np.ndarray, what: str) -> None:
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise SpecError(f"{what} must be a nonempty 2-D matrix")
    if not np.all(np.isfinite(m)):
        raise SpecError(f"{what} has non-finite entries")
    if np.any(m < 0):
        raise SpecError(f"{what} has negative entries")
    bad = np.abs(m.sum(axis=1) - 1.0) > SUM_TOL
    if np.any(bad):
        raise SpecError(f"{what}: row {int(np.argmax(bad))} does not sum to 1")


@dataclass(frozen=True, eq=False)
class Distribution:
    """Probability vector over a finite alphabet."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=float).reshape(-1)
        if p.size < 1:
            raise SpecError("distribution must have at least one symbol")
        _check_stochastic_rows(p[None, :], "distribution")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, n: int) -> "Distribution":
        return cls(np.full(n, 1.0 / n))

    @property
    def size(self) -> int:
        return self.probs.size

    def to_list(self) -> list:
        return self.probs.tolist()


@dataclass(frozen=True, eq=False)
class Dmc:
    """Discrete memoryless channel, ``matrix[x, y] = p(y|x)``."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        _check_stochastic_rows(m, "channel matrix")
        if max(m.shape) > MAX_ALPHABET:
            raise SpecError(f"alphabet sizes are capped at {MAX_ALPHABET}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def n_in(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_out(self) -> int:
        return self.matrix.shape[1]

    def to_list(self) -> list:
        return self.matrix.tolist()


def bsc(p: float) -> Dmc:
    return Dmc(np.array([[1 - p, p], [p, 1 - p]]))


@dataclass(frozen=True, eq=False)
class JointChannel:
    """Coupled channel ``tensor[x, y, z] = p(y, z | x)``.

    When ``y_marginal`` / ``z_marginal`` are given they are checked against
    the marginals of the tensor.
    """

    tensor: np.ndarray
    y_marginal: Optional[Dmc] = None
    z_marginal: Optional[Dmc] = None

    def __post_init__(self):
        t = np.array(self.tensor, dtype=float)
        if t.ndim != 3:
            raise SpecError("joint channel tensor must be 3-D (x, y, z)")
        _check_stochastic_rows(t.reshape(t.shape[0], -1), "joint channel")
        for declared, axis, name in ((self.y_marginal, 2, "y"), (self.z_marginal, 1, "z")):
            if declared is None:
                continue
            marg = t.sum(axis=axis)
            if marg.shape != declared.matrix.shape:
                raise CouplingError(f"declared {name} marginal has the wrong shape")
            err = np.max(np.abs(marg - declared.matrix))
            if err > MARGINAL_TOL:
                raise CouplingError(f"{name} marginal mismatch {err:.3g} exceeds {MARGINAL_TOL}")
        t.setflags(write=False)
        object.__setattr__(self, "tensor", t)

    @classmethod
    def from_matrix(cls, matrix, ny: int, nz: int, **kw) -> "JointChannel":
        m = np.asarray(matrix, dtype=float)
        if m.ndim != 2 or m.shape[1] != ny * nz:
            raise SpecError("joint matrix columns must equal ny * nz")
        return cls(m.reshape(m.shape[0], ny, nz), **kw)

    @property
    def matrix(self) -> np.ndarray:
        return self.tensor.reshape(self.tensor.shape[0], -1)

    def marginal_y(self) -> Dmc:
        return Dmc(self.tensor.sum(axis=2))

    def marginal_z(self) -> Dmc:
        return Dmc(self.tensor.sum(axis=1))

    def swapped(self) -> "JointChannel":
        return JointChannel(np.swapaxes(self.tensor, 1, 2))


def _as_probs(input, n: int) -> np.ndarray:
    p = input.probs if isinstance(input, Distribution) else Distribution(input).probs
    if p.size != n:
        raise AlphabetError(f"input law has {p.size} symbols, channel expects {n}")
    return p


def _plogp_ratio(joint: np.ndarray, ratio: np.ndarray) -> float:
    mask = joint > ZERO
    return float(np.sum(joint[mask] * np.log(ratio[mask])))


def entropy(p) -> float:
    p = np.asarray(p, dtype=float).ravel()
    p = p[p > ZERO]
    return float(-np.sum(p * np.log(p)))


def binary_entropy(p: float) -> float:
    return entropy([p, 1.0 - p])


def mutual_information(chan: Dmc, input) -> float:
    """I(X;Y) in nats for input law ``input`` over ``chan``."""
    W = chan.matrix
    p = _as_probs(input, W.shape[0])
    q = p @ W
    joint = p[:, None] * W
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = W / q[None, :]
    val = _plogp_ratio(joint, ratio)
    return min(max(val, 0.0), float(np.log(min(W.shape))))


def conditional_mutual_information(joint: JointChannel, input) -> float:
    """I(X;Y|Z) in nats, computed from the full joint p(x, y, z)."""
    T = joint.tensor
    p = _as_probs(input, T.shape[0])
    pxyz = p[:, None, None] * T
    pz = pxyz.sum(axis=(0, 1))
    pxz = pxyz.sum(axis=1)
    pyz = pxyz.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = pxyz * pz[None, None, :] / (pxz[:, None, :] * pyz[None, :, :])
    return max(_plogp_ratio(pxyz, ratio), 0.0)


def mi_batch(W: np.ndarray, P: np.ndarray, grad: bool = True):
    """Batched I(X;Y) for rows of ``P`` (shape R x |X|).

    Returns values (R,) and, if requested, the gradient with respect to the
    input law, ``D(W_x || q) - 1`` per symbol.
    """
    Q = np.maximum(P @ W, ZERO)
    with np.errstate(divide="ignore"):
        logW = np.where(W > ZERO, np.log(np.where(W > ZERO, W, 1.0)), 0.0)
    # per-row divergence D(W_x || q_r)
    cross = np.where(W > ZERO, W, 0.0) @ np.log(Q).T  # (|X|, R)
    selfent = np.sum(W * logW, axis=1)  # (|X|,)
    div = selfent[:, None] - cross  # (|X|, R)
    vals = np.einsum("rx,xr->r", P, div)
    if not grad:
        return vals
    return vals, div.T - 1.0


def mi_channel_grad(V: np.ndarray, p: np.ndarray):
    """I(U;Y) for law ``p`` over channel ``V`` and its gradient in ``V``."""
    q = np.maximum(p @ V, ZERO)
    with np.errstate(divide="ignore"):
        logratio = np.where(V > ZERO, np.log(np.maximum(V, ZERO)) - np.log(q)[None, :], 0.0)
    val = float(np.sum(p[:, None] * V * logratio))
    return val, p[:, None] * logratio


# ---------------------------------------------------------------- degradation

def _project_rows_simplex(D: np.ndarray) -> np.ndarray:
    from .simplex import project_simplex

    return project_simplex(D)


def _polish_map(S: np.ndarray, Wk: np.ndarray, D: np.ndarray, iters: int = 2000) -> np.ndarray:
    # projected gradient on 0.5 * ||S D - Wk||^2 over row-stochastic D
    L = max(np.linalg.norm(S, 2) ** 2, 1e-12)
    for _ in range(iters):
        R = S @ D - Wk
        if np.max(np.abs(R)) <= DEGRADED_TOL * 1e-3:
            break
        D = _project_rows_simplex(D - (S.T @ R) / L)
    return D


def is_degraded(strong: Dmc, weak: Dmc, tol: float = DEGRADED_TOL) -> Optional[np.ndarray]:
    """Return a row-stochastic D with ``weak = strong @ D`` or None."""
    S, Wk = strong.matrix, weak.matrix
    if S.shape[0] != Wk.shape[0]:
        raise AlphabetError("channels must share the input alphabet")
    nx, ns = S.shape
    nw = Wk.shape[1]
    # variables D[s, w] flattened row-major
    A_eq = np.zeros((nx * nw + ns, ns * nw))
    b_eq = np.zeros(nx * nw + ns)
    for x in range(nx):
        for w in range(nw):
            A_eq[x * nw + w, w::nw] = S[x]
            b_eq[x * nw + w] = Wk[x, w]
    for s in range(ns):
        A_eq[nx * nw + s, s * nw:(s + 1) * nw] = 1.0
        b_eq[nx * nw + s] = 1.0
    res = linprog(np.zeros(ns * nw), A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0 or res.x is None:
        return None
    D = _project_rows_simplex(res.x.reshape(ns, nw))
    if np.max(np.abs(S @ D - Wk)) > tol * 1e-3:
        D = _polish_map(S, Wk, D)
    if np.max(np.abs(S @ D - Wk)) > tol:
        return None
    return D


def degraded_coupling(strong: Dmc, weak: Dmc, map) -> JointChannel:
    """Physically degraded joint p(y, z | x) = strong(y|x) map(z|y)."""
    D = np.asarray(map, dtype=float)
    S = strong.matrix
    if D.ndim != 2 or D.shape != (S.shape[1], weak.n_out):
        raise CouplingError("degradation map has the wrong shape")
    if np.any(D < 0) or np.any(np.abs(D.sum(axis=1) - 1) > SUM_TOL):
        raise CouplingError("degradation map is not row-stochastic")
    if S.shape[0] != weak.n_in:
        raise AlphabetError("channels must share the input alphabet")
    return JointChannel(S[:, :, None] * D[None, :, :], y_marginal=strong, z_marginal=weak)


def independent_coupling(a: Dmc, b: Dmc) -> JointChannel:
    if a.n_in != b.n_in:
        raise AlphabetError("channels must share the input alphabet")
    return JointChannel(a.matrix[:, :, None] * b.matrix[:, None, :])


def conditionally_independent_joint(eaves: Dmc, couplings: Sequence[JointChannel]) -> np.ndarray:
    """Assemble p(y_1..y_K, z | x) from pairwise couplings p(y_i, z | x).

    Receivers are taken conditionally independent given (x, z). The result has
    shape (|X|, |Y_1|, ..., |Y_K|, |Z|).
    """
    E = eaves.matrix
    out = E.copy()  # (x, z)
    for c in couplings:
        T = c.tensor
        if T.shape[0] != E.shape[0] or T.shape[2] != E.shape[1]:
            raise AlphabetError("coupling does not match the eavesdropper alphabet")
        if np.max(np.abs(T.sum(axis=1) - E)) > MARGINAL_TOL:
            raise CouplingError("coupling eavesdropper marginal mismatch")
        with np.errstate(divide="ignore", invalid="ignore"):
            cond = np.where(E[:, None, :] > 0, T / E[:, None, :], 1.0 / T.shape[1])
        # out[..., z] -> out[..., y_i, z]
        out = out[..., None, :] * cond.reshape((T.shape[0],) + (1,) * (out.ndim - 2) + T.shape[1:])
    return out


# ---------------------------------------------------------------- parallel sets

def _check_order(order, K: int) -> tuple:
    labels = tuple(EAVESDROPPER if o == EAVESDROPPER else int(o) for o in order)
    expected = set(range(K)) | {EAVESDROPPER}
    if len(labels) != K + 1 or set(labels) != expected:
        raise SpecError(f"order {list(order)} is not a permutation of users 0..{K - 1} and 'e'")
    return labels


@dataclass(frozen=True, eq=False)
class ParallelChannel:
    """One sub-channel: a Dmc per user, an eavesdropper Dmc, optional order.

    ``order`` lists labels (user indices and ``'e'``) from strongest to
    weakest; each adjacent pair must be degraded.
    """

    receivers: tuple
    eavesdropper: Dmc
    order: Optional[tuple] = None
    maps: tuple = field(default=(), repr=False)

    def __post_init__(self):
        rec = tuple(r if isinstance(r, Dmc) else Dmc(r) for r in self.receivers)
        eve = self.eavesdropper if isinstance(self.eavesdropper, Dmc) else Dmc(self.eavesdropper)
        if not rec:
            raise SpecError("a channel needs at least one receiver")
        nx = eve.n_in
        for i, r in enumerate(rec):
            if r.n_in != nx:
                raise SpecError(f"receiver {i} input alphabet {r.n_in} differs from eavesdropper {nx}")
        object.__setattr__(self, "receivers", rec)
        object.__setattr__(self, "eavesdropper", eve)
        if self.order is not None:
            order = _check_order(self.order, len(rec))
            maps = []
            for a, b in zip(order[:-1], order[1:]):
                D = is_degraded(self.dmc(a), self.dmc(b))
                if D is None:
                    raise SpecError(f"order violated: {b!r} is not degraded with respect to {a!r}")
                maps.append(D)
            object.__setattr__(self, "order", order)
            object.__setattr__(self, "maps", tuple(maps))

    @property
    def K(self) -> int:
        return len(self.receivers)

    @property
    def n_in(self) -> int:
        return self.eavesdropper.n_in

    def dmc(self, label) -> Dmc:
        return self.eavesdropper if label == EAVESDROPPER else self.receivers[int(label)]

    def rank(self, label) -> int:
        if self.order is None:
            raise SpecError("channel has no degradation order")
        return self.order.index(EAVESDROPPER if label == EAVESDROPPER else int(label))

    def chain_map(self, a, b) -> np.ndarray:
        """Composite degradation map from ``a`` down to weaker ``b``."""
        ra, rb = self.rank(a), self.rank(b)
        if ra > rb:
            raise SpecError("chain_map needs the stronger label first")
        D = np.eye(self.dmc(a).n_out)
        for k in range(ra, rb):
            D = D @ self.maps[k]
        return D

    def user_eve_coupling(self, user: int) -> JointChannel:
        """p(y_user, y_e | x) under the degraded coupling implied by the order."""
        u, e = self.receivers[user], self.eavesdropper
        if self.rank(user) < self.rank(EAVESDROPPER):
            return degraded_coupling(u, e, self.chain_map(user, EAVESDROPPER))
        return degraded_coupling(e, u, self.chain_map(EAVESDROPPER, user)).swapped()

    def drop_user(self, user: int) -> "ParallelChannel":
        rec = tuple(r for i, r in enumerate(self.receivers) if i != user)
        order = None
        if self.order is not None:
            order = tuple(
                o if o == EAVESDROPPER else (o - 1 if o > user else o)
                for o in self.order
                if o != user
            )
        return ParallelChannel(rec, self.eavesdropper, order)

    def to_dict(self) -> dict:
        d = {
            "receivers": [r.to_list() for r in self.receivers],
            "eavesdropper": self.eavesdropper.to_list(),
        }
        if self.order is not None:
            d["order"] = list(self.order)
        return d


@dataclass(frozen=True, eq=False)
class ParallelChannelSet:
    channels: tuple

    def __post_init__(self):
        chans = tuple(self.channels)
        if not chans:
            raise SpecError("need at least one channel")
        K = chans[0].K
        for j, c in enumerate(chans):
            if c.K != K:
                raise SpecError(f"channel {j} has {c.K} receivers, expected {K}")
        object.__setattr__(self, "channels", chans)

    @property
    def K(self) -> int:
        return self.channels[0].K

    @property
    def M(self) -> int:
        return len(self.channels)

    @property
    def is_ordered(self) -> bool:
        return all(c.order is not None for c in self.channels)

    def drop_user(self, user: int) -> "ParallelChannelSet":
        return ParallelChannelSet(tuple(c.drop_user(user) for c in self.channels))

    def to_dict(self) -> dict:
        return {"channels": [c.to_dict() for c in self.channels]}

    @classmethod
    def from_dict(cls, d: dict) -> "ParallelChannelSet":
        return cls(tuple(
            ParallelChannel(tuple(Dmc(r) for r in c["receivers"]), Dmc(c["eavesdropper"]), c.get("order"))
            for c in d["channels"]
        ))


def infer_order(chan: ParallelChannel) -> Optional[tuple]:
    """Find a degradation chain over users and the eavesdropper, if any."""
    labels = list(range(chan.K)) + [EAVESDROPPER]
    n = len(labels)
    deg = np.zeros((n, n), dtype=bool)
    for a in range(n):
        for b in range(n):
            deg[a, b] = a == b or is_degraded(chan.dmc(labels[a]), chan.dmc(labels[b])) is not None
    idx = sorted(range(n), key=lambda a: -int(deg[a].sum()))
    for a, b in zip(idx[:-1], idx[1:]):
        if not deg[a, b]:
            return None
    return tuple(labels[a] for a in idx)
