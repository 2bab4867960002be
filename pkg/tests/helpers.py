"""Shared instance generators and brute-force oracles for the test suite."""
import numpy as np

from secbroadcast.channels import EAVESDROPPER, Dmc, ParallelChannel, ParallelChannelSet


def hb(p):
    p = np.clip(np.asarray(p, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = -p * np.log(p) - (1 - p) * np.log(1 - p)
    return np.nan_to_num(v)


def binary_mi(W, a):
    """I(X;Y) for binary-input/binary-output W at Pr(X=0) = a (vectorized in a)."""
    W = np.asarray(W)
    q0 = a * W[0, 0] + (1 - a) * W[1, 0]
    return hb(q0) - a * hb(W[0, 0]) - (1 - a) * hb(W[1, 0])


def random_stochastic(rng, n, m):
    return rng.dirichlet(np.ones(m), size=n)


def random_degraded_binary(rng, K, M):
    """Reversely degraded instance with binary alphabets and random orders."""
    chans = []
    labels = list(range(K)) + [EAVESDROPPER]
    for _ in range(M):
        order = [labels[i] for i in rng.permutation(K + 1)]
        mats = {}
        cur = random_stochastic(rng, 2, 2)
        for lab in order:
            mats[lab] = cur
            cur = cur @ random_stochastic(rng, 2, 2)
        chans.append(ParallelChannel(tuple(Dmc(mats[i]) for i in range(K)), Dmc(mats[EAVESDROPPER]), tuple(order)))
    return ParallelChannelSet(tuple(chans))


def grid_oracle_common(chans, step=1e-3, clip=True):
    """Exhaustive grid over (p(X_1), ..., p(X_M)) of the common-message objective (M <= 2)."""
    a = np.linspace(0.0, 1.0, int(round(1 / step)) + 1)
    K, M = chans.K, chans.M
    S = np.zeros((K,) + (a.size,) * M)
    for j, c in enumerate(chans.channels):
        ge = binary_mi(c.eavesdropper.matrix, a)
        for i in range(K):
            g = binary_mi(c.receivers[i].matrix, a) - ge
            if c.order is not None and c.order.index(i) > c.order.index(EAVESDROPPER):
                g = np.zeros_like(g)
            if clip:
                g = np.maximum(g, 0.0)
            shape = [1] * M
            shape[j] = a.size
            S[i] = S[i] + g.reshape(shape)
    F = S.min(axis=0)
    idx = np.unravel_index(np.argmax(F), F.shape)
    return float(F[idx]), [a[k] for k in idx]
