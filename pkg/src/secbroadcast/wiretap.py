"""Desk-scale random binning wiretap code over parallel DMCs.

Codebooks, encoder, decoders (weak-typicality and maximum likelihood),
Monte Carlo error rates and exact eavesdropper equivocation by enumeration.
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .channels import Distribution, Dmc, mutual_information, ZERO
from .errors import SizeError, SpecError

MAX_N = 12
MAX_CHANNELS = 2
MAX_CODEWORDS = 2 ** 20
MAX_ENUMERATION = 10 ** 8
CODEBOOK_STREAM = 0
TRIAL_STREAM = 1


@dataclass(frozen=True, eq=False)
class SubChannel:
    receivers: tuple
    eavesdropper: Dmc
    input_law: Distribution

    def __post_init__(self):
        rec = tuple(r if isinstance(r, Dmc) else Dmc(r) for r in self.receivers)
        eve = self.eavesdropper if isinstance(self.eavesdropper, Dmc) else Dmc(self.eavesdropper)
        law = self.input_law if isinstance(self.input_law, Distribution) else Distribution(self.input_law)
        nx = law.size
        if nx not in (2, 3):
            raise SpecError("simulated channels must have binary or ternary inputs")
        for d in rec + (eve,):
            if d.n_in != nx or d.n_out not in (2, 3):
                raise SpecError("simulated channels must be binary or ternary and share the input alphabet")
        object.__setattr__(self, "receivers", rec)
        object.__setattr__(self, "eavesdropper", eve)
        object.__setattr__(self, "input_law", law)


@dataclass(frozen=True, eq=False)
class WiretapCodeSpec:
    """Block length, secrecy rate and per-channel bin sizes of the code.

    Bin sizes come from ``bin_sizes`` when given, else from ``bin_rates``,
    else from the eavesdropper information at the design law minus ``eps_f``.
    """

    n: int
    rate: float
    channels: tuple
    bin_rates: Optional[tuple] = None
    bin_sizes: Optional[tuple] = None
    eps_f: float = 0.0
    seed: int = 0
    sampling: str = "iid"
    epsilon: float = 0.1

    def __post_init__(self):
        chans = tuple(self.channels)
        if not 1 <= len(chans) <= MAX_CHANNELS:
            raise SpecError(f"between 1 and {MAX_CHANNELS} channels supported")
        if not 1 <= int(self.n) <= MAX_N:
            raise SpecError(f"block length must be in 1..{MAX_N}")
        if self.rate < 0:
            raise SpecError("rate must be nonnegative")
        if self.sampling not in ("iid", "typical"):
            raise SpecError("sampling must be 'iid' or 'typical'")
        K = len(chans[0].receivers)
        if any(len(c.receivers) != K for c in chans):
            raise SpecError("every channel needs the same number of receivers")
        for name in ("bin_rates", "bin_sizes"):
            v = getattr(self, name)
            if v is not None and len(v) != len(chans):
                raise SpecError(f"{name} needs one entry per channel")
        if self.bin_sizes is not None and any(int(q) < 1 for q in self.bin_sizes):
            raise SpecError("bin sizes must be at least 1")
        object.__setattr__(self, "channels", chans)
        object.__setattr__(self, "n", int(self.n))
        if self.message_count < 2:
            raise SpecError(f"round(exp(n R)) = {self.message_count} messages; need at least 2")

    @property
    def M(self) -> int:
        return len(self.channels)

    @property
    def K(self) -> int:
        return len(self.channels[0].receivers)

    @property
    def message_count(self) -> int:
        return int(round(math.exp(self.n * self.rate)))

    def design_bin_rates(self) -> list:
        if self.bin_rates is not None:
            return [float(r) for r in self.bin_rates]
        return [max(0.0, mutual_information(c.eavesdropper, c.input_law) - self.eps_f) for c in self.channels]

    @property
    def bin_counts(self) -> list:
        if self.bin_sizes is not None:
            return [int(q) for q in self.bin_sizes]
        return [max(1, int(round(math.exp(self.n * r)))) for r in self.design_bin_rates()]

    def usable_channels(self, user: int) -> list:
        """Channels where the user out-informs the eavesdropper at the design law."""
        out = []
        for j, c in enumerate(self.channels):
            gain = mutual_information(c.receivers[user], c.input_law) - mutual_information(c.eavesdropper, c.input_law)
            if gain > 1e-12:
                out.append(j)
        return out

    def replace(self, **kw) -> "WiretapCodeSpec":
        d = {k: getattr(self, k) for k in ("n", "rate", "channels", "bin_rates", "bin_sizes", "eps_f",
                                           "seed", "sampling", "epsilon")}
        d.update(kw)
        return WiretapCodeSpec(**d)


@dataclass(frozen=True, eq=False)
class CodebookSet:
    """``books[j][w, k]`` is the k-th codeword of bin w on channel j."""

    spec: WiretapCodeSpec
    books: tuple
    repeated: bool = False

    @property
    def message_count(self) -> int:
        return self.books[0].shape[0]

    @property
    def bin_counts(self) -> list:
        return [b.shape[1] for b in self.books]

    @property
    def realized_rate(self) -> float:
        return math.log(self.message_count) / self.spec.n

    @property
    def realized_bin_rates(self) -> list:
        return [math.log(q) / self.spec.n for q in self.bin_counts]

    def bin(self, j: int, w: int) -> np.ndarray:
        return self.books[j][w]

    def codebook(self, j: int) -> np.ndarray:
        """All codewords of channel j, the union of the bins."""
        b = self.books[j]
        return b.reshape(-1, b.shape[-1])


def _typical(seqs: np.ndarray, law: np.ndarray, eps: float) -> np.ndarray:
    logp = np.log(np.maximum(law, ZERO))
    H = -float(np.sum(law[law > ZERO] * np.log(law[law > ZERO])))
    emp = -logp[seqs].mean(axis=-1)
    return np.abs(emp - H) <= eps


def _draw_distinct(rng, law: np.ndarray, count: int, n: int, sampling: str, eps: float) -> np.ndarray:
    if count > law.size ** n:
        raise SizeError(f"{count} distinct codewords requested but only {law.size ** n} sequences of length {n} exist")
    seen: dict = {}
    out = np.empty((count, n), dtype=np.int8)
    filled, attempts = 0, 0
    budget = 1000 * count + 10000
    while filled < count:
        batch = rng.choice(law.size, size=(max(64, 2 * (count - filled)), n), p=law).astype(np.int8)
        if sampling == "typical":
            batch = batch[_typical(batch, law, eps)]
        for row in batch:
            key = row.tobytes()
            if key in seen:
                continue
            seen[key] = True
            out[filled] = row
            filled += 1
            if filled == count:
                break
        attempts += len(batch)
        if attempts > budget:
            raise SizeError("codeword sampler stalled; typical set too small for the requested count")
    return out


def build_codebooks(spec: WiretapCodeSpec, repeat_across_channels: bool = False) -> CodebookSet:
    """Draw per-channel codebooks and partition each into message bins.

    ``repeat_across_channels`` reuses channel 0's codebook on every channel
    (and the encoder then reuses one bin index), a negative control for the
    independence the secrecy argument relies on.
    """
    W = spec.message_count
    Q = spec.bin_counts
    total = sum(W * q for q in Q)
    if total > MAX_CODEWORDS:
        raise SizeError(f"{total} codewords exceed the limit of {MAX_CODEWORDS}")
    rng = np.random.default_rng([spec.seed, CODEBOOK_STREAM])
    books = []
    for j, c in enumerate(spec.channels):
        if repeat_across_channels and j > 0:
            if Q[j] != Q[0] or c.input_law.size != spec.channels[0].input_law.size:
                raise SpecError("repeated mode needs identical bin sizes and alphabets")
            books.append(books[0])
            continue
        words = _draw_distinct(rng, c.input_law.probs, W * Q[j], spec.n, spec.sampling, spec.epsilon)
        words = words[rng.permutation(len(words))]  # random partition into bins
        words.setflags(write=False)
        books.append(words.reshape(W, Q[j], spec.n))
    return CodebookSet(spec, tuple(books), repeated=repeat_across_channels)


def encode(w: int, books: CodebookSet, rng) -> list:
    """Pick a uniformly random codeword from bin ``w`` on each channel."""
    if not 0 <= w < books.message_count:
        raise SpecError(f"message index {w} out of range")
    if books.repeated:
        k = int(rng.integers(books.bin_counts[0]))
        return [b[w, k].copy() for b in books.books]
    return [b[w, int(rng.integers(b.shape[1]))].copy() for b in books.books]


def transmit(x: np.ndarray, chan: Dmc, rng) -> np.ndarray:
    cdf = np.cumsum(chan.matrix[x], axis=1)
    u = rng.random(len(x))
    return np.minimum((u[:, None] > cdf).sum(axis=1), chan.n_out - 1).astype(np.int8)


def _loglik(words: np.ndarray, y: np.ndarray, chan: Dmc) -> np.ndarray:
    logW = np.log(np.maximum(chan.matrix, 1e-300))
    return logW[words, y[None, None, :]].sum(axis=-1)


def decode(outputs: Sequence[np.ndarray], books: CodebookSet, user: int, mode: str = "typical",
           epsilon: Optional[float] = None) -> Optional[int]:
    """Recover the message from the user's outputs, or None on failure."""
    spec = books.spec
    S = spec.usable_channels(user)
    if not S:
        return None
    if mode == "ml":
        score = np.zeros(books.message_count)
        for j in S:
            ll = _loglik(books.books[j], np.asarray(outputs[j]), spec.channels[j].receivers[user])
            score += logsumexp(ll, axis=1) - math.log(ll.shape[1])
        best = np.flatnonzero(score == score.max())
        return int(best[0]) if best.size == 1 else None
    if mode != "typical":
        raise SpecError(f"unknown decoder mode {mode!r}")
    eps = spec.epsilon if epsilon is None else epsilon
    cand = np.ones(books.message_count, dtype=bool)
    for j in S:
        c = spec.channels[j]
        W = c.receivers[user].matrix
        px = c.input_law.probs
        pxy = px[:, None] * W
        py = px @ W
        y = np.asarray(outputs[j])
        words = books.books[j]

        def h(p):
            p = p[p > ZERO]
            return -float(np.sum(p * np.log(p)))

        with np.errstate(divide="ignore"):
            lx, ly, lxy = np.log(px), np.log(py), np.log(pxy)
        ok_y = abs(-ly[y].mean() - h(py)) <= eps
        ex = -lx[words].mean(axis=-1)
        exy = -lxy[words, y[None, None, :]].mean(axis=-1)
        typ = (np.abs(ex - h(px)) <= eps) & (np.abs(exy - h(pxy.ravel())) <= eps) & ok_y
        cand &= typ.any(axis=1)
    hits = np.flatnonzero(cand)
    return int(hits[0]) if hits.size == 1 else None


@dataclass
class SimulationResult:
    trials: int
    errors: int
    error_rate: float
    stderr: float
    user: int
    decoder: str


def _run_trials(args):
    books, user, mode, lo, hi = args
    spec = books.spec
    errs = 0
    for t in range(lo, hi):
        rng = np.random.default_rng([spec.seed, TRIAL_STREAM, t])
        w = int(rng.integers(books.message_count))
        xs = encode(w, books, rng)
        ys = [transmit(x, c.receivers[user], rng) for x, c in zip(xs, spec.channels)]
        if decode(ys, books, user, mode) != w:
            errs += 1
    return errs


def simulate(books: CodebookSet, trials: int, user: int = 0, mode: str = "ml", workers: int = 1) -> SimulationResult:
    """Monte Carlo message error rate. Trial t uses its own counter-derived stream."""
    if trials < 1:
        raise SpecError("need at least one trial")
    chunk = 1000
    jobs = [(books, user, mode, lo, min(lo + chunk, trials)) for lo in range(0, trials, chunk)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            errs = sum(ex.map(_run_trials, jobs))
    else:
        errs = sum(map(_run_trials, jobs))
    rate = errs / trials
    return SimulationResult(trials, errs, rate, math.sqrt(rate * (1 - rate) / trials), user, mode)


# ------------------------------------------------------------------ equivocation

def _output_likelihoods(books: np.ndarray, chan: Dmc) -> np.ndarray:
    """p(y^n | codeword) for every codeword; shape (W, Q, |Y|^n)."""
    W, Q, n = books.shape
    out = np.ones((W, Q, 1))
    for t in range(n):
        col = chan.matrix[books[:, :, t]]  # (W, Q, ny)
        out = (out[:, :, :, None] * col[:, :, None, :]).reshape(W, Q, -1)
    return out


def _neg_plogp(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-np.sum(p.astype(np.longdouble) * np.log(p.astype(np.longdouble))))


@dataclass
class EquivocationResult:
    """Per-symbol equivocation and leakage (nats) for a uniform message."""

    message_entropy: float
    joint_equivocation: float
    joint_leakage: float
    per_channel_equivocation: list = field(default_factory=list)
    per_channel_leakage: list = field(default_factory=list)


def exact_equivocation(books: CodebookSet, eavesdroppers: Optional[Sequence[Dmc]] = None) -> EquivocationResult:
    """H(W | Y_e^n)/n by full enumeration of the eavesdropper's outputs."""
    spec = books.spec
    eves = list(eavesdroppers) if eavesdroppers is not None else [c.eavesdropper for c in spec.channels]
    if len(eves) != spec.M:
        raise SpecError("need one eavesdropper channel per sub-channel")
    n, W = spec.n, books.message_count
    size = W * math.prod(books.bin_counts) * math.prod(e.n_out ** n for e in eves)
    if size > MAX_ENUMERATION:
        raise SizeError(f"enumeration size {size} exceeds {MAX_ENUMERATION}")
    HW = math.log(W)
    per_like = [_output_likelihoods(b, e) for b, e in zip(books.books, eves)]  # (W, Q, Y)
    cond = [lk.mean(axis=1) for lk in per_like]  # p(y_j | w)
    per_eq, per_leak = [], []
    H_cond = []
    for L in cond:
        Hy = _neg_plogp(L.mean(axis=0))
        Hyw = sum(_neg_plogp(L[w]) for w in range(W)) / W
        H_cond.append(Hyw)
        leak = max(Hy - Hyw, 0.0)
        per_leak.append(leak / n)
        per_eq.append((HW - leak) / n)
    if spec.M == 1:
        joint_leak = per_leak[0] * n
    elif books.repeated:
        # same bin index on both channels: p(y1, y2 | w) = mean_k p(y1|u_k) p(y2|u_k)
        Hyw, py = 0.0, 0.0
        for w in range(W):
            J = np.einsum("ka,kb->ab", per_like[0][w], per_like[1][w]) / per_like[0].shape[1]
            Hyw += _neg_plogp(J.ravel())
            py = py + J
        joint_leak = _neg_plogp((py / W).ravel()) - Hyw / W
    else:
        # independent selection: p(y1, y2 | w) = p(y1|w) p(y2|w)
        py = np.einsum("wa,wb->ab", cond[0], cond[1]) / W
        joint_leak = _neg_plogp(py.ravel()) - sum(H_cond)
    joint_leak = max(float(joint_leak), 0.0)
    return EquivocationResult(HW / n, (HW - joint_leak) / n, joint_leak / n, per_eq, per_leak)


def enumerate_outputs(n: int, ny: int) -> np.ndarray:
    """All length-n output sequences in the order used by the likelihood tables."""
    return np.array(list(itertools.product(range(ny), repeat=n)), dtype=np.int8)
