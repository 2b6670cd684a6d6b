"""Monte Carlo over fixed-composition random codebooks at small block length.

Each codebook's partition function ``Z_n(beta) = sum_y P(y)^beta`` is computed
exactly by enumerating every output sequence, where ``P`` is the output
mixture ``(1/M) sum_m W^n(y | x_m)``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from scipy.special import logsumexp

from .dmc import Channel

ENUMERATION_CAP = 2 ** 24
# entries of the mixture buffer filled per batch of codewords
_BATCH_ENTRIES = 1 << 22
# below this product the linear-domain mixture may underflow
_LINEAR_FLOOR = 1e-250


class CapExceededError(ValueError):
    """The exact output enumeration would exceed its cap."""

    def __init__(self, size, cap):
        super().__init__(f"|Y|^n = {size} exceeds the enumeration cap {cap}")
        self.size = size
        self.cap = cap


class InvalidTypeError(ValueError):
    """A joint type that cannot occur at the given block length."""


def largest_remainder(p, n: int) -> tuple:
    """Integer counts summing to ``n`` closest to ``n p`` (Hamilton's method)."""
    p = np.asarray(p, dtype=float)
    raw = n * p
    counts = np.floor(raw).astype(int)
    short = n - int(counts.sum())
    # stable sort so ties go to the lower letter index
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[:short]] += 1
    return tuple(int(c) for c in counts)


def codebook_size(n: int, R: float) -> int:
    """``floor(e^{nR})``, robust to round-off when ``nR`` is the log of an integer."""
    x = math.exp(n * R)
    r = round(x)
    if abs(x - r) <= 1e-9 * max(1.0, x):
        return int(r)
    return int(math.floor(x))


@dataclass(frozen=True)
class CodebookSpec:
    """Block length, codeword count and the fixed composition codewords are drawn from."""

    channel: Channel
    n: int
    M: int
    composition: tuple
    R: float | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"block length must be positive, got {self.n}")
        if self.M < 1:
            raise ValueError(f"codebook needs at least one codeword, got M={self.M}")
        comp = tuple(int(c) for c in self.composition)
        if len(comp) != self.channel.nx or min(comp) < 0 or sum(comp) != self.n:
            raise ValueError(f"composition {comp} is not a type of length {self.n}")
        dev = np.abs(np.array(comp) / self.n - self.channel.p_x).max()
        if dev > 1.0 / self.n + 1e-12:
            raise ValueError(f"composition {comp} is off P_X by {dev:.3g} > 1/n")
        object.__setattr__(self, "composition", comp)

    @classmethod
    def from_size(cls, channel: Channel, n: int, M: int) -> "CodebookSpec":
        return cls(channel, n, M, largest_remainder(channel.p_x, n))

    @classmethod
    def from_rate(cls, channel: Channel, n: int, R: float) -> "CodebookSpec":
        if not R >= 0:
            raise ValueError(f"rate must be non-negative, got {R}")
        return cls(channel, n, codebook_size(n, R), largest_remainder(channel.p_x, n), R)

    @property
    def rate(self) -> float:
        """Nominal rate: the requested R, else ``log(M)/n``."""
        return self.R if self.R is not None else math.log(self.M) / self.n

    @property
    def effective_channel(self) -> Channel:
        """The channel with ``P_X`` replaced by the rounded composition over ``n``."""
        return self.channel.with_input_dist(np.array(self.composition) / self.n)

    @property
    def base_word(self) -> np.ndarray:
        return np.repeat(np.arange(self.channel.nx), self.composition)

    def to_dict(self) -> dict:
        return {"n": self.n, "M": self.M, "R": self.R, "composition": list(self.composition),
                "channel_hash": self.channel.digest()}


def sample_codeword(spec: CodebookSpec, rng: np.random.Generator) -> np.ndarray:
    """A uniform draw from the type class: a random permutation of the composition."""
    return rng.permutation(spec.base_word)


def sample_codebook(spec: CodebookSpec, rng: np.random.Generator) -> np.ndarray:
    """``M`` independent codewords as an ``(M, n)`` integer array."""
    return rng.permuted(np.tile(spec.base_word, (spec.M, 1)), axis=1)


def _check_cap(ny, n, cap):
    size = ny ** n
    if size > cap:
        raise CapExceededError(size, cap)
    return size


def output_mixture(codebook, ch: Channel, cap: int = ENUMERATION_CAP, log: bool = False):
    """``P(y) = (1/M) sum_m W^n(y | x_m)`` for all ``y`` in lexicographic order.

    With ``log=True`` the mixture is accumulated in the log domain; the default
    linear path is used whenever no product can underflow.
    """
    codebook = np.atleast_2d(np.asarray(codebook, dtype=int))
    M, n = codebook.shape
    size = _check_cap(ch.ny, n, cap)
    batch = max(1, _BATCH_ENTRIES // size)
    if log:
        with np.errstate(divide="ignore"):
            logW = np.log(ch.W)
        out = np.full(size, -np.inf)
        for s in range(0, M, batch):
            rows = codebook[s:s + batch]
            L = np.zeros((len(rows), 1))
            for i in range(n):
                L = (L[:, :, None] + logW[rows[:, i]][:, None, :]).reshape(len(rows), -1)
            out = np.logaddexp(out, logsumexp(L, axis=0))
        return out - math.log(M)
    # W^n(y|x) factors over the two halves of the word, so the mixture is A^T B
    h = n // 2
    A = _likelihood_rows(codebook[:, :h], ch.W)
    B = _likelihood_rows(codebook[:, h:], ch.W)
    return (A.T @ B).ravel() / M


def _likelihood_rows(words, W):
    V = np.ones((len(words), 1))
    for i in range(words.shape[1]):
        V = (V[:, :, None] * W[words[:, i]][:, None, :]).reshape(len(words), -1)
    return V


def _needs_log(ch, n):
    w_min = ch.W[ch.W > 0].min()
    return n * math.log(w_min) < math.log(_LINEAR_FLOOR)


def log_partition(codebook, ch: Channel, beta: float, cap: int = ENUMERATION_CAP) -> float:
    """Exact ``log Z_n(beta | C)`` (not normalized by ``n``)."""
    if not beta >= 0:
        raise ValueError(f"beta must be non-negative, got {beta}")
    codebook = np.atleast_2d(np.asarray(codebook, dtype=int))
    _check_cap(ch.ny, codebook.shape[1], cap)
    if beta == 1.0:
        return 0.0
    return _log_partition(codebook, ch, beta, cap)


def _log_partition(codebook, ch, beta, cap):
    n = codebook.shape[1]
    if _needs_log(ch, n):
        logP = output_mixture(codebook, ch, cap, log=True)
    else:
        P = output_mixture(codebook, ch, cap)
        with np.errstate(divide="ignore"):
            logP = np.log(P)
    if beta == 0:
        return float(math.log(np.count_nonzero(np.isfinite(logP))))
    return float(logsumexp(beta * logP[np.isfinite(logP)]))


partition_function = log_partition


@dataclass
class EnsembleReport:
    spec: CodebookSpec
    beta: float
    trials: int
    annealed_exponent: float
    annealed_stderr: float
    quenched_mean: float
    quenched_std: float
    quenched_stderr: float
    seed: int
    values: np.ndarray | None = field(default=None, repr=False)

    def jensen_slack(self) -> float:
        """``annealed - quenched + 3 (combined stderr)``; non-negative when consistent."""
        return (self.annealed_exponent - self.quenched_mean
                + 3.0 * math.hypot(self.annealed_stderr, self.quenched_stderr))

    def row(self) -> dict:
        return {
            "n": self.spec.n, "M": self.spec.M, "R": self.spec.rate, "beta": self.beta,
            "trials": self.trials, "annealed_exponent": self.annealed_exponent,
            "annealed_stderr": self.annealed_stderr, "quenched_mean": self.quenched_mean,
            "quenched_std": self.quenched_std, "quenched_stderr": self.quenched_stderr,
            "seed": self.seed,
        }


def _trial_log_z(child, spec, beta, cap):
    rng = np.random.default_rng(child)
    return _log_partition(sample_codebook(spec, rng), spec.channel, beta, cap)


def _run_trials(spec, beta, trials, seed, threads, cap):
    children = np.random.SeedSequence(seed).spawn(trials)
    fn = partial(_trial_log_z, spec=spec, beta=beta, cap=cap)
    if threads == 1 or trials < 2:
        return np.array([fn(c) for c in children])
    workers = os.cpu_count() if threads == 0 else threads
    chunk = max(1, trials // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return np.array(list(pool.map(fn, children, chunksize=chunk)))


def simulate(spec: CodebookSpec, beta: float, trials: int, seed: int, threads: int = 1,
             keep_values: bool = False, cap: int = ENUMERATION_CAP) -> EnsembleReport:
    """Annealed and quenched statistics of ``log Z_n`` over independent codebooks.

    Trial ``k`` uses the ``k``-th child of ``SeedSequence(seed)``, so the result
    does not depend on ``threads``.
    """
    if trials < 1:
        raise ValueError(f"trials must be at least 1, got {trials}")
    if not beta >= 0:
        raise ValueError(f"beta must be non-negative, got {beta}")
    _check_cap(spec.channel.ny, spec.n, cap)
    n = spec.n
    if beta == 1.0:
        log_z = np.zeros(trials)
    else:
        log_z = _run_trials(spec, beta, trials, seed, threads, cap)
    log_mean = float(logsumexp(log_z) - math.log(trials))
    u = log_z / n
    if trials > 1:
        # delta method: sd(log mean Z) ~ sd(Z) / (sqrt(T) mean Z)
        ratio = np.exp(log_z - log_mean)
        a_se = float(np.std(ratio, ddof=1) / math.sqrt(trials) / n)
        q_std = float(np.std(u, ddof=1))
    else:
        a_se = q_std = 0.0
    return EnsembleReport(
        spec=spec, beta=beta, trials=trials,
        annealed_exponent=log_mean / n, annealed_stderr=a_se,
        quenched_mean=float(np.mean(u)), quenched_std=q_std,
        quenched_stderr=q_std / math.sqrt(trials), seed=seed,
        values=u if keep_values else None,
    )


def _require_contrast(spec):
    if spec.M < 2:
        raise ValueError("annealed/quenched estimates need M >= 2; "
                         "M = 1 is the single-codeword closed form")


def estimate_annealed(spec: CodebookSpec, beta: float, trials: int, seed: int,
                      threads: int = 1, keep_values: bool = False) -> EnsembleReport:
    """``(1/n) log`` of the sample mean of ``Z_n`` with a delta-method standard error."""
    _require_contrast(spec)
    return simulate(spec, beta, trials, seed, threads, keep_values)


def estimate_quenched(spec: CodebookSpec, beta: float, trials: int, seed: int,
                      threads: int = 1, keep_values: bool = False) -> EnsembleReport:
    """Sample mean and spread of ``(1/n) log Z_n``."""
    _require_contrast(spec)
    return simulate(spec, beta, trials, seed, threads, keep_values)


# -- type-class enumerator ------------------------------------------------------

def joint_type_counts(x, y, nx: int, ny: int) -> np.ndarray:
    return np.bincount(np.asarray(x) * ny + np.asarray(y), minlength=nx * ny).reshape(nx, ny)


def _joint_mi(counts):
    q = counts / counts.sum()
    qx, qy = q.sum(axis=1, keepdims=True), q.sum(axis=0, keepdims=True)
    nz = q > 0
    return float((q[nz] * np.log(q[nz] / (qx @ qy)[nz])).sum())


def conditional_type_probability(counts) -> float:
    """Chance that a uniform draw from ``T(Q_X)`` has joint type ``counts`` with a
    fixed ``y`` of type ``Q_Y``: ``prod_y multinomial(n_y; n_.y) / multinomial(n; n_x.)``."""
    counts = np.asarray(counts, dtype=int)
    num = 1
    for col in counts.T:
        num *= _multinomial(col)
    return num / _multinomial(counts.sum(axis=1))


def _multinomial(parts) -> int:
    out, total = 1, 0
    for k in parts:
        k = int(k)
        total += k
        out *= math.comb(total, k)
    return out


@dataclass
class EnumeratorReport:
    spec: CodebookSpec
    joint_counts: np.ndarray
    beta: float
    trials: int
    seed: int
    p: float
    empirical_moment: float
    empirical_stderr: float
    exact_moment: float
    asymptotic_exponent: float
    mutual_info: float

    def row(self) -> dict:
        n = self.spec.n
        log_emp = math.log(self.empirical_moment) / n if self.empirical_moment > 0 else -math.inf
        return {
            "n": n, "M": self.spec.M, "R": self.spec.rate, "beta": self.beta,
            "I_Q": self.mutual_info, "p": self.p, "trials": self.trials,
            "empirical_moment": self.empirical_moment, "empirical_stderr": self.empirical_stderr,
            "exact_moment": self.exact_moment,
            "empirical_exponent": log_emp,
            "exact_exponent": math.log(self.exact_moment) / n,
            "asymptotic_exponent": self.asymptotic_exponent, "seed": self.seed,
        }


def binomial_moment_exponent(A: float, B: float, beta: float) -> float:
    """Exponent of ``E[N^beta]`` for ``N ~ Binomial(e^{nA}, e^{-nB})``."""
    return beta * (A - B) if A > B else -(B - A)


def enumerator_moment(spec: CodebookSpec, y_ref, joint_counts, beta: float, trials: int,
                      seed: int) -> EnumeratorReport:
    """Empirical ``E[N(Q|y)^beta]`` over random codebooks versus its exact value.

    ``joint_counts[x, y]`` is the joint type in counts; its row sums must be the
    codebook composition and its column sums the type of ``y_ref``.
    """
    from .oracle import exact_binomial_moment

    ch = spec.channel
    y_ref = np.asarray(y_ref, dtype=int)
    counts = np.asarray(joint_counts)
    if counts.shape != (ch.nx, ch.ny) or np.any(counts < 0) \
            or np.any(counts != np.round(counts)):
        raise InvalidTypeError(f"joint type must be a non-negative integer {ch.nx}x{ch.ny} table")
    counts = counts.astype(int)
    if y_ref.shape != (spec.n,) or y_ref.min() < 0 or y_ref.max() >= ch.ny:
        raise InvalidTypeError(f"y_ref must be a length-{spec.n} sequence over the outputs")
    if tuple(counts.sum(axis=1)) != spec.composition:
        raise InvalidTypeError(f"joint type rows {counts.sum(axis=1)} differ from the "
                               f"composition {spec.composition}")
    if np.any(counts.sum(axis=0) != np.bincount(y_ref, minlength=ch.ny)):
        raise InvalidTypeError("joint type columns differ from the type of y_ref")
    if trials < 1:
        raise ValueError(f"trials must be at least 1, got {trials}")

    children = np.random.SeedSequence(seed).spawn(trials)
    moments = np.empty(trials)
    target = counts.ravel()
    for k, child in enumerate(children):
        book = sample_codebook(spec, np.random.default_rng(child))
        codes = book * ch.ny + y_ref[None, :]
        hits = np.zeros((spec.M, ch.nx * ch.ny), dtype=int)
        np.add.at(hits, (np.repeat(np.arange(spec.M), spec.n), codes.ravel()), 1)
        N = int(np.count_nonzero(np.all(hits == target, axis=1)))
        moments[k] = float(N) ** beta if N > 0 else 0.0
    p = conditional_type_probability(counts)
    I_Q = _joint_mi(counts)
    se = float(np.std(moments, ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return EnumeratorReport(
        spec=spec, joint_counts=counts, beta=beta, trials=trials, seed=seed, p=p,
        empirical_moment=float(np.mean(moments)), empirical_stderr=se,
        exact_moment=exact_binomial_moment(spec.M, p, beta),
        asymptotic_exponent=binomial_moment_exponent(spec.rate, I_Q, beta), mutual_info=I_Q,
    )
