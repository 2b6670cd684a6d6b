"""Brute-force ground truth at tiny block length.

Two independent routes to ``E_C[Z_n(beta | C)]``:

* ``exact_annealed_enum`` lists every codebook of ``M`` codewords from the
  type class and averages its exact partition function;
* ``exact_annealed_atoms`` never forms a codebook. For each output type it
  builds the law of a single codeword's likelihood (an :class:`AtomLaw`) and
  takes the exact expectation of ``S^beta`` over multinomial allocations of
  the ``M`` codewords to atoms.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from .ensemble import CodebookSpec, _multinomial, conditional_type_probability

ENUM_CAP = 10 ** 7
ALLOCATION_CAP = 10 ** 7
BINOMIAL_TRIALS_CAP = 10 ** 6


class FeasibilityError(ValueError):
    """The exact computation is too large to carry out."""


def type_class_size(composition) -> int:
    return _multinomial(composition)


def type_class(composition) -> np.ndarray:
    """Every sequence with the given letter counts, lexicographically ordered."""
    base = np.repeat(np.arange(len(composition)), composition)
    return np.array(sorted(set(itertools.permutations(base.tolist()))), dtype=int)


def _likelihoods(words, W, n):
    """``W^n(y | x)`` for each word (rows) and every ``y`` in lexicographic order."""
    ny = W.shape[1]
    ys = np.array(list(itertools.product(range(ny), repeat=n)), dtype=int)
    return np.prod(W[words[:, None, :], ys[None, :, :]], axis=2)


def exact_annealed_enum(spec: CodebookSpec, beta: float) -> float:
    """``(1/n) log`` of the exact average of ``Z_n(beta)`` over all ``|T|^M`` codebooks."""
    if beta == 1.0:
        return 0.0
    size = type_class_size(spec.composition)
    if size ** spec.M > ENUM_CAP:
        raise FeasibilityError(f"|T|^M = {size}^{spec.M} exceeds the enumeration cap {ENUM_CAP}")
    words = type_class(spec.composition)
    A = _likelihoods(words, spec.channel.W, spec.n)
    log_z = []
    for book in itertools.product(range(len(words)), repeat=spec.M):
        P = A[list(book)].mean(axis=0)
        P = P[P > 0]
        log_z.append(logsumexp(beta * np.log(P)))
    return float((logsumexp(log_z) - spec.M * math.log(len(words))) / spec.n)


@dataclass(frozen=True)
class AtomLaw:
    """Law of ``W^n(y | X^n)`` for ``X^n`` uniform on the type class, one atom
    per conditional type class (all zero-likelihood classes merged)."""

    atoms: tuple
    context: tuple

    def __post_init__(self):
        total = math.fsum(p for _, p in self.atoms)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"atom probabilities sum to {total}")

    @property
    def values(self) -> np.ndarray:
        return np.array([v for v, _ in self.atoms])

    @property
    def probs(self) -> np.ndarray:
        return np.array([p for _, p in self.atoms])


def _tables(rows, cols):
    """Non-negative integer matrices with the given row and column sums."""
    if len(rows) == 1:
        yield np.array([cols])
        return
    first = rows[0]

    def fill(j, left, acc):
        if j == len(cols):
            if left == 0:
                yield acc
            return
        for k in range(min(left, cols[j]), -1, -1):
            yield from fill(j + 1, left - k, acc + [k])

    for head in fill(0, first, []):
        rest = [c - h for c, h in zip(cols, head)]
        for tail in _tables(rows[1:], rest):
            yield np.vstack([head, tail])


def atom_law(spec: CodebookSpec, y) -> AtomLaw:
    W = spec.channel.W
    y = np.asarray(y, dtype=int)
    cols = np.bincount(y, minlength=W.shape[1]).tolist()
    atoms, zero = [], 0.0
    for counts in _tables(list(spec.composition), cols):
        p = conditional_type_probability(counts)
        support = counts > 0
        if np.any(W[support] == 0):
            zero += p
            continue
        v = float(np.prod(W[support] ** counts[support]))
        atoms.append((v, p))
    if zero > 0:
        atoms.append((0.0, zero))
    return AtomLaw(tuple(atoms), tuple(int(t) for t in y))


def _allocations(M, a):
    """All ``k`` in N^a with ``sum k = M`` as rows (stars and bars)."""
    out = []
    for bars in itertools.combinations(range(M + a - 1), a - 1):
        edges = (-1, *bars, M + a - 1)
        out.append([edges[i + 1] - edges[i] - 1 for i in range(a)])
    return np.array(out, dtype=float).reshape(-1, a)


def expected_power_of_sum(law: AtomLaw, M: int, beta: float) -> float:
    """``E[S^beta]`` for ``S`` a sum of ``M`` i.i.d. draws from ``law``, returned as a log."""
    a = len(law.atoms)
    if math.comb(M + a - 1, a - 1) > ALLOCATION_CAP:
        raise FeasibilityError(f"C(M+a-1, a-1) = {math.comb(M + a - 1, a - 1)} allocations "
                               f"exceed the cap {ALLOCATION_CAP}")
    K = _allocations(M, a)
    with np.errstate(divide="ignore"):
        log_p = np.log(law.probs)
        log_w = gammaln(M + 1) - gammaln(K + 1).sum(axis=1) \
            + np.where(K > 0, K * log_p, 0.0).sum(axis=1)
        S = K @ law.values
        keep = S > 0
        if beta == 0:
            return float(logsumexp(log_w[keep]))
        return float(logsumexp(log_w[keep] + beta * np.log(S[keep])))


def exact_annealed_atoms(spec: CodebookSpec, beta: float) -> float:
    """``(1/n) log sum_y M^{-beta} E[S(y)^beta]`` with ``S(y) = sum_m W^n(y | x_m)``.

    ``E[S(y)^beta]`` depends on ``y`` only through its type, so one atom law is
    built per output type and weighted by the size of that type class.
    """
    if beta == 1.0:
        return 0.0
    n, ny = spec.n, spec.channel.ny
    terms = []
    for comp in _compositions(n, ny):
        y = np.repeat(np.arange(ny), comp)
        law = atom_law(spec, y)
        terms.append(math.log(_multinomial(comp)) + expected_power_of_sum(law, spec.M, beta))
    return float((logsumexp(terms) - beta * math.log(spec.M)) / n)


def _compositions(n, parts):
    for bars in itertools.combinations(range(n + parts - 1), parts - 1):
        edges = (-1, *bars, n + parts - 1)
        yield [edges[i + 1] - edges[i] - 1 for i in range(parts)]


def exact_binomial_moment(trials: int, p: float, beta: float) -> float:
    """``E[N^beta]`` for ``N ~ Binomial(trials, p)`` by direct summation in the log domain."""
    trials = int(trials)
    if trials < 0 or trials > BINOMIAL_TRIALS_CAP:
        raise FeasibilityError(f"trials must lie in [0, {BINOMIAL_TRIALS_CAP}], got {trials}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be a probability, got {p}")
    if beta == 1.0:
        return trials * p
    if trials == 0 or p == 0.0:
        return 0.0 if beta > 0 else 1.0
    if p == 1.0:
        return float(trials) ** beta
    k = np.arange(1, trials + 1, dtype=float)
    log_pmf = (gammaln(trials + 1) - gammaln(k + 1) - gammaln(trials - k + 1)
               + k * math.log(p) + (trials - k) * math.log1p(-p))
    total = float(np.exp(logsumexp(log_pmf + beta * np.log(k))))
    if beta == 0:
        total += math.exp(trials * math.log1p(-p))
    return total
