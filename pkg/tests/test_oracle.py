import itertools
import math

import numpy as np
import pytest

from oracles import binomial_moment_direct
from rcphase.dmc import Channel
from rcphase.ensemble import CodebookSpec, binomial_moment_exponent
from rcphase.oracle import (AtomLaw, FeasibilityError, atom_law, exact_annealed_atoms,
                            exact_annealed_enum, exact_binomial_moment, expected_power_of_sum,
                            type_class, type_class_size)
from rcphase.solver import c_beta


def word_likelihoods(composition, W, y):
    """``W^n(y|x)`` for every arrangement ``x`` of the composition, by brute force."""
    base = [a for a, c in enumerate(composition) for _ in range(c)]
    words = set(itertools.permutations(base))
    return np.array([np.prod([W[a, b] for a, b in zip(x, y)]) for x in words])


def integer_moment_exponent(spec, beta):
    """Annealed exponent for integer beta in {2, 3} from the expansion of ``(sum_m V_m)^beta``."""
    M, n = spec.M, spec.n
    total = 0.0
    for y in itertools.product(range(spec.channel.ny), repeat=n):
        v = word_likelihoods(spec.composition, spec.channel.W, y)
        m1, m2, m3 = v.mean(), (v ** 2).mean(), (v ** 3).mean()
        if beta == 2:
            s = M * m2 + M * (M - 1) * m1 ** 2
        else:
            s = M * m3 + 3 * M * (M - 1) * m2 * m1 + M * (M - 1) * (M - 2) * m1 ** 3
        total += s / M ** beta
    return math.log(total) / n


@pytest.fixture
def skewed():
    return Channel([[0.7, 0.2, 0.1], [0.1, 0.3, 0.6]], [0.5, 0.5])


def test_type_class_listing():
    assert type_class_size((2, 2)) == 6
    assert type_class((1, 1)).tolist() == [[0, 1], [1, 0]]
    words = type_class((2, 1, 1))
    assert len(words) == type_class_size((2, 1, 1)) == 12
    assert all(np.bincount(w, minlength=3).tolist() == [2, 1, 1] for w in words)


def test_beta_one_is_zero(zch):
    spec = CodebookSpec.from_size(zch, 4, 2)
    assert exact_annealed_enum(spec, 1.0) == 0.0
    assert exact_annealed_atoms(spec, 1.0) == 0.0


def test_z_channel_n2_m2_by_hand(zch):
    # the four codebooks over {01, 10}: two repeat a word, two use both
    spec = CodebookSpec.from_size(zch, 2, 2)
    W = zch.W

    def z2(book):
        P = {}
        for y in itertools.product(range(2), repeat=2):
            P[y] = np.mean([W[x[0], y[0]] * W[x[1], y[1]] for x in book])
        return sum(p ** 2 for p in P.values())
    books = list(itertools.product([(0, 1), (1, 0)], repeat=2))
    expected = math.log(np.mean([z2(b) for b in books])) / 2
    assert exact_annealed_enum(spec, 2.0) == pytest.approx(expected, abs=1e-14)
    assert exact_annealed_atoms(spec, 2.0) == pytest.approx(expected, abs=1e-14)


@pytest.mark.parametrize("n,M", [(2, 2), (2, 3), (3, 2), (3, 3), (4, 2), (4, 3)])
@pytest.mark.parametrize("beta", [0.5, 2.0, 3.7])
def test_two_exact_routes_agree(zch, n, M, beta):
    spec = CodebookSpec.from_size(zch, n, M)
    assert exact_annealed_atoms(spec, beta) == pytest.approx(exact_annealed_enum(spec, beta),
                                                             abs=1e-10)


@pytest.mark.parametrize("beta", [0.5, 2.5])
def test_two_exact_routes_agree_ternary_output(skewed, beta):
    spec = CodebookSpec.from_size(skewed, 4, 2)
    assert exact_annealed_atoms(spec, beta) == pytest.approx(exact_annealed_enum(spec, beta),
                                                             abs=1e-10)


@pytest.mark.parametrize("beta", [2, 3])
def test_integer_beta_expansion(skewed, zch, beta):
    for ch, n, M in [(zch, 4, 3), (skewed, 4, 2), (skewed, 3, 4)]:
        spec = CodebookSpec.from_size(ch, n, M)
        assert exact_annealed_atoms(spec, float(beta)) == pytest.approx(
            integer_moment_exponent(spec, beta), abs=1e-12)


def test_single_codeword_is_per_letter(zch):
    for beta in (0.5, 2.0):
        spec = CodebookSpec.from_size(zch, 4, 1)
        assert exact_annealed_atoms(spec, beta) == pytest.approx(c_beta(zch, beta), abs=1e-12)
        assert exact_annealed_enum(spec, beta) == pytest.approx(c_beta(zch, beta), abs=1e-12)


def test_atom_law_sums_to_one(skewed):
    spec = CodebookSpec.from_size(skewed, 4, 2)
    for y in itertools.product(range(3), repeat=4):
        law = atom_law(spec, y)
        assert math.fsum(law.probs) == pytest.approx(1.0, abs=1e-12)
        v = word_likelihoods(spec.composition, skewed.W, y)
        assert float(law.probs @ law.values) == pytest.approx(v.mean(), rel=1e-12)


def test_atom_law_merges_zero_likelihood_words(zch):
    # y = 11 needs x = 11, which is outside the type class, so every word has likelihood 0
    law = atom_law(CodebookSpec.from_size(zch, 2, 1), (1, 1))
    assert len(law.atoms) == 1
    assert law.atoms[0][0] == 0.0


def test_atom_law_rejects_bad_probabilities():
    with pytest.raises(ValueError):
        AtomLaw(((1.0, 0.5), (2.0, 0.4)), (0,))


def test_power_of_sum_single_draw():
    law = AtomLaw(((1.0, 0.25), (3.0, 0.75)), ())
    assert math.exp(expected_power_of_sum(law, 1, 2.0)) == pytest.approx(0.25 + 0.75 * 9)
    # two draws: sums 2, 4, 6 with probs 1/16, 6/16, 9/16
    assert math.exp(expected_power_of_sum(law, 2, 2.0)) == pytest.approx(
        (4 + 6 * 16 + 9 * 36) / 16)


def test_enumeration_cap(zch):
    spec = CodebookSpec.from_size(zch, 10, 4)
    with pytest.raises(FeasibilityError):
        exact_annealed_enum(spec, 2.0)


def test_allocation_cap():
    law = AtomLaw(tuple((float(i), 1 / 40) for i in range(40)), ())
    with pytest.raises(FeasibilityError):
        expected_power_of_sum(law, 60, 2.0)


# -- binomial moments -------------------------------------------------------------

def test_binomial_moment_examples():
    assert exact_binomial_moment(2, 0.5, 2.0) == pytest.approx(1.5, abs=1e-14)
    assert exact_binomial_moment(4, 0.5, 2.0) == pytest.approx(5.0, abs=1e-13)
    assert exact_binomial_moment(17, 0.3, 1.0) == 17 * 0.3


@pytest.mark.parametrize("trials,p,beta", [(7, 0.2, 0.5), (30, 0.05, 2.5), (12, 0.9, 3.0),
                                           (1, 0.4, 2.0), (25, 1e-4, 0.3)])
def test_binomial_moment_matches_direct_sum(trials, p, beta):
    assert exact_binomial_moment(trials, p, beta) == pytest.approx(
        binomial_moment_direct(trials, p, beta), rel=1e-12)


def test_binomial_moment_edges():
    assert exact_binomial_moment(0, 0.3, 2.0) == 0.0
    assert exact_binomial_moment(5, 0.0, 2.0) == 0.0
    assert exact_binomial_moment(5, 1.0, 2.0) == 25.0
    assert exact_binomial_moment(5, 0.3, 0.0) == pytest.approx(1.0, abs=1e-15)  # 0^0 = 1
    with pytest.raises(FeasibilityError):
        exact_binomial_moment(10 ** 7, 0.1, 2.0)
    with pytest.raises(ValueError):
        exact_binomial_moment(10, 1.5, 2.0)


@pytest.mark.parametrize("A,B", [(0.4, 0.2), (0.2, 0.4)])
@pytest.mark.parametrize("beta", [0.5, 2.0])
def test_binomial_moment_exponent_trend(A, B, beta):
    target = binomial_moment_exponent(A, B, beta)
    errs = []
    for n in range(4, 15, 2):
        m = exact_binomial_moment(round(math.exp(n * A)), math.exp(-n * B), beta)
        errs.append(abs(math.log(m) / n - target))
    assert errs[-1] < errs[0]
    assert errs[-1] < 0.15
