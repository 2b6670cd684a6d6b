import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chisquare

from oracles import brute_log_z
from rcphase.dmc import Channel
from rcphase.ensemble import (CapExceededError, CodebookSpec, InvalidTypeError, codebook_size,
                              enumerator_moment, estimate_annealed, estimate_quenched,
                              joint_type_counts, largest_remainder, log_partition,
                              output_mixture, sample_codebook, sample_codeword, simulate)
from rcphase.solver import c_beta


# -- composition and sizes --------------------------------------------------------

def test_largest_remainder_sums_and_rounds():
    assert largest_remainder([0.5, 0.5], 3) == (2, 1)
    assert largest_remainder([0.2, 0.3, 0.5], 7) == (1, 2, 4)
    assert largest_remainder([1 / 3] * 3, 10) == (4, 3, 3)


@given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=5), st.integers(1, 40))
def test_largest_remainder_is_within_one_per_letter(raw, n):
    p = np.array(raw) / sum(raw)
    c = np.array(largest_remainder(p, n))
    assert c.sum() == n
    assert np.all(np.abs(c - n * p) < 1)


def test_codebook_size_floor():
    assert codebook_size(4, math.log(3) / 4) == 3
    assert codebook_size(10, 0.1) == 2
    assert codebook_size(8, 0.0) == 1
    assert codebook_size(12, 0.25) == math.floor(math.exp(3.0))


def test_spec_validation(zch):
    with pytest.raises(ValueError):
        CodebookSpec(zch, 4, 0, (2, 2))
    with pytest.raises(ValueError):
        CodebookSpec(zch, 4, 2, (1, 2))
    with pytest.raises(ValueError):
        CodebookSpec(zch, 4, 2, (4, 0))
    spec = CodebookSpec.from_rate(zch, 8, 0.2)
    assert spec.M == 4 and spec.composition == (4, 4) and spec.rate == 0.2


def test_effective_channel_uses_rounded_composition():
    ch = Channel([[0.9, 0.1], [0.2, 0.8]], [0.3, 0.7])
    spec = CodebookSpec.from_size(ch, 4, 2)
    np.testing.assert_allclose(spec.effective_channel.p_x, [0.25, 0.75])


# -- sampling ---------------------------------------------------------------------

def test_codeword_has_exact_composition(zch):
    spec = CodebookSpec.from_size(zch, 10, 3)
    rng = np.random.default_rng(0)
    for _ in range(20):
        assert np.bincount(sample_codeword(spec, rng), minlength=2).tolist() == [5, 5]
    book = sample_codebook(spec, rng)
    assert book.shape == (3, 10)
    assert np.all(book.sum(axis=1) == 5)


def test_codeword_n2_covers_both_arrangements(zch):
    spec = CodebookSpec.from_size(zch, 2, 1)
    rng = np.random.default_rng(1)
    seen = {tuple(sample_codeword(spec, rng)) for _ in range(50)}
    assert seen == {(0, 1), (1, 0)}


def test_codeword_uniform_over_type_class(zch):
    spec = CodebookSpec.from_size(zch, 4, 1)
    rng = np.random.default_rng(2024)
    draws = 60000
    counts = {}
    for _ in range(draws):
        key = tuple(sample_codeword(spec, rng))
        counts[key] = counts.get(key, 0) + 1
    assert len(counts) == 6
    obs = np.array(list(counts.values()))
    sigma = math.sqrt(draws * (1 / 6) * (5 / 6))
    assert np.all(np.abs(obs - draws / 6) < 3 * sigma + 1)
    assert chisquare(obs).pvalue > 1e-3


def test_codeword_single_letter():
    ch = Channel([[0.3, 0.7]], [1.0])
    spec = CodebookSpec.from_size(ch, 5, 2)
    assert sample_codeword(spec, np.random.default_rng(0)).tolist() == [0] * 5


# -- partition function -----------------------------------------------------------

def test_log_z_vanishes_at_beta_one(zch):
    rng = np.random.default_rng(3)
    spec = CodebookSpec.from_size(zch, 6, 5)
    for _ in range(5):
        assert log_partition(sample_codebook(spec, rng), zch, 1.0) == 0.0


def test_normalization_holds_numerically(ternary):
    spec = CodebookSpec.from_size(ternary, 5, 4)
    book = sample_codebook(spec, np.random.default_rng(5))
    assert math.fsum(output_mixture(book, ternary)) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("beta", [0.5, 2.0, 3.0])
def test_single_codeword_factorizes(zch, beta):
    spec = CodebookSpec.from_size(zch, 6, 1)
    word = sample_codeword(spec, np.random.default_rng(4))
    assert log_partition(word, zch, beta) == pytest.approx(6 * c_beta(zch, beta), abs=1e-12)


@pytest.mark.parametrize("beta", [0.0, 0.5, 2.0, 4.0])
def test_log_z_matches_brute_force(ternary, beta):
    spec = CodebookSpec.from_size(ternary, 4, 3)
    rng = np.random.default_rng(6)
    for _ in range(3):
        book = sample_codebook(spec, rng)
        assert log_partition(book, ternary, beta) == pytest.approx(
            brute_log_z(book, ternary.W, beta), abs=1e-10)


def test_log_and_linear_mixtures_agree(zch):
    spec = CodebookSpec.from_size(zch, 7, 4)
    book = sample_codebook(spec, np.random.default_rng(7))
    lin = output_mixture(book, zch)
    with np.errstate(divide="ignore"):
        np.testing.assert_allclose(np.exp(output_mixture(book, zch, log=True)), lin,
                                   rtol=1e-12, atol=1e-300)


def test_large_beta_approaches_the_mode(zch):
    spec = CodebookSpec.from_size(zch, 6, 3)
    book = sample_codebook(spec, np.random.default_rng(8))
    log_mode = math.log(output_mixture(book, zch).max())
    scaled = [log_partition(book, zch, b) / b for b in (8, 32, 128, 512)]
    assert all(b <= a + 1e-12 for a, b in zip(scaled, scaled[1:]))
    assert scaled[-1] - log_mode <= 6 * math.log(2) / 512 + 1e-12
    assert scaled[-1] >= log_mode - 1e-12


@settings(max_examples=25)
@given(st.integers(0, 2 ** 31))
def test_renyi_rate_non_increasing_in_order(seed):
    ch = Channel([[0.8, 0.15, 0.05], [0.1, 0.6, 0.3]], [0.5, 0.5])
    spec = CodebookSpec.from_size(ch, 4, 3)
    book = sample_codebook(spec, np.random.default_rng(seed))
    rates = [log_partition(book, ch, b) / (1 - b) / 4 for b in (0.5, 1.5, 2.0, 4.0)]
    assert all(b <= a + 1e-12 for a, b in zip(rates, rates[1:]))


def test_cap_is_enforced(zch):
    book = np.zeros((1, 12), dtype=int)
    with pytest.raises(CapExceededError) as err:
        log_partition(book, zch, 2.0, cap=1000)
    assert err.value.size == 4096
    spec = CodebookSpec.from_size(zch, 12, 2)
    with pytest.raises(CapExceededError):
        simulate(spec, 2.0, 1, 0, cap=1000)


# -- ensemble estimates -----------------------------------------------------------

def test_beta_one_is_exactly_zero(zch):
    spec = CodebookSpec.from_size(zch, 6, 3)
    for fn in (estimate_annealed, estimate_quenched):
        r = fn(spec, 1.0, 50, 1)
        assert r.annealed_exponent == 0.0 and r.quenched_mean == 0.0
        assert r.quenched_std == 0.0 and r.annealed_stderr == 0.0


def test_contrast_needs_two_codewords(zch):
    spec = CodebookSpec.from_size(zch, 6, 1)
    with pytest.raises(ValueError):
        estimate_annealed(spec, 2.0, 10, 0)
    with pytest.raises(ValueError):
        estimate_quenched(spec, 2.0, 10, 0)


def test_trials_must_be_positive(zch):
    with pytest.raises(ValueError):
        simulate(CodebookSpec.from_size(zch, 4, 2), 2.0, 0, 0)


@pytest.mark.parametrize("beta", [0.5, 2.0, 3.0])
def test_jensen_gap_is_non_negative(zch, beta):
    r = estimate_quenched(CodebookSpec.from_rate(zch, 8, 0.2), beta, 300, 11)
    assert r.jensen_slack() >= 0
    assert r.quenched_mean <= r.annealed_exponent + 1e-12


def test_reports_reproduce_bit_for_bit(zch):
    spec = CodebookSpec.from_rate(zch, 8, 0.2)
    a = simulate(spec, 2.0, 40, 99, keep_values=True)
    b = simulate(spec, 2.0, 40, 99, keep_values=True)
    c = simulate(spec, 2.0, 40, 99, threads=2, keep_values=True)
    assert a.row() == b.row() == c.row()
    assert np.array_equal(a.values, c.values)
    assert simulate(spec, 2.0, 40, 100).row() != a.row()


def test_sparse_regime_inflates_the_annealed_value(zch):
    # beta = 2, R = 0.1 < R*(2): rare codebooks with a repeated word lift the mean of Z
    sparse = estimate_quenched(CodebookSpec.from_rate(zch, 8, 0.1), 2.0, 20000, 5)
    bulk = estimate_quenched(CodebookSpec.from_rate(zch, 8, 0.35), 2.0, 4000, 5)
    gap = sparse.annealed_exponent - sparse.quenched_mean
    assert gap > 3 * math.hypot(sparse.annealed_stderr, sparse.quenched_stderr)
    assert gap > bulk.annealed_exponent - bulk.quenched_mean


# -- enumerator -------------------------------------------------------------------

def _setup_enumerator(zch, n, M):
    spec = CodebookSpec.from_size(zch, n, M)
    y = np.array([0] * (3 * n // 4) + [1] * (n - 3 * n // 4))
    x = np.array([0] * (n // 2) + [1] * (n // 2))
    return spec, y, joint_type_counts(x, y, 2, 2)


def test_enumerator_mean_is_m_times_p(zch):
    spec, y, counts = _setup_enumerator(zch, 8, 6)
    rep = enumerator_moment(spec, y, counts, 1.0, 400, 3)
    assert rep.exact_moment == pytest.approx(spec.M * rep.p, rel=1e-15)
    assert abs(rep.empirical_moment - rep.exact_moment) < 4 * rep.empirical_stderr


def test_enumerator_p_counts_sequences(zch):
    spec, y, counts = _setup_enumerator(zch, 4, 2)
    hits = sum(np.array_equal(joint_type_counts(np.array(x), y, 2, 2), counts)
               for x in set(itertools.permutations([0, 0, 1, 1])))
    rep = enumerator_moment(spec, y, counts, 2.0, 10, 0)
    assert rep.p == pytest.approx(hits / 6, abs=1e-15)


@pytest.mark.parametrize("beta", [0.5, 2.0])
def test_enumerator_matches_exact_moment(zch, beta):
    spec, y, counts = _setup_enumerator(zch, 8, 20)
    rep = enumerator_moment(spec, y, counts, beta, 3000, 8)
    assert abs(rep.empirical_moment - rep.exact_moment) < 4 * rep.empirical_stderr


def test_enumerator_rejects_unrealizable_types(zch):
    spec, y, counts = _setup_enumerator(zch, 8, 4)
    # rows no longer match the composition
    with pytest.raises(InvalidTypeError):
        enumerator_moment(spec, y, counts + [[1, 0], [0, 0]], 2.0, 10, 0)
    # columns no longer match the type of y
    with pytest.raises(InvalidTypeError):
        enumerator_moment(spec, np.zeros(8, dtype=int), counts, 2.0, 10, 0)
    with pytest.raises(InvalidTypeError):
        enumerator_moment(spec, y, [[4.5, -0.5], [2, 2]], 2.0, 10, 0)
    with pytest.raises(InvalidTypeError):
        enumerator_moment(spec, y[:4], counts, 2.0, 10, 0)
