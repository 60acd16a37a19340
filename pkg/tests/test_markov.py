import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ergotree.errors import AmbiguousStationary, NoReturnObserved
from ergotree.markov import (
    Finite,
    MarkovChain,
    block_stationary,
    cylinder_measure,
    expected_return_time,
    finfty_chain,
    finfty_entry,
    finfty_stationary,
    finfty_tail_mass,
    is_irreducible,
    sample_path,
    stationarity_residual,
    stationary_distribution,
    survival_recurrence,
    two_state_chain,
    uniform_chain,
    uniform_free_chain,
)
from ergotree.words import is_reduced

TWO_STATE = [[0.9, 0.1], [0.4, 0.6]]


def test_stationary_two_state():
    pi = stationary_distribution(Finite(TWO_STATE))
    np.testing.assert_allclose(pi, [0.8, 0.2], atol=1e-12)


def test_stationary_uniform_and_free_chain():
    np.testing.assert_allclose(stationary_distribution(np.full((5, 5), 0.2)), np.full(5, 0.2), atol=1e-12)
    chain = uniform_free_chain(2)
    pi = stationary_distribution(chain.matrix)
    np.testing.assert_allclose(pi, np.full(4, 0.25), atol=1e-12)
    assert stationarity_residual(chain.matrix, pi) <= 1e-12


def test_reducible_matrix_is_ambiguous():
    with pytest.raises(AmbiguousStationary):
        stationary_distribution(np.eye(2))
    pi = block_stationary(np.eye(2), [[0], [1]], [0.3, 0.7])
    np.testing.assert_allclose(pi, [0.3, 0.7])


def test_irreducibility():
    assert is_irreducible(TWO_STATE)
    assert not is_irreducible(np.eye(2))
    assert is_irreducible(uniform_free_chain(2).matrix)


def test_row_validation():
    with pytest.raises(ValueError):
        Finite([[0.5, 0.4], [0.5, 0.5]])
    with pytest.raises(ValueError):
        Finite([[1.1, -0.1], [0.5, 0.5]])


def test_chain_validation():
    with pytest.raises(ValueError):
        MarkovChain(Finite(TWO_STATE), [0.5, 0.5], stationary=True)
    with pytest.raises(ValueError):
        MarkovChain(Finite(TWO_STATE), [1.0, 0.0])
    assert not MarkovChain.from_matrix(TWO_STATE, [0.5, 0.5]).stationary


def test_cylinder_measure_examples():
    assert cylinder_measure(uniform_chain(2), (0, 1)) == pytest.approx(0.25)
    assert cylinder_measure(two_state_chain(), (0, 0, 1)) == pytest.approx(0.072)
    assert cylinder_measure(two_state_chain(), ()) == 1.0


@pytest.mark.parametrize("length", range(1, 7))
def test_cylinder_measure_factorises(length):
    chain = two_state_chain()
    total = 0.0
    for w in itertools.product(range(2), repeat=length):
        p = cylinder_measure(chain, w)
        total += p
        if length >= 2:
            # P[i j w] = pi(i) P(i, j) P_j[j w]
            tail = cylinder_measure(chain, w[1:]) / chain.pi(w[1])
            assert p == pytest.approx(chain.pi(w[0]) * chain.P(w[0], w[1]) * tail, rel=1e-12)
    assert total == pytest.approx(1.0, abs=1e-12)


def test_sample_path_first_symbol_frequencies():
    chain = two_state_chain()
    rng = np.random.default_rng(0)
    first = chain.sample_initial(rng, 100_000)
    freq = np.mean(first == 0)
    assert abs(freq - 0.8) <= 3 * math.sqrt(0.8 * 0.2 / 100_000)


def test_sample_path_deterministic():
    a = sample_path(uniform_chain(2), 8, 42)
    assert a == sample_path(uniform_chain(2), 8, 42) and len(a) == 8


def test_finfty_sample_is_reduced():
    path = sample_path(finfty_chain(), 10, 7)
    assert len(path) == 10 and is_reduced(path)


@given(st.integers(0, 2**31), st.integers(2, 40))
def test_finfty_paths_never_backtrack(seed, length):
    assert is_reduced(sample_path(finfty_chain(), length, seed))


def test_finfty_rows():
    for i in range(6):
        assert finfty_entry(i, i ^ 1) == 0.0
        assert 1 - math.fsum(finfty_entry(i, j) for j in range(41)) <= 1e-9
    assert finfty_chain().matrix.row_partial_sum(3, 60) == pytest.approx(1.0, abs=1e-15)


def test_finfty_sampler_matches_row():
    chain = finfty_chain()
    rng = np.random.default_rng(5)
    nxt = chain.matrix.sample_next(np.full(200_000, 2), rng)
    for j in range(6):
        p = finfty_entry(2, j)
        assert abs(np.mean(nxt == j) - p) <= 4 * math.sqrt(p * (1 - p) / 200_000) + 1e-12


def test_finfty_stationary_exact():
    pi = finfty_stationary(40)
    assert pi[0] == pytest.approx(0.4, abs=1e-12)
    assert pi[1] == pytest.approx(0.2, abs=1e-12)
    # stationarity on the first coordinates, tail rows contribute 2^-(j+1) each
    tail = finfty_tail_mass(40)
    for j in range(10):
        flow = math.fsum(pi[i] * finfty_entry(i, j) for i in range(40)) + tail * 2.0 ** -(j + 1)
        assert flow == pytest.approx(pi[j], abs=1e-12)
    assert finfty_stationary(20)[:10] == pytest.approx(pi[:10], abs=1e-14)


def test_return_time_two_state():
    stats = expected_return_time(two_state_chain(), 0, sample_count=100_000, rng_seed=1)
    assert abs(stats.mean_return - 1.25) <= 3 * stats.std_error
    stats = expected_return_time(uniform_chain(2), 0, sample_count=100_000, rng_seed=2)
    assert abs(stats.mean_return - 2.0) <= 3 * stats.std_error


def test_return_time_stats_shape():
    stats = expected_return_time(two_state_chain(), 1, sample_count=5_000, rng_seed=3, survival_depth=6)
    assert stats.survival[1] == 1.0
    assert np.all(np.diff(stats.survival) <= 0)
    assert stats.censored_fraction == 0.0


def test_no_return_observed():
    # state 1 can leave to 0 forever
    chain = MarkovChain(Finite([[1.0, 0.0], [1.0, 0.0]]), [0.5, 0.5])
    with pytest.raises(NoReturnObserved):
        expected_return_time(chain, 1, max_horizon=5, sample_count=10)


def test_survival_recurrence_values():
    rec = survival_recurrence(5)
    assert (rec.q[1], rec.r[1], rec.p[2]) == (0, Fraction(1, 2), Fraction(1, 2))
    assert rec.q[2] == rec.r[2] == Fraction(1, 8)
    assert rec.p[3] == Fraction(1, 4)
    assert rec.q[5] == rec.r[5] == Fraction(3, 4) ** 3 / 8
    assert rec.p[6] == Fraction(3, 4) ** 3 / 4


def test_survival_recurrence_gives_mean_five_halves():
    rec = survival_recurrence(200)
    mean = sum(float(rec.p[k]) for k in range(1, 201))
    assert mean == pytest.approx(2.5, abs=1e-20 + 1e-12)


def test_finfty_survival_matches_recurrence():
    stats = expected_return_time(finfty_chain(), 0, sample_count=100_000, rng_seed=11, survival_depth=8)
    rec = survival_recurrence(8)
    for k in range(1, 9):
        p = float(rec.p[k])
        se = math.sqrt(p * (1 - p) / stats.samples)
        assert abs(stats.survival[k] - p) <= 3 * se + 1e-12
