import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ergotree.markov import two_state_chain
from ergotree.systems import SymbolicPoint, bernoulli_system, block_chain_system, gauss_system, markov_shift_system
from ergotree.tiling import TileAssignment, greedy_tile, tile_heights, tiling_parameter_sweep
from ergotree.words import Alphabet, RightRootedTree, complete_tree

A2 = Alphabet(2)


def triangle(h, k=2):
    return complete_tree(Alphabet(k), h)


def test_stacked_triangles():
    b = bernoulli_system(2)
    x = SymbolicPoint((1, 1))
    r = greedy_tile(b, TileAssignment.constant(triangle(2)), 8, x, mode="explicit")
    assert r.coverage == 1.0
    assert sorted(r.tile_levels) == [0, 3, 6]
    r = greedy_tile(b, TileAssignment.constant(triangle(2)), 9, x, mode="explicit")
    assert r.coverage == 0.9
    assert sorted(r.tile_levels) == [0, 3, 6]
    assert r.untiled_band == pytest.approx(1.0) and r.untiled_overflow == 0.0
    assert all(len(root) in (0, 3, 6) for root, _ in r.tiles)


@pytest.mark.parametrize("N", range(6))
def test_singletons_cover_everything(N):
    r = greedy_tile(bernoulli_system(3), TileAssignment.constant(RightRootedTree([()])), N, SymbolicPoint((0,)))
    assert r.coverage == 1.0


def test_explicit_tiles_are_disjoint_and_fit():
    s = markov_shift_system(two_state_chain())
    assignment = TileAssignment.by_first_symbol([triangle(3), RightRootedTree([(), (0,), (1,), (0, 1)])])
    N = 9
    r = greedy_tile(s, assignment, N, SymbolicPoint((0,)), mode="explicit")
    seen = set()
    for root, _ in r.tiles:
        tree = assignment.tree_for((root + (0,))[:1])
        assert len(root) + tree.height <= N
        words = {v + root for v in tree}
        assert not (words & seen)
        seen |= words


def test_untiled_points_sit_in_the_top_band():
    # every untiled point either has a tile too tall to fit or sits within L levels of N
    b = bernoulli_system(2)
    assignment = TileAssignment.by_first_symbol([triangle(4), triangle(1)])
    N = 10
    r = greedy_tile(b, assignment, N, SymbolicPoint((1,)), mode="explicit")
    covered = set()
    for root, _ in r.tiles:
        covered |= {v + root for v in assignment.tree_for((root + (1,))[:1])}
    for n in range(N + 1):
        for code in range(2**n):
            w = tuple((code >> j) & 1 for j in range(n))
            if w not in covered:
                h = assignment.tree_for((w + (1,))[:1]).height
                assert n + h > N and n > N - assignment.max_height


@given(
    N=st.integers(0, 9),
    heights=st.tuples(st.integers(0, 3), st.integers(0, 3)),
    x0=st.integers(0, 1),
    chain=st.sampled_from(["bernoulli", "two_state"]),
)
def test_aggregate_matches_explicit(N, heights, x0, chain):
    s = bernoulli_system(2) if chain == "bernoulli" else markov_shift_system(two_state_chain())
    assignment = TileAssignment.by_first_symbol([triangle(h) for h in heights])
    x = SymbolicPoint((x0,))
    a = greedy_tile(s, assignment, N, x, mode="aggregate")
    e = greedy_tile(s, assignment, N, x, mode="explicit")
    assert a.coverage == pytest.approx(e.coverage, abs=1e-12)
    assert a.untiled_band == pytest.approx(e.untiled_band, abs=1e-12)
    assert a.untiled_overflow == pytest.approx(e.untiled_overflow, abs=1e-12)
    assert a.tile_levels == e.tile_levels
    assert a.total_weight == pytest.approx(N + 1, abs=1e-9)
    assert 0.0 <= a.coverage <= 1.0


@given(N=st.integers(0, 40), L=st.integers(0, 4))
def test_constant_tiles_leave_at_most_one_band(N, L):
    r = greedy_tile(bernoulli_system(2), TileAssignment.constant(triangle(L)), N, SymbolicPoint((0,)))
    assert r.coverage >= 1 - L / (N + 1) - 1e-12


def test_coverage_is_not_monotone_in_N():
    b = bernoulli_system(2)
    cov = [greedy_tile(b, TileAssignment.constant(triangle(2)), N, SymbolicPoint((0,))).coverage for N in (8, 9)]
    assert cov == [1.0, 0.9]


def test_gauss_tiling_explicit():
    g = gauss_system(4)
    r = greedy_tile(g, TileAssignment.constant(triangle(1, 4)), 3, 0.6180339887498949)
    # levels 0 and 2 carry tiles; level 3 is the band. Weight lost to the branch cap is excluded.
    assert sorted(r.tile_levels) == [0, 2]
    assert r.untiled_band / r.total_weight == pytest.approx(1 - r.coverage)


@pytest.mark.parametrize("L", [1, 2, 3])
def test_sweep_constant_assignment(L):
    b = bernoulli_system(2)
    rng = np.random.default_rng(L)
    pts = [b.sample_point(rng, 2) for _ in range(10)]
    sweep = tiling_parameter_sweep(b, TileAssignment.constant(triangle(L)), 0.25, pts)
    assert sweep.L == L and sweep.N == 8 * L
    assert np.all(sweep.coverages >= 1 - L / (sweep.N + 1) - 1e-12)
    assert sweep.success_fraction == 1.0


def test_sweep_singletons():
    b = bernoulli_system(2)
    pts = [SymbolicPoint((0,)), SymbolicPoint((1,))]
    sweep = tiling_parameter_sweep(b, TileAssignment.constant(RightRootedTree([()])), 0.1, pts)
    assert sweep.success_fraction == 1.0


def test_sweep_two_heights():
    b = bernoulli_system(2)
    rng = np.random.default_rng(12)
    pts = [b.sample_point(rng, 1) for _ in range(200)]
    assignment = TileAssignment.by_first_symbol([triangle(4), triangle(1)])
    sweep = tiling_parameter_sweep(b, assignment, 0.2, pts)
    assert (sweep.L, sweep.N) == (4, 40)
    assert sweep.success_fraction >= 0.8


def test_sweep_picks_quantile_not_maximum():
    # one sampled point in a hundred gets a tall tile; L ignores it
    s = block_chain_system()
    assignment = TileAssignment.by_first_symbol({0: triangle(3, 4), 1: triangle(3, 4), 2: triangle(1, 4), 3: triangle(1, 4)})
    pts = [SymbolicPoint((2,))] * 99 + [SymbolicPoint((0,))]
    heights = tile_heights(s, assignment, pts)
    assert list(np.bincount(heights)) == [0, 99, 0, 1]
    sweep = tiling_parameter_sweep(s, assignment, 0.5, pts)
    # 1% of tiles exceed height 1, below epsilon^2 / 2 = 12.5%
    assert sweep.L == 1 and sweep.N == 4
    assert math.isclose(sweep.success_fraction, 1.0)


def test_bad_inputs():
    b = bernoulli_system(2)
    with pytest.raises(ValueError):
        greedy_tile(b, TileAssignment.constant(triangle(1)), -1, SymbolicPoint((0,)))
    with pytest.raises(ValueError):
        tiling_parameter_sweep(b, TileAssignment.constant(triangle(1)), 1.5, [SymbolicPoint((0,))])
    with pytest.raises(TypeError):
        greedy_tile(gauss_system(3), TileAssignment.constant(triangle(1, 3)), 2, 0.3141592653589793, mode="aggregate")
