import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ergotree.errors import DomainError, InsufficientDepth, InvalidAlphabet, NotBoundarySupported, NotMeasurePreserving
from ergotree.markov import Finite, finfty_tail_mass, MarkovChain, cylinder_measure, two_state_chain, uniform_free_chain
from ergotree.systems import (
    Constant,
    CircleRotation,
    ProductPoint,
    RealPoint,
    SymbolicPoint,
    bernoulli_system,
    block_chain_system,
    boundary_system,
    circle_rotation_action,
    first_symbol_values,
    gauss_identity,
    gauss_system,
    indicator,
    markov_shift_system,
    skew_product_system,
)

CATALOG = [
    bernoulli_system(2),
    bernoulli_system(3),
    markov_shift_system(two_state_chain()),
    boundary_system(2),
    boundary_system(3),
    boundary_system(math.inf),
    gauss_system(50),
    skew_product_system(circle_rotation_action(2)),
    block_chain_system(),
]
IDS = [s.system_id for s in CATALOG]


def same_point(a, b):
    if isinstance(a, float):
        return abs(a - b) <= 1e-12
    if isinstance(a, ProductPoint):
        d = abs(a.base - b.base) % 1.0
        return min(d, 1 - d) <= 1e-12 and a.boundary.prefix == b.boundary.prefix
    return a.prefix == b.prefix


@pytest.mark.parametrize("system", CATALOG, ids=IDS)
def test_round_trip_and_unit_weight(system):
    rng = np.random.default_rng(4)
    for _ in range(10):
        x = system.sample_point(rng, 6)
        branches = system.preimages(x)
        assert branches
        for b in branches:
            assert b.weight > 0 and math.isfinite(b.weight)
            assert same_point(system.apply_T(b.point), x)
        total = math.fsum(b.weight for b in branches) + system.preimage_tail(x)
        assert total == pytest.approx(1.0, abs=1e-12)


def test_bernoulli_branches():
    s = bernoulli_system(2)
    x = SymbolicPoint((1, 0, 1))
    br = s.preimages(x)
    assert [(b.symbol, b.point.prefix, b.weight) for b in br] == [(0, (0, 1, 0, 1), 0.5), (1, (1, 1, 0, 1), 0.5)]
    assert s.apply_T(SymbolicPoint((0, 1, 0, 1))) == x
    with pytest.raises(ValueError):
        bernoulli_system(1)


def test_markov_branches_and_word_weight():
    s = markov_shift_system(two_state_chain())
    br = {b.symbol: b.weight for b in s.preimages(SymbolicPoint((0,)))}
    assert br[0] == pytest.approx(0.9) and br[1] == pytest.approx(0.1)
    # rho(w x, x) for w = (0, 1), x_0 = 0 is a product of two branch weights
    step1 = {b.symbol: b for b in s.preimages(SymbolicPoint((0,)))}[1]
    step2 = {b.symbol: b for b in s.preimages(step1.point)}[0]
    chain = two_state_chain()
    ratio = cylinder_measure(chain, (0, 1, 0)) / cylinder_measure(chain, (0,))
    assert step1.weight * step2.weight == pytest.approx(0.04)
    assert step1.weight * step2.weight == pytest.approx(ratio)


def test_markov_shift_requires_stationarity():
    chain = MarkovChain(Finite([[0.9, 0.1], [0.4, 0.6]]), [0.5, 0.5])
    with pytest.raises(NotMeasurePreserving):
        markov_shift_system(chain)


def test_boundary_branches():
    s = boundary_system(2)
    x = SymbolicPoint((0, 2, 2))
    br = s.preimages(x)
    assert sorted(b.symbol for b in br) == [0, 2, 3]
    assert all(b.weight == pytest.approx(1 / 3) for b in br)
    assert s.act((1,), SymbolicPoint((0, 2))).prefix == (2,)
    assert s.act((2, 1), x).prefix == (2, 2, 2)
    assert s.act((2, 2), x).prefix == (2, 2, 0, 2, 2)


def test_boundary_rejects_backtracking_chains():
    with pytest.raises(NotBoundarySupported):
        boundary_system(1, MarkovChain.from_matrix([[0.5, 0.5], [0.5, 0.5]]))
    with pytest.raises(InvalidAlphabet):
        boundary_system(2, two_state_chain())


def test_finfty_boundary_tail_is_exact():
    s = boundary_system(math.inf, budget=20)
    for f in range(20):
        x = SymbolicPoint((f,))
        assert math.fsum(b.weight for b in s.preimages(x)) + s.preimage_tail(x) == pytest.approx(1.0, abs=1e-12)
    tail = finfty_tail_mass(20)
    assert 0 < tail <= 2.0**-19
    assert s.budget_excess_bound(10) == pytest.approx(10 * tail)
    rng = np.random.default_rng(0)
    for _ in range(50):
        assert max(s.sample_point(rng, 12).prefix) < 20


def test_gauss_weights_near_zero():
    g = gauss_system(50)
    br = g.preimages(1e-9 + 1e-17)
    assert br[0].weight == pytest.approx(0.5, abs=1e-8)
    assert br[1].weight == pytest.approx(1 / 6, abs=1e-8)


def gauss_density(x):
    return 1 / (math.log(2) * (1 + x))


@given(st.floats(0.001, 1.0))
def test_gauss_weight_is_change_of_variables(x):
    g = gauss_system(50)
    for b in g.preimages(x)[:10]:
        n = b.symbol + 1
        y = 1 / (n + x)
        jac = 1 / (n + x) ** 2
        assert b.weight == pytest.approx(gauss_density(y) * jac / gauss_density(x), rel=1e-12)


@given(st.floats(1e-6, 1.0), st.integers(2, 200))
def test_gauss_weights_telescope(x, cap):
    g = gauss_system(cap)
    total = math.fsum(b.weight for b in g.preimages(x)) + g.preimage_tail(x)
    assert total == pytest.approx(1.0, abs=1e-12)
    assert g.preimage_tail(x) == pytest.approx((1 + x) / (cap + 1 + x))


def test_gauss_round_trip_and_domain():
    g = gauss_system(50)
    assert g.apply_T(1 / (3 + 0.25)) == pytest.approx(0.25, abs=1e-12)
    with pytest.raises(DomainError):
        g.preimages(0.0)
    with pytest.raises(DomainError):
        g.preimages(1.5)
    with pytest.raises(ValueError):
        gauss_system(1)


def test_real_point_rejects_rationals():
    with pytest.raises(DomainError):
        RealPoint(0.5)
    with pytest.raises(DomainError):
        RealPoint(3 / 7)
    with pytest.raises(DomainError):
        RealPoint(1.2)
    assert float(RealPoint(math.pi - 3)) == math.pi - 3
    rng = np.random.default_rng(0)
    xs = [gauss_system(50).sample_point(rng) for _ in range(5000)]
    assert all(0 < x <= 1 for x in xs)
    # Gauss measure of [0, 1/2] is log2(3/2)
    assert abs(np.mean(np.array(xs) <= 0.5) - math.log2(1.5)) < 0.03


def test_skew_product_branches():
    s = skew_product_system(circle_rotation_action(2))
    y = SymbolicPoint((2, 0, 3))
    p = ProductPoint(0.3, y)
    br = s.preimages(p)
    base = {b.symbol: b.weight for b in boundary_system(2).preimages(y)}
    assert {b.symbol: b.weight for b in br} == base
    assert len(br) == 3 and all(b.weight == pytest.approx(1 / 3) for b in br)
    for b in br:
        assert same_point(s.apply_T(b.point), p)


def test_skew_product_alphabet_mismatch():
    with pytest.raises(InvalidAlphabet):
        skew_product_system(circle_rotation_action(2), boundary_system(3))


def test_circle_rotation():
    a, b = math.sqrt(2) - 1, math.sqrt(3) - 1
    act = circle_rotation_action(2, [a, b])
    assert act.act((0, 1), 0.37) == pytest.approx(0.37)
    assert act.act((0, 2), 0.0) == pytest.approx((a + b) % 1.0)
    # rightmost letter acts first; rotations commute so check with a non-abelian-free sanity value
    assert act.act((3,), 0.0) == pytest.approx((-b) % 1.0)
    with pytest.raises(ValueError):
        circle_rotation_action(2, [a])


def test_rotation_orbit_equidistributes():
    act = circle_rotation_action(2)
    rng = np.random.default_rng(2024)
    xs = []
    for _ in range(1000):
        word = rng.integers(0, 4, size=int(rng.integers(1, 30)))
        xs.append(act.act(word, 0.0))
    hist = np.histogram(xs, bins=16, range=(0, 1))[0] / 1000
    assert np.max(np.abs(hist - 1 / 16)) <= 0.05


def test_block_chain():
    s = block_chain_system()
    rng = np.random.default_rng(1)
    for _ in range(20):
        x = s.sample_point(rng, 30)
        block = x.prefix[0] // 2
        assert all(sym // 2 == block for sym in x.prefix)
    a_ind = first_symbol_values([1, 1, 0, 0])
    assert s.invariant_target(a_ind, SymbolicPoint((1,))) == pytest.approx(1.0)
    assert s.invariant_target(a_ind, SymbolicPoint((2,))) == pytest.approx(0.0)
    f = first_symbol_values([1, 2, 3, 4])
    # per-block stationary vectors: (5/9, 4/9) and (6/13, 7/13)
    assert s.invariant_target(f, SymbolicPoint((0,))) == pytest.approx(5 / 9 + 2 * 4 / 9, abs=1e-12)
    assert s.invariant_target(f, SymbolicPoint((3,))) == pytest.approx(3 * 6 / 13 + 4 * 7 / 13, abs=1e-12)


def test_invariant_targets_ergodic():
    assert markov_shift_system(two_state_chain()).invariant_target(indicator(0), SymbolicPoint((1,))) == pytest.approx(0.8)
    assert gauss_system(50).invariant_target(gauss_identity(), 0.3) == pytest.approx((1 - math.log(2)) / math.log(2))
    assert bernoulli_system(2).invariant_target(Constant(3.0), SymbolicPoint((0,))) == 3.0


def test_depth_is_checked():
    s = markov_shift_system(two_state_chain())
    depth2 = first_symbol_values([1, 2])
    with pytest.raises(InsufficientDepth):
        s.preimages(SymbolicPoint(()))
    with pytest.raises(InsufficientDepth):
        s.evaluate(depth2, SymbolicPoint(()))
    assert s.evaluate(depth2, SymbolicPoint((1,))) == 2.0


def test_cylinder_missing_entries_are_errors_only_when_hit():
    s = bernoulli_system(2)
    f = first_symbol_values([1.0])
    with pytest.raises(KeyError):
        s.invariant_target(f, SymbolicPoint((0,)))
    assert s.evaluate(f, SymbolicPoint((0,))) == 1.0
    assert math.isnan(s.evaluate(f, SymbolicPoint((1,))))


def test_rotation_angle_count():
    assert isinstance(circle_rotation_action(3), CircleRotation)
