"""Weighted averages over trees of preimages.

Two engines feed every operation here.  ``_walk_tree`` follows the parent
links of an explicit tree; ``level_sums`` expands complete trees level by
level without materialising words.  Both multiply one-step cocycle weights
along parent links, skip zero-weight words and sum each level with
``math.fsum`` before combining levels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import EmptyTreeAtPoint
from .systems import (
    BoundarySystem,
    GaussSystem,
    Observable,
    ProductPoint,
    SkewProductSystem,
    System,
)
from .words import RightRootedTree, complete_tree

# Nodes expanded per level for infinitely branching systems.
DEFAULT_BEAM = 4096


@dataclass(frozen=True)
class TreeEvaluation:
    tree: RightRootedTree | None
    base: object
    total_weight: float
    weighted_sum: float
    truncation_tail: float = 0.0

    @property
    def average(self) -> float:
        return self.weighted_sum / self.total_weight


@dataclass(frozen=True)
class ReportRow:
    index: object
    total_weight: float
    average: float
    target: float | None
    truncation_tail: float = 0.0

    @property
    def abs_error(self) -> float | None:
        return None if self.target is None else abs(self.average - self.target)


@dataclass
class AveragingReport:
    system_id: str
    observable: str
    point: object
    rows: list[ReportRow] = field(default_factory=list)
    truncation_bound: float = 0.0

    @property
    def averages(self) -> np.ndarray:
        return np.array([r.average for r in self.rows])

    @property
    def errors(self) -> np.ndarray:
        return np.array([np.nan if r.abs_error is None else r.abs_error for r in self.rows])


@dataclass(frozen=True)
class LevelSums:
    """Per-level sums over ``T^{-k}(x)`` for k = 0..n.

    ``weight[k]`` and ``value[k]`` are the enumerated weight and weighted
    observable sum; ``missing[k]`` is the weight of level k hidden by
    branch caps and the beam (zero for finite-branching systems).
    """

    weight: np.ndarray
    value: np.ndarray
    missing: np.ndarray

    @property
    def n(self) -> int:
        return len(self.weight) - 1


def _depth(obs: Observable | None) -> int:
    return max(1, obs.depth if obs is not None else 0)


def _values(system, obs, state):
    vals = system.values(obs, state)
    if np.isnan(vals).any():
        raise KeyError(f"{obs.name} is undefined on a realised word")
    return vals


def _walk_tree(system: System, obs: Observable | None, tree: RightRootedTree, x):
    """Per-level (weight, value, missing) sums over ``S . x`` for an explicit tree."""
    width = _depth(obs)
    state = system.lift(x)
    weights = np.ones(1)
    alive = np.zeros(1, dtype=np.int64)  # tree node -> position in current arrays, -1 if skipped
    lw, lv, lm = [1.0], [float(_values(system, obs, state)[0]) if obs else 0.0], [0.0]
    missing = 0.0
    for n in range(1, tree.height + 1):
        sl = tree.level(n)
        pos = alive[tree.parent[sl] - tree.level_starts[n - 1]]
        ok = pos >= 0
        child, w = system.extend(state, pos[ok], tree.symbol[sl][ok])
        cw = weights[pos[ok]] * w
        keep = cw > 0
        # hidden weight below the nodes of the previous level
        missing += math.fsum(weights * system.node_tail(state)) if not system.finite_branching else 0.0
        state = system.trim(system.take(child, np.flatnonzero(keep)), width)
        weights = cw[keep]
        alive = np.full(sl.stop - sl.start, -1, dtype=np.int64)
        alive[np.flatnonzero(ok)[keep]] = np.arange(int(keep.sum()))
        lw.append(math.fsum(weights))
        lv.append(math.fsum(weights * _values(system, obs, state)) if obs and len(weights) else 0.0)
        lm.append(missing)
        if not len(weights):
            lw.extend([0.0] * (tree.height - n))
            lv.extend([0.0] * (tree.height - n))
            lm.extend([missing] * (tree.height - n))
            break
    return LevelSums(np.array(lw), np.array(lv), np.array(lm))


def level_sums(
    system: System, obs: Observable | None, n: int, x, beam: int | None = None, merge: bool = True
) -> LevelSums:
    """Level sums over the complete tree ``T^{-k}(x)``, k = 0..n.

    Finite-branching systems are expanded exactly; with ``merge`` points that
    the system cannot tell apart (Markov shifts: equal trimmed prefixes) are
    combined, which keeps each level at most ``k**depth`` points wide.  Otherwise only the
    ``beam`` heaviest nodes of a level are expanded (each with its full
    capped family of children); the weight of unexpanded nodes and of the
    capped-off branches is carried in ``missing``.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    if beam is None and not system.finite_branching:
        beam = DEFAULT_BEAM
    width = _depth(obs)
    k = system.alphabet.size
    state = system.lift(x)
    weights = np.ones(1)
    lw, lv, lm = [1.0], [float(_values(system, obs, state)[0]) if obs else 0.0], [0.0]
    missing = 0.0
    for _ in range(n):
        if beam is not None and len(weights) > beam:
            top = np.argpartition(weights, len(weights) - beam)[len(weights) - beam :]
            top.sort()
            dropped = np.ones(len(weights), dtype=bool)
            dropped[top] = False
            missing += math.fsum(weights[dropped])
            state, weights = system.take(state, top), weights[top]
        if not system.finite_branching:
            missing += math.fsum(weights * system.node_tail(state))
        m = len(weights)
        parent = np.repeat(np.arange(m), k)
        child, w = system.extend(state, parent, np.tile(np.arange(k), m))
        cw = weights[parent] * w
        keep = np.flatnonzero(cw > 0)
        state = system.trim(system.take(child, keep), width)
        weights = cw[keep]
        if merge:
            state, weights = system.merge(state, weights)
        lw.append(math.fsum(weights))
        lv.append(math.fsum(weights * _values(system, obs, state)) if obs else 0.0)
        lm.append(missing)
    return LevelSums(np.array(lw), np.array(lv), np.array(lm))


def tree_weight(system: System, tree: RightRootedTree, x) -> float:
    """``|S . x|`` : the sum of ``rho(w . x, x)`` over realisable words of ``S``."""
    return math.fsum(_walk_tree(system, None, tree, x).weight)


def weighted_average(system: System, obs: Observable, tree: RightRootedTree, x) -> TreeEvaluation:
    """The rho-weighted average of ``obs`` over ``S . x``."""
    levels = _walk_tree(system, obs, tree, x)
    total = math.fsum(levels.weight)
    if total <= 0:
        raise EmptyTreeAtPoint("no word of the tree is realisable at this point")
    return TreeEvaluation(tree, x, total, math.fsum(levels.value), math.fsum(levels.missing))


def transfer_iterate(system: System, obs: Observable, n: int, x, beam: int | None = None) -> float:
    """``(L^n f)(x)``: the weighted observable sum over ``T^{-n}(x)``."""
    return float(level_sums(system, obs, n, x, beam).value[n])


def _level_averages(levels: LevelSums, finite: bool) -> np.ndarray:
    """Running backward averages for n = 0..N.

    Finite-branching systems use the exact ratio of cumulative sums.  With
    truncated branching each level is first normalised by its enumerated
    weight, so missing mass does not tilt the mix between levels.
    """
    if finite:
        return np.cumsum(levels.value) / np.cumsum(levels.weight)
    return np.cumsum(levels.value / levels.weight) / np.arange(1, len(levels.weight) + 1)


def truncation_bound(system: System, n: int, sup_norm: float = 1.0) -> float:
    """Worst-case effect of the branch cap on an n-level average of a bounded observable."""
    if isinstance(system, GaussSystem):
        return n * 2.0 / (system.M + 1) * sup_norm
    return 0.0


def cesaro_backward(
    system: System, obs: Observable, n_max: int, x, beam: int | None = None, target: float | None = None
) -> AveragingReport:
    """Averages over the complete trees ``T^{-0}(x) u ... u T^{-n}(x)`` for n = 0..n_max."""
    levels = level_sums(system, obs, n_max, x, beam)
    avgs = _level_averages(levels, system.finite_branching)
    total = np.cumsum(levels.weight)
    tails = np.cumsum(levels.missing)
    if target is None:
        target = system.invariant_target(obs, x)
    report = AveragingReport(system.system_id, obs.name, x, truncation_bound=truncation_bound(system, n_max))
    for n in range(n_max + 1):
        report.rows.append(ReportRow(n, float(total[n]), float(avgs[n]), target, float(tails[n])))
    return report


def tree_sweep_backward(
    system: System, obs: Observable, trees: Sequence[RightRootedTree], x, labels: Sequence | None = None
) -> AveragingReport:
    """One row per tree, sorted by tree weight at ``x``."""
    labels = list(range(len(trees))) if labels is None else list(labels)
    target = system.invariant_target(obs, x)
    rows = []
    for label, tree in zip(labels, trees):
        ev = weighted_average(system, obs, tree, x)
        rows.append(ReportRow(label, ev.total_weight, ev.average, target, ev.truncation_tail))
    rows.sort(key=lambda r: r.total_weight)
    return AveragingReport(system.system_id, obs.name, x, rows)


def boundary_forward_average(system: BoundarySystem, obs: Observable, tree: RightRootedTree, x) -> TreeEvaluation:
    """Forward average over ``S . x`` under the free-group action on the boundary.

    The words of ``S`` that act on ``x`` without cancellation are exactly the
    realisable preimage words of the boundary shift, so this is the
    backward weighted average of the shift.
    """
    if not isinstance(system, BoundarySystem):
        raise TypeError("boundary_forward_average needs a boundary system")
    return weighted_average(system, obs, tree, x)


# -- forward averages of a free-group action ---------------------------------


def _forward_levels(skew: SkewProductSystem, obs: Observable, tree: RightRootedTree, xs: np.ndarray):
    """Per-level sums of ``f(w . x) P(w)`` and ``P(w)`` over the tree.

    ``P(w) = pi(w_0) P(w_0, w_1) ... P(w_{n-2}, w_{n-1})`` is built from the
    chain directly: each node carries the product of its transitions.
    """
    chain = skew.boundary
    pi, P = chain.pi, chain.P
    xs = np.atleast_1d(np.asarray(xs, float))
    p = len(xs)
    base = xs[None, :]
    prod = np.ones(1)
    first = np.full(1, -1)
    alive = np.zeros(1, dtype=np.int64)
    f0 = np.asarray(obs.func(xs), float)
    mass, value = [1.0], [f0]
    for n in range(1, tree.height + 1):
        sl = tree.level(n)
        pos = alive[tree.parent[sl] - tree.level_starts[n - 1]]
        ok = np.flatnonzero(pos >= 0)
        sym = tree.symbol[sl][ok]
        par = pos[ok]
        step = np.ones(len(ok)) if n == 1 else P[sym, first[par]]
        pr = prod[par] * step
        keep = np.flatnonzero(pr > 0)
        sym, par, pr = sym[keep], par[keep], pr[keep]
        base = skew.action.act_symbols(sym[:, None], base[par])
        prod, first = pr, sym
        alive = np.full(sl.stop - sl.start, -1, dtype=np.int64)
        alive[ok[keep]] = np.arange(len(keep))
        pw = pi[sym] * pr
        mass.append(math.fsum(pw))
        fv = np.asarray(obs.func(base), float).reshape(len(pw), p)
        value.append(np.array([math.fsum(pw * fv[:, j]) for j in range(p)]) if len(pw) else np.zeros(p))
    return np.array(mass), np.array(value)


def forward_group_mass(skew: SkewProductSystem, tree: RightRootedTree) -> float:
    """``P(S) = sum of P(w)`` over the words of ``S``."""
    mass, _ = _forward_levels(skew, _ZERO, tree, np.zeros(1))
    return math.fsum(mass)


def forward_group_average(skew: SkewProductSystem, obs: Observable, tree: RightRootedTree, x):
    """``(1 / P(S)) sum_{w in S} f(w . x) P(w)``; ``x`` may be an array of base points."""
    mass, value = _forward_levels(skew, obs, tree, x)
    total = math.fsum(mass)
    if total <= 0:
        raise EmptyTreeAtPoint("the tree carries no mass")
    out = np.array([math.fsum(value[:, j]) for j in range(value.shape[1])]) / total
    return out if np.ndim(x) else float(out[0])


def ball_average(skew: SkewProductSystem, obs: Observable, n: int, x):
    """``(1 / (n+1)) sum_{|w| <= n} f(w . x) P(w)`` over the reduced words of length at most n."""
    tree = complete_tree(skew.alphabet, n, reduced=True)
    _, value = _forward_levels(skew, obs, tree, x)
    out = np.array([math.fsum(value[:, j]) for j in range(value.shape[1])]) / (n + 1)
    return out if np.ndim(x) else float(out[0])


def sphere_averages(skew: SkewProductSystem, obs: Observable, n: int, x) -> np.ndarray:
    """``sum_{|w| = k} f(w . x) P(w)`` for k = 0..n; uniform sphere averages for the uniform chain."""
    tree = complete_tree(skew.alphabet, n, reduced=True)
    mass, value = _forward_levels(skew, obs, tree, x)
    return value / mass[:, None] if np.ndim(x) else value[:, 0] / mass


def backward_bridge(skew: SkewProductSystem, obs: Observable, tree: RightRootedTree, x: float) -> tuple[float, float]:
    """``(sum_i pi(i) |S . y_i|, sum_i pi(i) sum_w f rho)`` over the skew product.

    ``y_i`` is a representative boundary point starting with ``i``; the
    weights do not depend on the rest of ``y_i``, so one symbol suffices.
    Dividing the second entry by the first gives the forward average.
    """
    from .systems import SymbolicPoint

    if not skew.boundary.finite_branching:
        raise ValueError("bridge needs a finite-rank boundary")
    weight, value = [], []
    for i, p in enumerate(skew.boundary.pi):
        levels = _walk_tree(skew, obs, tree, ProductPoint(float(x), SymbolicPoint((i,))))
        weight.append(p * math.fsum(levels.weight))
        value.append(p * math.fsum(levels.value))
    return math.fsum(weight), math.fsum(value)


class _Zero(Observable):
    name = "zero"

    @staticmethod
    def func(x):
        return np.zeros_like(np.asarray(x, float))


_ZERO = _Zero()


__all__ = [
    "AveragingReport",
    "DEFAULT_BEAM",
    "LevelSums",
    "ReportRow",
    "TreeEvaluation",
    "backward_bridge",
    "boundary_forward_average",
    "ball_average",
    "cesaro_backward",
    "forward_group_average",
    "forward_ball_report",
    "forward_group_mass",
    "level_sums",
    "sphere_averages",
    "transfer_iterate",
    "tree_sweep_backward",
    "tree_weight",
    "truncation_bound",
    "weighted_average",
]


def forward_ball_report(skew: SkewProductSystem, obs: Observable, n_max: int, x: float) -> AveragingReport:
    """Forward averages over the balls of reduced words of length at most n, n = 0..n_max.

    ``P`` of a ball is n + 1 by stationarity, so these are the ball averages
    of a random walk driven by the boundary chain.
    """
    tree = complete_tree(skew.alphabet, n_max, reduced=True)
    mass, value = _forward_levels(skew, obs, tree, x)
    cm, cv = np.cumsum(mass), np.cumsum(value[:, 0])
    report = AveragingReport(skew.system_id, obs.name, x)
    for n in range(n_max + 1):
        report.rows.append(ReportRow(n, float(cm[n]), float(cv[n] / cm[n]), obs.integral))
    return report
