"""Greedy tilings of complete preimage trees.

Scanning ``T^{-0}(x), ..., T^{-N}(x)`` from the root, every still-uncovered
point ``y`` whose tile ``S_y . y`` fits below level N receives its tile.
Suffix-closure makes the tiles automatically disjoint: if a word of a
tile rooted at ``z`` extended ``y``, then ``y`` itself would lie in that
tile.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .systems import ShiftSystem, System
from .words import RightRootedTree


@dataclass(frozen=True)
class TileAssignment:
    """A rule ``y -> S_y`` reading only the first ``locality`` symbols of ``y``."""

    locality: int
    rule: Callable[[tuple], RightRootedTree]
    max_height: int
    name: str = "assignment"

    @classmethod
    def constant(cls, tree: RightRootedTree, name: str | None = None) -> "TileAssignment":
        return cls(0, lambda head: tree, tree.height, name or f"constant:h={tree.height}")

    @classmethod
    def by_first_symbol(cls, trees: Sequence[RightRootedTree] | Mapping[int, RightRootedTree], name: str | None = None):
        table = dict(enumerate(trees)) if not isinstance(trees, Mapping) else dict(trees)
        label = name or "by_first_symbol:" + ",".join(f"{s}->h{t.height}" for s, t in sorted(table.items()))
        return cls(1, lambda head: table[head[0]], max(t.height for t in table.values()), label)

    def tree_for(self, head: tuple) -> RightRootedTree:
        tree = self.rule(tuple(head[: self.locality]))
        if tree.height > self.max_height:
            raise ValueError(f"{self.name} assigned a tree of height {tree.height} > {self.max_height}")
        return tree


@dataclass
class TilingResult:
    N: int
    covered_weight: float
    total_weight: float
    untiled_band: float
    untiled_overflow: float
    tile_levels: dict[int, int]
    tiles: list[tuple[tuple, int]] | None = None

    @property
    def coverage(self) -> float:
        return self.covered_weight / self.total_weight

    @property
    def band_fraction(self) -> float:
        return self.untiled_band / self.total_weight

    @property
    def overflow_fraction(self) -> float:
        return self.untiled_overflow / self.total_weight


def _head_of(system, state, k):
    return system.head(state, max(k, 1)) if k else np.zeros((system.size(state), 0), dtype=np.int64)


def _greedy_explicit(system: System, assignment: TileAssignment, N: int, x, band: int) -> TilingResult:
    k = assignment.locality
    width = max(k, 1)
    state = system.lift(x)
    words: list[tuple] = [()]
    weights = np.ones(1)
    covered: dict[tuple, int] = {}
    tiles: list[tuple[tuple, int]] = []
    tree_ids: dict[int, int] = {}
    levels = Counter()
    covered_w, band_w, over_w, total = [], [], [], []
    for n in range(N + 1):
        if n:
            m = len(words)
            alpha = system.alphabet.size
            parent = np.repeat(np.arange(m), alpha)
            sym = np.tile(np.arange(alpha), m)
            child, w = system.extend(state, parent, sym)
            cw = weights[parent] * w
            keep = np.flatnonzero(cw > 0)
            words = [(int(sym[j]),) + words[parent[j]] for j in keep]
            state = system.trim(system.take(child, keep), width)
            weights = cw[keep]
        heads = _head_of(system, state, k)
        order = sorted(range(len(words)), key=words.__getitem__)
        total.append(math.fsum(weights))
        for j in order:
            y = words[j]
            if y in covered:
                continue
            tree = assignment.tree_for(tuple(int(s) for s in heads[j]))
            if n + tree.height <= N:
                tid = tree_ids.setdefault(id(tree), len(tree_ids))
                tiles.append((y, tid))
                levels[n] += 1
                for v in tree:
                    u = v + y
                    if u in covered:
                        raise AssertionError(f"tiles overlap at {u}")
                    covered[u] = len(tiles) - 1
        cov = np.array([words[j] in covered for j in range(len(words))], dtype=bool)
        covered_w.append(math.fsum(weights[cov]))
        tall = np.array(
            [assignment.tree_for(tuple(int(s) for s in heads[j])).height > band for j in range(len(words))],
            dtype=bool,
        )
        band_w.append(math.fsum(weights[~cov & ~tall]))
        over_w.append(math.fsum(weights[~cov & tall]))
    return TilingResult(
        N, math.fsum(covered_w), math.fsum(total), math.fsum(band_w), math.fsum(over_w), dict(levels), tiles
    )


def _greedy_aggregate(system: ShiftSystem, assignment: TileAssignment, N: int, x, band: int) -> TilingResult:
    """Greedy tiling with points grouped by (remaining tile words, head).

    Two points with the same head and the same set of still-to-be-covered
    relative words behave identically from then on, so their weights can
    be merged.  The number of groups stays bounded while the tree grows
    exponentially.
    """
    k = assignment.locality
    width = max(k, 1)
    prefix = tuple(int(s) for s in system.lift(x)[0, :width])
    if len(prefix) < width:
        system.head(system.lift(x), width)  # raises InsufficientDepth
    # (remaining relative words, head) -> (weight, node count)
    groups: dict[tuple, tuple[float, int]] = {(frozenset(), prefix): (1.0, 1)}
    levels = Counter()
    covered_w, band_w, over_w, total = [], [], [], []
    alpha = system.alphabet.size
    for n in range(N + 1):
        placed: dict[tuple, list] = defaultdict(lambda: [[], 0])
        lvl, cov, bnd, ovr = [], [], [], []
        for (remaining, head), (w, count) in sorted(groups.items(), key=lambda kv: (sorted(kv[0][0]), kv[0][1])):
            lvl.append(w)
            key = (remaining, head)
            if () in remaining:
                cov.append(w)
            else:
                tree = assignment.tree_for(head)
                if n + tree.height <= N:
                    levels[n] += count
                    cov.append(w)
                    key = (tree.as_set(), head)
                elif tree.height > band:
                    ovr.append(w)
                else:
                    bnd.append(w)
            placed[key][0].append(w)
            placed[key][1] += count
        total.append(math.fsum(lvl))
        covered_w.append(math.fsum(cov))
        band_w.append(math.fsum(bnd))
        over_w.append(math.fsum(ovr))
        if n == N:
            break
        nxt: dict[tuple, list] = defaultdict(lambda: [[], 0])
        for (remaining, head), (ws, count) in placed.items():
            w = math.fsum(ws)
            for c in range(alpha):
                cw = w * system.branch[c, head[0]]
                if cw <= 0:
                    continue
                rem = frozenset(u[:-1] for u in remaining if u and u[-1] == c)
                entry = nxt[(rem, ((c,) + head)[:width])]
                entry[0].append(cw)
                entry[1] += count
        groups = {key: (math.fsum(ws), count) for key, (ws, count) in nxt.items()}
    return TilingResult(N, math.fsum(covered_w), math.fsum(total), math.fsum(band_w), math.fsum(over_w), dict(levels))


def greedy_tile(
    system: System,
    assignment: TileAssignment,
    N: int,
    x,
    mode: str = "auto",
    band: int | None = None,
) -> TilingResult:
    """Tile ``T^{-0}(x) u ... u T^{-N}(x)`` greedily and measure the covered rho-weight.

    Parameters
    ----------
    mode : {"auto", "explicit", "aggregate"}
        ``explicit`` lists every word and every placed tile (exponential in
        N); ``aggregate`` merges equivalent points and only works for Markov
        shifts.  ``auto`` picks aggregate whenever it applies.
    band : int, optional
        Tile height separating the two classes of untiled points: those
        whose tile is at most ``band`` high can only be missed near level N
        (``untiled_band``), taller ones are ``untiled_overflow``.  Defaults
        to the assignment's height bound.
    """
    if N < 0:
        raise ValueError("N must be non-negative")
    band = assignment.max_height if band is None else band
    if mode == "auto":
        mode = "aggregate" if isinstance(system, ShiftSystem) else "explicit"
    if mode == "aggregate":
        if not isinstance(system, ShiftSystem):
            raise TypeError("aggregate tiling needs a Markov shift")
        return _greedy_aggregate(system, assignment, N, x, band)
    if mode == "explicit":
        return _greedy_explicit(system, assignment, N, x, band)
    raise ValueError(f"unknown tiling mode {mode!r}")


@dataclass
class TilingSweep:
    epsilon: float
    L: int
    N: int
    coverages: np.ndarray = field(repr=False)
    results: list[TilingResult] = field(repr=False)

    @property
    def success_fraction(self) -> float:
        return float(np.mean(self.coverages >= 1 - self.epsilon))


def tile_heights(system: System, assignment: TileAssignment, points: Sequence) -> np.ndarray:
    k = assignment.locality
    out = []
    for p in points:
        head = tuple(int(s) for s in _head_of(system, system.lift(p), k)[0]) if k else ()
        out.append(assignment.tree_for(head).height)
    return np.array(out)


def tile_scale(heights: Sequence[int], epsilon: float) -> tuple[int, int]:
    """Height cut ``L`` and tiling depth ``N`` for a sample of tile heights.

    L is the smallest height exceeded by fewer than an ``epsilon**2 / 2``
    fraction of the sample, and ``N = ceil(2 L / epsilon)``.
    """
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    heights = np.asarray(heights)
    L = 0
    while np.mean(heights > L) >= epsilon**2 / 2:
        L += 1
    return L, math.ceil(2 * L / epsilon)


def tiling_parameter_sweep(
    system: System, assignment: TileAssignment, epsilon: float, sample_points: Sequence, mode: str = "auto"
) -> TilingSweep:
    """Choose L and N from the sample with :func:`tile_scale`, then tile every point."""
    L, N = tile_scale(tile_heights(system, assignment, sample_points), epsilon)
    results = [greedy_tile(system, assignment, N, p, mode=mode, band=L) for p in sample_points]
    return TilingSweep(epsilon, L, N, np.array([r.coverage for r in results]), results)


__all__ = [
    "TileAssignment",
    "TilingResult",
    "TilingSweep",
    "greedy_tile",
    "tile_heights",
    "tile_scale",
    "tiling_parameter_sweep",
]
