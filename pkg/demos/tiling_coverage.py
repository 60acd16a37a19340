"""Greedy tilings of complete preimage trees of the full 2-shift.

Run from the repository root: ``python3 demos/tiling_coverage.py``.
"""

import numpy as np

from ergotree import SymbolicPoint, TileAssignment, bernoulli_system, complete_tree, greedy_tile
from ergotree.tiling import tiling_parameter_sweep


def main():
    s = bernoulli_system(2)
    triangle = TileAssignment.constant(complete_tree(s.alphabet, 2))
    for N in range(2, 12):
        r = greedy_tile(s, triangle, N, SymbolicPoint((0,)))
        print(f"N={N:2d}  coverage {r.coverage:.4f}  untiled near the bottom {r.band_fraction:.4f}")

    # tall tiles below symbol 0, single edges below symbol 1
    two = TileAssignment.by_first_symbol([complete_tree(s.alphabet, 4), complete_tree(s.alphabet, 1)])
    rng = np.random.default_rng(5)
    points = [s.sample_point(rng, 1) for _ in range(200)]
    sweep = tiling_parameter_sweep(s, two, 0.2, points)
    print(f"epsilon 0.2: L={sweep.L} N={sweep.N}, {sweep.success_fraction:.0%} of points covered to 0.8")


if __name__ == "__main__":
    main()
