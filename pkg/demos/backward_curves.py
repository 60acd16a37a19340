"""Backward averages along complete trees for a few catalog systems.

Run from the repository root: ``python3 demos/backward_curves.py``.
"""

import math

import numpy as np

from ergotree import SymbolicPoint, bernoulli_system, block_chain_system, cesaro_backward, gauss_system
from ergotree.systems import first_symbol_values, gauss_identity, indicator


def show(title, report, every=4):
    print(title)
    for row in report.rows[::every]:
        err = "" if row.target is None else f"  |err| {row.abs_error:.4f}"
        print(f"  n={row.index:2d}  weight {row.total_weight:8.3f}  average {row.average:.5f}{err}")


def main():
    show("Bernoulli(1/2, 1/2), f = 1[x0 = 0]", cesaro_backward(bernoulli_system(2), indicator(0), 20, SymbolicPoint((1,))))

    g = gauss_system(50)
    x = g.sample_point(np.random.default_rng(1))
    target = (1 - math.log(2)) / math.log(2)
    show(f"Gauss map at x = {float(x):.6f}, f(x) = x", cesaro_backward(g, gauss_identity(), 12, x, target=target))

    # two closed classes: averages settle on the mean of the point's own class
    blocks = block_chain_system()
    f = first_symbol_values([1, 2, 3, 4])
    for x0 in (0, 3):
        show(f"block chain from x0 = {x0}", cesaro_backward(blocks, f, 16, SymbolicPoint((x0,))), every=8)


if __name__ == "__main__":
    main()
