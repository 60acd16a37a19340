"""Forward ball averages of a free-group rotation action, and the boundary route to them.

Run from the repository root: ``python3 demos/free_group_forward.py``.
"""

import numpy as np

from ergotree import ball_average, circle_rotation_action, skew_product_system
from ergotree.averaging import backward_bridge, forward_group_average, forward_group_mass
from ergotree.systems import cos2pi
from ergotree.words import random_tree


def main():
    skew = skew_product_system(circle_rotation_action(2))
    f = cos2pi()
    xs = np.random.default_rng(3).random(20)
    for n in (2, 4, 8, 12):
        avgs = np.asarray(ball_average(skew, f, n, xs))
        print(f"n={n:2d}  median |ball average| over 20 points: {np.median(np.abs(avgs)):.4f}")

    tree = random_tree(skew.alphabet, 4, 25, 11)
    mass, value = backward_bridge(skew, f, tree, 0.3)
    print("random tree of", len(tree), "words")
    print(f"  forward mass {forward_group_mass(skew, tree):.12f}  via boundary {mass:.12f}")
    print(f"  forward average {forward_group_average(skew, f, tree, 0.3):.12f}  via boundary {value / mass:.12f}")


if __name__ == "__main__":
    main()
