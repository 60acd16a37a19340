"""Backward and forward weighted ergodic averages along trees of preimages."""

__version__ = "0.1.0"

from .averaging import (
    AveragingReport,
    TreeEvaluation,
    boundary_forward_average,
    ball_average,
    cesaro_backward,
    forward_group_average,
    level_sums,
    transfer_iterate,
    tree_sweep_backward,
    tree_weight,
    weighted_average,
)
from .errors import (
    AmbiguousStationary,
    ConfigError,
    DomainError,
    EmptyTreeAtPoint,
    ErgotreeError,
    InsufficientDepth,
    InvalidAlphabet,
    NoReturnObserved,
    NotBoundarySupported,
    NotMeasurePreserving,
)
from .markov import (
    MarkovChain,
    cylinder_measure,
    expected_return_time,
    finfty_chain,
    is_irreducible,
    sample_path,
    stationary_distribution,
    survival_recurrence,
)
from .systems import (
    RealPoint,
    SymbolicPoint,
    ProductPoint,
    bernoulli_system,
    block_chain_system,
    boundary_system,
    circle_rotation_action,
    gauss_system,
    markov_shift_system,
    skew_product_system,
)
from .tiling import TileAssignment, greedy_tile, tiling_parameter_sweep
from .words import Alphabet, RightRootedTree, complete_tree, is_right_rooted, random_tree
