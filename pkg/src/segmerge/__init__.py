"""Multidimensional segmented regression by greedy bottom-up merging on a dyadic rank grid."""

from .baseline import CartModel, cart_fit
from .evaluate import empirical_risk, oracle_mse, per_rect_err, predict
from .grid import (
    DyadicTree,
    TreeNode,
    build_grid,
    build_tree,
    decompose_rectangle,
    decompose_to_nodes,
    dyadic_decompose_interval,
    level_rectangles,
)
from .merge import (
    MergeConfig,
    default_stop_count,
    estimate_sigma,
    fit_merging,
    greedy_merge,
    piece_count_bound,
    regularized_error,
    sibling_groups,
)
from .model import (
    Dataset,
    FittedModel,
    FittedPiece,
    Grid,
    Kernel,
    NoiseSpec,
    RankRect,
    rank_of,
    read_csv,
    write_csv,
)
from .persist import load_model, save_model
from .solver import apply_kernel, fit_rectangle, least_squares
from .synth import gen_synthetic, true_fit_mse

__all__ = [
    "CartModel",
    "Dataset",
    "DyadicTree",
    "FittedModel",
    "FittedPiece",
    "Grid",
    "Kernel",
    "MergeConfig",
    "NoiseSpec",
    "RankRect",
    "TreeNode",
    "apply_kernel",
    "build_grid",
    "build_tree",
    "cart_fit",
    "decompose_rectangle",
    "decompose_to_nodes",
    "default_stop_count",
    "dyadic_decompose_interval",
    "empirical_risk",
    "estimate_sigma",
    "fit_merging",
    "fit_rectangle",
    "gen_synthetic",
    "greedy_merge",
    "least_squares",
    "level_rectangles",
    "load_model",
    "oracle_mse",
    "per_rect_err",
    "piece_count_bound",
    "predict",
    "rank_of",
    "read_csv",
    "regularized_error",
    "save_model",
    "sibling_groups",
    "true_fit_mse",
    "write_csv",
]

__version__ = "0.1.0"
