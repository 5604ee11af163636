"""Fast direct solver and log-determinant for dense kernel matrices.

Build a hierarchical off-diagonal low-rank (HODLR) approximation of
``C = noise * I + K`` with adaptive cross approximation, factor it into a
product of block-diagonal identity-plus-low-rank matrices, and use the
factors for solves, determinants and Gaussian-process regression.
"""

from .dense_ref import DenseFactorization, dense_assemble, dense_logdet, dense_slogdet, dense_solve
from .geometry import GeometryError, PointSet, kd_sort, load_points_csv, uniform_points
from .gp import GpModel, fit, log_marginal_likelihood, loglik_grid_scan, predict
from .hodlr import (
    DEFAULT_EPS,
    DEFAULT_P_MAX,
    FactorizationError,
    HodlrFactorization,
    HodlrTree,
    assemble,
    build,
    factorize,
    num_levels,
)
from .kernels import Family, KernelError, KernelSpec, eval_entry, eval_kernel
from .lowrank import LowRankBlock, aca_compress, svd_truncate

__all__ = [
    "DEFAULT_EPS", "DEFAULT_P_MAX", "DenseFactorization", "Family", "FactorizationError",
    "GeometryError", "GpModel", "HodlrFactorization", "HodlrTree", "KernelError", "KernelSpec",
    "LowRankBlock", "PointSet", "aca_compress", "assemble", "build", "dense_assemble",
    "dense_logdet", "dense_slogdet", "dense_solve", "eval_entry", "eval_kernel", "factorize",
    "fit", "kd_sort", "load_points_csv", "log_marginal_likelihood", "loglik_grid_scan",
    "num_levels", "predict", "svd_truncate", "uniform_points",
]

__version__ = "0.1.0"
