"""Zero-mean Gaussian-process regression on top of the fast solver.

With C = noise*I + K(x, x), a fitted model caches alpha = C^{-1} y and gives

    mean(x*)     = k(x*, x) alpha
    variance(x*) = k(x*, x*) - k(x*, x) C^{-1} k(x, x*)
    log p(y)     = -y.alpha / 2 - log det C / 2 - n log(2 pi) / 2
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import dense_ref, hodlr
from .geometry import PointSet, kd_sort
from .kernels import KernelSpec

log = logging.getLogger(__name__)

QUERY_BATCH = 64
VARIANCE_SLACK = 1e-8
ENGINES = ("hodlr", "dense")


@dataclass(frozen=True)
class GpModel:
    spec: KernelSpec
    train: PointSet
    targets: np.ndarray
    fact: object  # HodlrFactorization or DenseFactorization; both solve in original order
    alpha: np.ndarray
    engine: str = "hodlr"

    @property
    def n(self) -> int:
        return self.train.n

    def predict(self, xstar) -> tuple[np.ndarray, np.ndarray]:
        return predict(self, xstar)

    def log_marginal_likelihood(self) -> float:
        return log_marginal_likelihood(self)


def _factor(spec: KernelSpec, pts: PointSet, eps: float, p_max: int, engine: str,
            dense_backend: str):
    if engine == "hodlr":
        return hodlr.factorize(hodlr.assemble(spec, pts, eps, p_max))
    if engine == "dense":
        return dense_ref.DenseFactorization(dense_ref.dense_assemble(spec, pts.points),
                                            backend=dense_backend)
    raise ValueError(f"unknown engine {engine!r}; expected one of {ENGINES}")


def fit(spec: KernelSpec, x, y, eps: float = hodlr.DEFAULT_EPS,
        p_max: int = hodlr.DEFAULT_P_MAX, engine: str = "hodlr",
        dense_backend: str = "naive") -> GpModel:
    pts = x if isinstance(x, PointSet) else kd_sort(x, p_max)
    y = np.asarray(y, dtype=float)
    if y.shape != (pts.n,):
        raise ValueError(f"targets must have shape ({pts.n},), got {y.shape}")
    fact = _factor(spec, pts, eps, p_max, engine, dense_backend)
    alpha = fact.solve(y)
    return GpModel(spec, pts, y, fact, alpha, engine)


def predict(model: GpModel, xstar) -> tuple[np.ndarray, np.ndarray]:
    """Predictive mean and variance at query points (one solve per query)."""
    xs = np.asarray(xstar, dtype=float)
    if xs.ndim == 1:
        xs = xs[:, None] if model.train.dim == 1 else xs[None, :]
    if xs.shape[1] != model.train.dim:
        raise ValueError(f"query dimension {xs.shape[1]} != training dimension {model.train.dim}")
    spec = model.spec
    xtrain = model.train.points
    mean = np.empty(xs.shape[0])
    var = np.empty(xs.shape[0])
    for s in range(0, xs.shape[0], QUERY_BATCH):
        q = xs[s:s + QUERY_BATCH]
        kx = spec.block(xtrain, q)  # n x batch
        mean[s:s + len(q)] = kx.T @ model.alpha
        solved = model.fact.solve(kx)
        var[s:s + len(q)] = spec.pairs(q, q) - np.einsum("ij,ij->j", kx, solved)
    if np.any(var < -VARIANCE_SLACK):
        warnings.warn(f"predictive variance as low as {var.min():.3e}; clamped to 0",
                      RuntimeWarning, stacklevel=2)
    np.maximum(var, 0.0, out=var)
    return mean, var


def log_marginal_likelihood(model: GpModel) -> float:
    sign, logdet = model.fact.slogdet()
    if sign <= 0:
        # singular or indefinite C: the Gaussian density does not exist
        return -math.inf
    n = model.n
    return float(-0.5 * model.targets @ model.alpha - 0.5 * logdet - 0.5 * n * math.log(2 * math.pi))


def loglik_grid_scan(x, y, spec_template: KernelSpec, param_name: str, grid: Sequence[float],
                     eps: float = hodlr.DEFAULT_EPS, p_max: int = hodlr.DEFAULT_P_MAX,
                     engine: str = "hodlr", dense_backend: str = "naive") -> list[tuple[float, float]]:
    """Refit for each grid value of one hyperparameter; failures give NaN."""
    if len(grid) == 0:
        raise ValueError("grid must be non-empty")
    pts = x if isinstance(x, PointSet) else kd_sort(x, p_max)
    out = []
    for value in grid:
        try:
            spec = spec_template.with_param(param_name, float(value))
            ll = log_marginal_likelihood(fit(spec, pts, y, eps, p_max, engine, dense_backend))
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            log.warning("%s=%g failed: %s", param_name, value, exc)
            ll = math.nan
        out.append((float(value), ll))
    return out


def scan_argmax(scan: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """Grid point with the largest finite log-likelihood."""
    finite = [(v, ll) for v, ll in scan if math.isfinite(ll)]
    if not finite:
        raise ValueError("no grid point produced a finite log-likelihood")
    return max(finite, key=lambda p: p[1])
