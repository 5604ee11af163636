"""Dense reference: full assembly, LU/Cholesky solves and log-determinants.

Deliberately plain. Used as the oracle in tests and as the ``dense`` engine
(the conventional O(n^3) direct method) of the command-line experiments.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .kernels import KernelSpec

MAX_DENSE_N = 20000
BACKENDS = ("naive", "lapack")


class DenseSizeError(ValueError):
    pass


@dataclass(frozen=True)
class DenseMatrix:
    array: np.ndarray
    spec: KernelSpec | None = None
    points: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.array.shape[0]


def _as_array(m) -> np.ndarray:
    return m.array if isinstance(m, DenseMatrix) else np.asarray(m, dtype=float)


def dense_assemble(spec: KernelSpec, points) -> DenseMatrix:
    """All entries C_ij = k(x_i, x_j) + noise * [i == j], original point order."""
    x = points.points if hasattr(points, "points") else np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if n > MAX_DENSE_N:
        raise DenseSizeError(f"n={n} exceeds the dense size guard {MAX_DENSE_N}")
    a = spec.block(x, x)
    a[np.diag_indices(n)] += spec.noise_variance
    return DenseMatrix(a, spec, x)


def dense_matvec(spec: KernelSpec, points, v: np.ndarray, chunk: int = 2048) -> np.ndarray:
    """C @ v by streaming row panels, without holding the full matrix."""
    x = points.points if hasattr(points, "points") else np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    v = np.asarray(v, dtype=float)
    out = np.empty_like(v)
    for s in range(0, x.shape[0], chunk):
        out[s:s + chunk] = spec.block(x[s:s + chunk], x) @ v
    return out + spec.noise_variance * v


def is_symmetric(m) -> bool:
    a = _as_array(m)
    return a.shape[0] == a.shape[1] and np.array_equal(a, a.T)


def naive_lu(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unblocked right-looking LU with partial pivoting.

    Returns the packed factors (unit-lower L below the diagonal, U on and
    above it) and ``perm`` such that ``a[perm] = L @ U``.
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    perm = np.arange(n)
    for k in range(n):
        p = k + int(np.argmax(np.abs(a[k:, k])))
        if a[p, k] == 0.0:
            raise np.linalg.LinAlgError(f"matrix is singular (zero pivot in column {k})")
        if p != k:
            a[[k, p]] = a[[p, k]]
            perm[[k, p]] = perm[[p, k]]
        a[k + 1:, k] /= a[k, k]
        a[k + 1:, k + 1:] -= np.outer(a[k + 1:, k], a[k, k + 1:])
    return a, perm


def naive_cholesky(a: np.ndarray) -> np.ndarray:
    """Unblocked outer-product Cholesky, lower factor; raises if not positive definite."""
    a = np.array(a, dtype=float)
    n = a.shape[0]
    for k in range(n):
        if not a[k, k] > 0.0:
            raise np.linalg.LinAlgError(f"matrix is not positive definite (pivot {k})")
        a[k, k] = math.sqrt(a[k, k])
        a[k + 1:, k] /= a[k, k]
        c = a[k + 1:, k]
        a[k + 1:, k + 1:] -= np.outer(c, c)
    return np.tril(a)


def _forward(l: np.ndarray, b: np.ndarray, unit: bool) -> np.ndarray:
    x = np.array(b, dtype=float)
    for i in range(l.shape[0]):
        x[i] -= l[i, :i] @ x[:i]
        if not unit:
            x[i] /= l[i, i]
    return x


def _backward(u: np.ndarray, b: np.ndarray) -> np.ndarray:
    x = np.array(b, dtype=float)
    for i in range(u.shape[0] - 1, -1, -1):
        x[i] = (x[i] - u[i, i + 1:] @ x[i + 1:]) / u[i, i]
    return x


class DenseFactorization:
    """Cholesky when the matrix is symmetric positive definite, partial-pivot LU otherwise.

    ``backend="naive"`` runs the textbook unblocked algorithms above, whose
    cost grows as n^3 at every size; ``backend="lapack"`` uses scipy and is
    much faster.
    """

    def __init__(self, m, method: str = "auto", backend: str = "naive"):
        a = _as_array(m)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"matrix must be square, got {a.shape}")
        if method not in ("auto", "cholesky", "lu"):
            raise ValueError(f"unknown method {method!r}")
        if backend not in BACKENDS:
            raise ValueError(f"unknown backend {backend!r}; expected one of {BACKENDS}")
        self.n = a.shape[0]
        self.backend = backend
        self._chol = None
        self._lu = None
        if method in ("auto", "cholesky"):
            if is_symmetric(a):
                try:
                    self._chol = (naive_cholesky(a) if backend == "naive"
                                  else sla.cholesky(a, lower=True))
                except np.linalg.LinAlgError:
                    if method == "cholesky":
                        raise
            elif method == "cholesky":
                raise np.linalg.LinAlgError("Cholesky requested for a nonsymmetric matrix")
        if self._chol is None:
            if backend == "naive":
                self._lu = naive_lu(a)
            else:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", sla.LinAlgWarning)
                    fac, piv = sla.lu_factor(a)
                if np.any(np.diag(fac) == 0):
                    raise np.linalg.LinAlgError("matrix is singular")
                self._lu = (fac, piv)
        self.method = "cholesky" if self._chol is not None else "lu"

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape[0] != self.n:
            raise ValueError(f"expected {self.n} rows, got {rhs.shape[0]}")
        if self.backend == "lapack":
            if self._chol is not None:
                return sla.cho_solve((self._chol, True), rhs)
            return sla.lu_solve(self._lu, rhs)
        if self._chol is not None:
            return _backward(self._chol.T, _forward(self._chol, rhs, unit=False))
        fac, perm = self._lu
        return _backward(fac, _forward(fac, rhs[perm], unit=True))

    def slogdet(self) -> tuple[float, float]:
        if self._chol is not None:
            return 1.0, float(2.0 * np.sum(np.log(np.diag(self._chol))))
        fac, piv = self._lu
        d = np.diag(fac)
        if self.backend == "lapack":
            swaps = np.count_nonzero(piv != np.arange(piv.size))
        else:
            # parity of the row permutation = n - number of cycles
            swaps = piv.size - _cycle_count(piv)
        sign = (-1.0) ** swaps * float(np.prod(np.sign(d)))
        return sign, float(np.sum(np.log(np.abs(d))))

    def log_abs_det(self) -> float:
        return self.slogdet()[1]


def _cycle_count(perm: np.ndarray) -> int:
    seen = np.zeros(perm.size, dtype=bool)
    cycles = 0
    for i in range(perm.size):
        if not seen[i]:
            cycles += 1
            j = i
            while not seen[j]:
                seen[j] = True
                j = perm[j]
    return cycles


def dense_solve(m, rhs: np.ndarray, method: str = "auto", backend: str = "naive") -> np.ndarray:
    return DenseFactorization(m, method, backend).solve(rhs)


def dense_slogdet(m, method: str = "auto", backend: str = "naive") -> tuple[float, float]:
    try:
        return DenseFactorization(m, method, backend).slogdet()
    except np.linalg.LinAlgError:
        if method == "cholesky":
            raise
        return 0.0, -math.inf


def dense_logdet(m, method: str = "auto", backend: str = "naive") -> float:
    """log|det M| as the sum of log|pivot| (or twice the log Cholesky diagonal)."""
    return dense_slogdet(m, method, backend)[1]
