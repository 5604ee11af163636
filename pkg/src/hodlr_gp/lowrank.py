"""Low-rank compression of matrix blocks.

``aca_compress`` is adaptive cross approximation (partially pivoted LU): it
reads one residual row and one residual column per step and never touches
the full block. ``svd_truncate`` is the optimal dense counterpart and is used
as the accuracy oracle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

# entry(rows, cols) -> len(rows) x len(cols) array of block entries
BlockSource = Callable[[np.ndarray, np.ndarray], np.ndarray]

DEGENERATE_RETRIES = 3
# crosses below this fraction of |S|_F are floating-point noise
ROUNDOFF = 1e-14
# ACA output is recompressed to this multiple of its stopping tolerance
ROUNDING = 1.0


@dataclass
class LowRankBlock:
    """``U @ V.T`` with U of shape (m, r) and V of shape (n, r)."""

    U: np.ndarray
    V: np.ndarray
    row_offset: int = 0
    col_offset: int = 0
    truncated: bool = False

    def __post_init__(self) -> None:
        if self.U.ndim != 2 or self.V.ndim != 2 or self.U.shape[1] != self.V.shape[1]:
            raise ValueError(f"incompatible factors {self.U.shape} and {self.V.shape}")

    @property
    def rank(self) -> int:
        return self.U.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.U.shape[0], self.V.shape[0]

    def to_dense(self) -> np.ndarray:
        return self.U @ self.V.T

    def transpose(self) -> LowRankBlock:
        return LowRankBlock(self.V, self.U, self.col_offset, self.row_offset, self.truncated)

    @classmethod
    def zeros(cls, m: int, n: int, row_offset: int = 0, col_offset: int = 0) -> LowRankBlock:
        return cls(np.zeros((m, 0)), np.zeros((n, 0)), row_offset, col_offset)

    @classmethod
    def from_dense(cls, a: np.ndarray, row_offset: int = 0, col_offset: int = 0) -> LowRankBlock:
        """Exact full-rank representation of a dense block (identity on the short side)."""
        m, n = a.shape
        if m <= n:
            return cls(np.eye(m), a.T.copy(), row_offset, col_offset)
        return cls(a.copy(), np.eye(n), row_offset, col_offset)


def entries_from_scalar(f: Callable[[int, int], float]) -> BlockSource:
    """Adapt a scalar ``f(i, j)`` to the vectorised block interface."""

    def entry(rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        return np.array([[f(int(i), int(j)) for j in cols] for i in rows], dtype=float)

    return entry


def aca_compress(
    entry: BlockSource,
    m: int,
    n: int,
    eps: float = 1e-12,
    max_rank: int | None = None,
    *,
    abs_tol: float = 0.0,
    seed: int = 0,
    probes: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None,
    rounding: float | None = ROUNDING,
) -> LowRankBlock:
    """Compress an m x n block given only access to its rows and columns.

    Each step takes the residual row at the current pivot row, pivots on its
    largest entry, and takes the matching residual column. The next pivot
    row is the largest entry of the new column among rows not used yet.

    Iteration stops once the new cross ``|u| |v|`` falls below
    ``max(eps * |S|_F, abs_tol)``, where ``S`` is the approximation built so
    far, and two random rows plus two random columns of the residual (2(m+n)
    entries) confirm the same bound; that final cross is kept unless it
    is at round-off level or below ``abs_tol``. A cross that is negligible but fails that
    check is kept, and the search restarts from the worst sampled row. If the
    pivot row is exactly zero, up to three random unused rows are tried before
    the rank is declared complete.

    ``probes = (rows, cols, values)`` lists known entries that must also be
    reproduced to the tolerance before stopping. Random samples cannot find
    the few large entries of a sparse block; a caller that knows where they
    are (e.g. nearest-neighbour pairs for a decaying kernel) passes them here.

    Hitting ``max_rank`` (default ``min(m, n) // 2``) without converging
    returns the factors so far with ``truncated=True``.
    """
    if m < 1 or n < 1:
        raise ValueError(f"block must be non-empty, got {m} x {n}")
    if not 0 < eps < 1:
        raise ValueError(f"eps must be in (0, 1), got {eps}")
    if max_rank is None:
        max_rank = max(1, min(m, n) // 2)
    if max_rank < 1:
        raise ValueError(f"max_rank must be >= 1, got {max_rank}")
    max_rank = min(max_rank, m, n)

    rng = np.random.default_rng(seed)
    all_rows = np.arange(m)
    all_cols = np.arange(n)
    # factors stored transposed (one contiguous row per cross), grown on demand
    cap = min(max_rank, 16)
    Ut = np.empty((cap, m))
    Vt = np.empty((cap, n))
    used = np.zeros(m, dtype=bool)
    k = 0
    norm2 = 0.0

    def residual_rows(rows: np.ndarray) -> np.ndarray:
        return entry(rows, all_cols) - Ut[:k, rows].T @ Vt[:k]

    def residual_cols(cols: np.ndarray) -> np.ndarray:
        return entry(all_rows, cols) - Ut[:k].T @ Vt[:k, cols]

    def _append(u: np.ndarray, v: np.ndarray) -> None:
        nonlocal k, norm2, Ut, Vt
        if k:
            norm2 += 2.0 * float((Ut[:k] @ u) @ (Vt[:k] @ v))
        norm2 = max(norm2 + float(u @ u) * float(v @ v), 0.0)
        if k == Ut.shape[0]:
            grow = min(2 * k, max_rank)
            Ut = np.concatenate([Ut, np.empty((grow - k, m))])
            Vt = np.concatenate([Vt, np.empty((grow - k, n))])
        Ut[k] = u
        Vt[k] = v
        k += 1

    def tolerance() -> float:
        return max(eps * np.sqrt(norm2), abs_tol)

    def sample_check() -> int | None:
        """Return None if the sampled residual meets the tolerance, else a row to pivot on."""
        if probes is not None and probes[0].size:
            p_rows, p_cols, p_vals = probes
            res = np.abs(p_vals - np.einsum("ki,ki->i", Ut[:k, p_rows], Vt[:k, p_cols]))
            worst = int(np.argmax(res))
            if res[worst] > tolerance():
                return int(p_rows[worst])
        rows = rng.choice(m, size=min(2, m), replace=False)
        cols = rng.choice(n, size=min(2, n), replace=False)
        r_rows = residual_rows(rows)
        r_cols = residual_cols(cols)
        count = r_rows.size + r_cols.size
        est = np.sqrt((np.sum(r_rows**2) + np.sum(r_cols**2)) * (m * n) / count)
        if est <= tolerance():
            return None
        worst_row_entry = np.max(np.abs(r_rows), axis=1)
        worst_col = np.abs(r_cols).max(axis=1)
        i_col = int(np.argmax(worst_col))
        if worst_col[i_col] >= worst_row_entry.max():
            return i_col
        return int(rows[np.argmax(worst_row_entry)])

    i = 0
    retries = 0
    truncated = False
    for _ in range(4 * (m + max_rank) + 16):
        row = residual_rows(np.array([i]))[0]
        used[i] = True
        j = int(np.argmax(np.abs(row)))
        pivot = row[j]
        if pivot == 0.0:
            free = np.flatnonzero(~used)
            if retries < DEGENERATE_RETRIES and free.size:
                retries += 1
                i = int(rng.choice(free))
                continue
            bad = sample_check()
            if bad is None or used.all():
                break
            i, retries = bad, 0
            continue
        retries = 0
        u = residual_cols(np.array([j]))[:, 0]
        v = row / pivot
        increment = np.linalg.norm(u) * np.linalg.norm(v)
        bad = None
        if increment <= tolerance():
            bad = sample_check()
            if bad is None:
                # keep the final cross unless it is round-off or below the absolute floor
                if k < max_rank and increment > max(ROUNDOFF * np.sqrt(norm2), abs_tol):
                    _append(u, v)
                break
        if k == max_rank:
            truncated = True
            break
        _append(u, v)
        if k == min(m, n):
            break
        cand = np.abs(u)
        cand[used] = -1.0
        i = int(np.argmax(cand))
        if cand[i] < 0:
            break
        if bad is not None and not used[bad]:
            # negligible cross kept only because the sample check failed
            i = bad

    U, V = Ut[:k].T, Vt[:k].T
    if rounding and k > 1 and not truncated:
        U, V = recompress(U, V, rounding * tolerance())
    return LowRankBlock(np.ascontiguousarray(U), np.ascontiguousarray(V), truncated=truncated)


def recompress(U: np.ndarray, V: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Shortest factors with |U V^T - U' V'^T|_F <= tol, via QR of both sides and an r x r SVD."""
    qu, ru = np.linalg.qr(U)
    qv, rv = np.linalg.qr(V)
    w, s, zt = np.linalg.svd(ru @ rv.T)
    tail = np.sqrt(np.concatenate([np.cumsum(s[::-1] ** 2)[::-1], [0.0]]))
    r = int(np.argmax(tail <= tol))
    return qu @ (w[:, :r] * s[:r]), qv @ zt[:r].T


def svd_truncate(dense_block: np.ndarray, eps: float = 1e-12) -> LowRankBlock:
    """Minimal-rank truncated SVD with relative Frobenius error at most ``eps``."""
    a = np.asarray(dense_block, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValueError("block has non-finite entries")
    m, n = a.shape
    if a.size == 0 or not np.any(a):
        return LowRankBlock.zeros(m, n)
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    rank = eps_rank(s, eps)
    return LowRankBlock(u[:, :rank] * s[:rank], vt[:rank].T.copy())


def eps_rank(singular_values: np.ndarray, eps: float) -> int:
    """Smallest r whose tail satisfies sqrt(sum_{k>=r} s_k^2) <= eps * |s|_2."""
    s2 = np.asarray(singular_values, dtype=float) ** 2
    total = s2.sum()
    if total == 0:
        return 0
    # tail[r] = sum of s_k^2 for k >= r
    tail = np.concatenate([np.cumsum(s2[::-1])[::-1], [0.0]])
    return int(np.argmax(tail <= (eps**2) * total))
