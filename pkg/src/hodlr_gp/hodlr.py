"""HODLR representation and factorization of C = noise*I + K.

The kd-sorted index range is split recursively (count median) into
``kappa = floor(log2(n / p_max))`` levels. Every sibling pair at depth ``j``
is coupled by two off-diagonal blocks, stored as ACA factors, and the
``2**kappa`` leaves hold dense diagonal blocks.

The factorization writes ``C = K_kappa K_{kappa-1} ... K_0``. ``K_kappa`` is
the block diagonal of dense leaves. For ``j < kappa``, ``K_j`` has one
diagonal block per node at depth ``j``, of the form

    [[I,              Ut_up V_up^T],
     [Ut_lo V_lo^T,   I           ]]

where ``Ut_*`` are the node's left factors after the inverses of all finer
factors have been applied to them, and ``V_*`` are untouched. Factoring runs
from the leaves upward. Each node carries a panel holding the left factors
of all its ancestors restricted to its rows. The node's own inverse is
applied to the panel, and the panel is handed to the parent. The parent
takes its own transformed factors from the trailing columns of its
children's panels and stacks the rest.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.spatial import cKDTree

from .geometry import PointSet, kd_sort, split_sizes
from .kernels import Family, KernelSpec
from .lowrank import LowRankBlock, aca_compress

log = logging.getLogger(__name__)

DEFAULT_P_MAX = 20
DEFAULT_EPS = 1e-12
# the solve error grows with the condition number, so blocks are rounded
# well inside their tolerance
BLOCK_ROUNDING = 0.1
# kernels whose value decreases with distance
DECAYING = frozenset({Family.GAUSSIAN, Family.EXPONENTIAL, Family.INVERSE_MULTIQUADRIC,
                      Family.MATERN, Family.RATIONAL_QUADRATIC})


class FactorizationError(ArithmeticError):
    """A diagonal block or a Woodbury inner system is singular."""


def num_levels(n: int, p_max: int) -> int:
    """kappa = floor(log2(n / p_max)), never negative."""
    if n <= p_max:
        return 0
    return int(math.floor(math.log2(n / p_max)))


@dataclass
class Node:
    start: int
    stop: int
    depth: int
    left: Node | None = None
    right: Node | None = None
    # upper: rows of left child x cols of right child; lower: the mirror block
    upper: LowRankBlock | None = None
    lower: LowRankBlock | None = None

    @property
    def size(self) -> int:
        return self.stop - self.start

    @property
    def mid(self) -> int:
        return self.left.stop

    @property
    def is_leaf(self) -> bool:
        return self.left is None


def _build_nodes(n: int, kappa: int) -> tuple[Node, list[list[Node]]]:
    root = Node(0, n, 0)
    levels = [[root]]
    for depth in range(kappa):
        nxt = []
        for node in levels[depth]:
            a, _ = split_sizes(node.size)
            node.left = Node(node.start, node.start + a, depth + 1)
            node.right = Node(node.start + a, node.stop, depth + 1)
            nxt += [node.left, node.right]
        levels.append(nxt)
    return root, levels


class HodlrTree:
    """Compressed hierarchical matrix over kd-sorted points.

    Internal arrays live in sorted order; ``matvec`` and ``to_dense`` accept
    and return original-order data unless ``sorted_order=True``.
    """

    def __init__(self, spec: KernelSpec, points: PointSet, root: Node,
                 levels: list[list[Node]], leaf_blocks: list[np.ndarray],
                 eps: float, p_max: int):
        self.spec = spec
        self.points = points
        self.root = root
        self.levels = levels
        self.leaf_blocks = leaf_blocks
        self.eps = eps
        self.p_max = p_max

    @property
    def n(self) -> int:
        return self.points.n

    @property
    def kappa(self) -> int:
        return len(self.levels) - 1

    @property
    def leaves(self) -> list[Node]:
        return self.levels[-1]

    def ranks_by_level(self) -> list[list[int]]:
        """Off-diagonal ranks per depth 0..kappa-1, two per node (upper, lower)."""
        return [[r for nd in lvl for r in (nd.upper.rank, nd.lower.rank)]
                for lvl in self.levels[:-1]]

    def max_rank_by_level(self) -> list[int]:
        return [max(rs) if rs else 0 for rs in self.ranks_by_level()]

    @property
    def dense_fallbacks(self) -> int:
        return sum(nd.upper.truncated + nd.lower.truncated
                   for lvl in self.levels[:-1] for nd in lvl)

    def summary(self) -> dict:
        return {
            "n": self.n,
            "dim": self.points.dim,
            "kappa": self.kappa,
            "p_max": self.p_max,
            "eps": self.eps,
            "max_rank_by_level": self.max_rank_by_level(),
            "dense_fallbacks": self.dense_fallbacks,
        }

    # -- products -------------------------------------------------------

    def matvec_sorted(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        vec = x.ndim == 1
        x2 = x[:, None] if vec else x
        if x2.shape[0] != self.n:
            raise ValueError(f"expected {self.n} rows, got {x2.shape[0]}")
        y = np.empty_like(x2)
        for leaf, blk in zip(self.leaves, self.leaf_blocks):
            y[leaf.start:leaf.stop] = blk @ x2[leaf.start:leaf.stop]
        for lvl in self.levels[:-1]:
            for nd in lvl:
                s, m, e = nd.start, nd.mid, nd.stop
                if nd.upper.rank:
                    y[s:m] += nd.upper.U @ (nd.upper.V.T @ x2[m:e])
                if nd.lower.rank:
                    y[m:e] += nd.lower.U @ (nd.lower.V.T @ x2[s:m])
        return y[:, 0] if vec else y

    def matvec(self, x: np.ndarray, sorted_order: bool = False) -> np.ndarray:
        """C @ x using dense leaves and factored off-diagonal blocks."""
        _check_rows(x, self.n)
        if sorted_order:
            return self.matvec_sorted(x)
        return self.points.to_original(self.matvec_sorted(self.points.to_sorted(x)))

    def to_dense(self, sorted_order: bool = False) -> np.ndarray:
        """Densify the compressed matrix (tests and small n only)."""
        a = np.zeros((self.n, self.n))
        for leaf, blk in zip(self.leaves, self.leaf_blocks):
            a[leaf.start:leaf.stop, leaf.start:leaf.stop] = blk
        for lvl in self.levels[:-1]:
            for nd in lvl:
                s, m, e = nd.start, nd.mid, nd.stop
                a[s:m, m:e] = nd.upper.to_dense()
                a[m:e, s:m] = nd.lower.to_dense()
        if sorted_order:
            return a
        p = self.points.perm
        out = np.empty_like(a)
        out[np.ix_(p, p)] = a
        return out

    def factorize(self) -> HodlrFactorization:
        return factorize(self)


def _nearest_pairs(spec: KernelSpec, rows: np.ndarray, cols: np.ndarray):
    """Each point's nearest neighbour in the other cluster, with the kernel value there.

    For a kernel that decreases with distance these are the largest entries
    of every row and column of the block.
    """
    _, j = cKDTree(cols).query(rows)
    _, i = cKDTree(rows).query(cols)
    pi = np.concatenate([np.arange(len(rows)), i])
    pj = np.concatenate([j, np.arange(len(cols))])
    return pi, pj, spec.pairs(rows[pi], cols[pj])


def _diag_scale(spec: KernelSpec) -> float:
    scale = abs(spec.diagonal)
    return scale if scale > 0 else 1.0


def assemble(spec: KernelSpec, points: PointSet | np.ndarray, eps: float = DEFAULT_EPS,
             p_max: int = DEFAULT_P_MAX, *, seed: int = 0) -> HodlrTree:
    """Compress all off-diagonal blocks of C over kd-sorted points.

    Raw coordinate arrays are kd-sorted first with leaf size ``p_max``. A
    block is accurate to ``eps`` relative to itself, or to ``eps`` times the
    diagonal of C when that is larger, so numerically vanishing far-field
    blocks get rank 0. For decaying kernels the nearest-neighbour entries
    of each block must also be reproduced, which catches blocks that are
    sparse rather than low-rank (scattered data in many dimensions). Blocks
    that fail to compress within half their size are stored exactly instead.
    """
    if not 0 < eps < 1:
        raise ValueError(f"eps must be in (0, 1), got {eps}")
    if p_max < 1:
        raise ValueError(f"p_max must be >= 1, got {p_max}")
    if not isinstance(points, PointSet):
        points = kd_sort(points, p_max)
    x = points.sorted
    n = points.n
    kappa = num_levels(n, p_max)
    root, levels = _build_nodes(n, kappa)
    abs_tol = eps * _diag_scale(spec)
    decaying = spec.family in DECAYING and spec.params["amplitude"] > 0

    for lvl in levels[:-1]:
        for nd in lvl:
            s, m, e = nd.start, nd.mid, nd.stop
            rows, cols = x[s:m], x[m:e]

            def entry(i, j, rows=rows, cols=cols):
                return spec.block(rows[i], cols[j])

            probes = _nearest_pairs(spec, rows, cols) if decaying else None
            blk = aca_compress(entry, m - s, e - m, eps, abs_tol=abs_tol,
                               seed=(s * 1_000_003 + m) % 2**32, probes=probes,
                               rounding=BLOCK_ROUNDING)
            if blk.truncated:
                log.debug("block [%d:%d, %d:%d] not compressible, stored dense", s, m, m, e)
                blk = LowRankBlock.from_dense(spec.block(rows, cols))
                blk.truncated = True
            blk.row_offset, blk.col_offset = s, m
            nd.upper = blk
            # C is symmetric: the mirror block reuses the factors swapped
            nd.lower = blk.transpose()

    leaf_blocks = []
    for leaf in levels[-1]:
        pts = x[leaf.start:leaf.stop]
        blk = spec.block(pts, pts)
        blk[np.diag_indices_from(blk)] += spec.noise_variance
        leaf_blocks.append(blk)
    return HodlrTree(spec, points, root, levels, leaf_blocks, eps, p_max)


@dataclass
class _LevelBlock:
    """One diagonal block I + L R of a factor K_j, j < kappa."""

    start: int
    mid: int
    stop: int
    ut_up: np.ndarray
    v_up: np.ndarray
    ut_lo: np.ndarray
    v_lo: np.ndarray
    inner: tuple | None  # LU of I + R L, None when both ranks are 0

    def solve_inplace(self, x: np.ndarray) -> None:
        if self.inner is None:
            return
        s, m, e = self.start, self.mid, self.stop
        r = self.ut_up.shape[1]
        z = np.concatenate([self.v_up.T @ x[m:e], self.v_lo.T @ x[s:m]])
        w = sla.lu_solve(self.inner, z, check_finite=False)
        if r:
            x[s:m] -= self.ut_up @ w[:r]
        if w.shape[0] > r:
            x[m:e] -= self.ut_lo @ w[r:]

    def dense(self) -> np.ndarray:
        s, m, e = self.start, self.mid, self.stop
        b = np.eye(e - s)
        b[: m - s, m - s:] = self.ut_up @ self.v_up.T
        b[m - s:, : m - s] = self.ut_lo @ self.v_lo.T
        return b


def _lu_slogdet(lu: tuple) -> tuple[float, float]:
    fac, piv = lu
    d = np.diag(fac)
    if np.any(d == 0):
        return 0.0, -math.inf
    swaps = np.count_nonzero(piv != np.arange(piv.size))
    sign = (-1.0) ** swaps * np.prod(np.sign(d))
    return float(sign), float(np.sum(np.log(np.abs(d))))


def _check_rows(a, n: int) -> None:
    rows = np.shape(a)[0] if np.ndim(a) else 0
    if rows != n:
        raise ValueError(f"expected {n} rows, got {rows}")


def _lu_factor(a: np.ndarray, what: str) -> tuple:
    with warnings.catch_warnings():
        # zero pivots are reported below as FactorizationError
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        fac, piv = sla.lu_factor(a, check_finite=False)
    if np.any(np.diag(fac) == 0) or not np.all(np.isfinite(fac)):
        raise FactorizationError(f"{what} is singular")
    return fac, piv


@dataclass
class HodlrFactorization:
    """C = K_kappa ... K_0 with each factor's inverse applicable cheaply.

    Immutable once built; ``solve`` and ``slogdet`` are safe to call
    concurrently.
    """

    tree: HodlrTree
    leaf_lu: list[tuple]
    levels: list[list[_LevelBlock]]
    _slogdet: tuple[float, float] | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.tree.n

    @property
    def kappa(self) -> int:
        return self.tree.kappa

    def solve_sorted(self, rhs: np.ndarray) -> np.ndarray:
        b = np.asarray(rhs, dtype=float)
        vec = b.ndim == 1
        x = (b[:, None] if vec else b).copy()
        if x.shape[0] != self.n:
            raise ValueError(f"expected {self.n} rows, got {x.shape[0]}")
        for leaf, lu in zip(self.tree.leaves, self.leaf_lu):
            x[leaf.start:leaf.stop] = sla.lu_solve(lu, x[leaf.start:leaf.stop], check_finite=False)
        # K_{kappa-1}^{-1} first, K_0^{-1} last
        for blocks in reversed(self.levels):
            for blk in blocks:
                blk.solve_inplace(x)
        return x[:, 0] if vec else x

    def solve(self, rhs: np.ndarray, sorted_order: bool = False) -> np.ndarray:
        """x with C x = rhs; rhs may be a vector or an n x k array."""
        _check_rows(rhs, self.n)
        if sorted_order:
            return self.solve_sorted(rhs)
        pts = self.tree.points
        return pts.to_original(self.solve_sorted(pts.to_sorted(rhs)))

    def factor_slogdets(self) -> list[tuple[float, float]]:
        """(sign, log|det|) of each factor, ordered K_kappa, K_{kappa-1}, ..., K_0."""
        out = []
        sign, total = 1.0, 0.0
        for lu in self.leaf_lu:
            s, v = _lu_slogdet(lu)
            sign *= s
            total += v
        out.append((sign, total))
        for blocks in reversed(self.levels):
            sign, total = 1.0, 0.0
            for blk in blocks:
                if blk.inner is not None:
                    # Sylvester: det(I + L R) = det(I + R L)
                    s, v = _lu_slogdet(blk.inner)
                    sign *= s
                    total += v
            out.append((sign, total))
        return out

    def slogdet(self) -> tuple[float, float]:
        """(sign, log|det C|); sign 0 and -inf flag a singular factor."""
        if self._slogdet is None:
            parts = self.factor_slogdets()
            sign = float(np.prod([s for s, _ in parts]))
            value = -math.inf if sign == 0 else float(sum(v for _, v in parts))
            self._slogdet = (sign, value)
        return self._slogdet

    def log_abs_det(self) -> float:
        return self.slogdet()[1]

    @property
    def singular(self) -> bool:
        return self.slogdet()[0] == 0

    def factor_matrices(self) -> list[np.ndarray]:
        """Dense K_kappa, ..., K_0 in sorted order (tests and small n only)."""
        n = self.n
        k_dense = np.zeros((n, n))
        for leaf, blk in zip(self.tree.leaves, self.tree.leaf_blocks):
            k_dense[leaf.start:leaf.stop, leaf.start:leaf.stop] = blk
        mats = [k_dense]
        for blocks in reversed(self.levels):
            f = np.eye(n)
            for blk in blocks:
                f[blk.start:blk.stop, blk.start:blk.stop] = blk.dense()
            mats.append(f)
        return mats


def factorize(tree: HodlrTree) -> HodlrFactorization:
    """Factor the tree into K_kappa ... K_0, finest level first."""
    leaves = tree.leaves
    leaf_lu = [_lu_factor(blk, f"leaf block [{lf.start}:{lf.stop}]")
               for lf, blk in zip(leaves, tree.leaf_blocks)]

    # panels[id(node)]: left factors of all ancestors (root first) on the node's rows
    panels: dict[int, np.ndarray] = {}

    def gather(node: Node, stack: list[tuple[np.ndarray, int]]) -> None:
        if node.is_leaf:
            cols = [u[node.start - off: node.stop - off] for u, off in stack]
            panels[id(node)] = np.hstack(cols) if cols else np.zeros((node.size, 0))
            return
        gather(node.left, stack + [(node.upper.U, node.start)])
        gather(node.right, stack + [(node.lower.U, node.mid)])

    gather(tree.root, [])
    for leaf, lu in zip(leaves, leaf_lu):
        p = panels[id(leaf)]
        if p.shape[1]:
            panels[id(leaf)] = sla.lu_solve(lu, p, check_finite=False)

    levels: list[list[_LevelBlock]] = [[] for _ in range(tree.kappa)]
    for depth in range(tree.kappa - 1, -1, -1):
        for nd in tree.levels[depth]:
            pa = panels.pop(id(nd.left))
            pb = panels.pop(id(nd.right))
            r_up, r_lo = nd.upper.rank, nd.lower.rank
            keep = pa.shape[1] - r_up
            ut_up = pa[:, keep:]
            ut_lo = pb[:, keep:]
            v_up, v_lo = nd.upper.V, nd.lower.V
            inner = None
            if r_up + r_lo:
                # R L for L = diag(ut_up, ut_lo), R = [[0, v_up^T], [v_lo^T, 0]]
                m_inner = np.eye(r_up + r_lo)
                m_inner[:r_up, r_up:] += v_up.T @ ut_lo
                m_inner[r_up:, :r_up] += v_lo.T @ ut_up
                inner = _lu_factor(m_inner, f"inner system at depth {depth} [{nd.start}:{nd.stop}]")
            blk = _LevelBlock(nd.start, nd.mid, nd.stop, np.ascontiguousarray(ut_up), v_up,
                              np.ascontiguousarray(ut_lo), v_lo, inner)
            levels[depth].append(blk)
            if depth:
                panel = np.vstack([pa[:, :keep], pb[:, :keep]])
                if panel.shape[1]:
                    shifted = _LevelBlock(0, nd.mid - nd.start, nd.size, blk.ut_up, v_up,
                                          blk.ut_lo, v_lo, inner)
                    shifted.solve_inplace(panel)
                panels[id(nd)] = panel
    return HodlrFactorization(tree, leaf_lu, levels)


def build(spec: KernelSpec, points, eps: float = DEFAULT_EPS, p_max: int = DEFAULT_P_MAX) -> HodlrFactorization:
    """kd-sort, assemble and factorize in one call."""
    return factorize(assemble(spec, points, eps, p_max))
