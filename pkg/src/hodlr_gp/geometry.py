"""kd-tree ordering of data points.

Points are recursively halved by count along a cycling coordinate axis. The
resulting leaf traversal order is the global ordering under which nested
index ranges correspond to spatially compact clusters, which is what makes
the off-diagonal covariance blocks compressible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEFAULT_LEAF_SIZE = 20


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class PointSet:
    """Points in their original order plus the kd-sorting permutation.

    ``perm[k]`` is the original index of the point at sorted position ``k``,
    so ``points[perm]`` is the sorted array (also available as ``sorted``).
    """

    points: np.ndarray
    perm: np.ndarray

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise GeometryError(f"points must be a non-empty n x d array, got shape {pts.shape}")
        perm = np.asarray(self.perm, dtype=np.intp)
        if perm.shape != (pts.shape[0],) or not np.array_equal(np.sort(perm), np.arange(pts.shape[0])):
            raise GeometryError("perm is not a permutation of 0..n-1")
        pts.setflags(write=False)
        perm.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "perm", perm)
        srt = pts[perm]
        srt.setflags(write=False)
        object.__setattr__(self, "sorted", srt)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.n

    def to_sorted(self, values: np.ndarray) -> np.ndarray:
        """Reorder per-point values (leading axis) from original to sorted order."""
        return np.asarray(values)[self.perm]

    def to_original(self, values: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`to_sorted`."""
        values = np.asarray(values)
        out = np.empty_like(values)
        out[self.perm] = values
        return out


def split_sizes(m: int) -> tuple[int, int]:
    """Child sizes of a count-median split; the left child takes the extra point."""
    left = (m + 1) // 2
    return left, m - left


def kd_sort(points, leaf_size: int = DEFAULT_LEAF_SIZE) -> PointSet:
    """Order points by recursive median splits, cycling the split axis with depth.

    Ties on the split coordinate keep their incoming relative order, so in one
    dimension the result is the stable ascending argsort.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise GeometryError("kd_sort needs at least one point")
    if leaf_size < 1:
        raise GeometryError(f"leaf_size must be >= 1, got {leaf_size}")
    n, d = pts.shape
    perm = np.arange(n)
    stack = [(0, n, 0)]
    while stack:
        lo, hi, depth = stack.pop()
        m = hi - lo
        axis = depth % d
        seg = perm[lo:hi]
        # leaves are sorted too, so the 1-D order is a full sort for any leaf_size
        perm[lo:hi] = seg[np.argsort(pts[seg, axis], kind="stable")]
        if m <= leaf_size:
            continue
        left, _ = split_sizes(m)
        stack.append((lo + left, hi, depth + 1))
        stack.append((lo, lo + left, depth + 1))
    return PointSet(pts, perm)


def uniform_points(n: int, dim: int, rng: np.random.Generator, scaled: bool = False) -> np.ndarray:
    """Uniform random points in [-3, 3]^d, or in [-3/sqrt(d), 3/sqrt(d)]^d when ``scaled``."""
    half = 3.0 / math.sqrt(dim) if scaled else 3.0
    return rng.uniform(-half, half, size=(n, dim))


def load_points_csv(path: str | Path) -> np.ndarray:
    """One point per row, one column per coordinate, no header."""
    data = np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
    if data.size == 0:
        raise GeometryError(f"{path}: no points")
    return data
