import numpy as np
import pytest

from hodlr_gp.kernels import KernelSpec
from hodlr_gp.lowrank import (LowRankBlock, aca_compress, entries_from_scalar, eps_rank,
                              svd_truncate)


def source(a):
    return lambda i, j: a[np.ix_(i, j)]


def gaussian_clusters(m=64, n=64, seed=0):
    rng = np.random.default_rng(seed)
    xa = np.sort(rng.uniform(-3, -1.5, m))[:, None]
    xb = np.sort(rng.uniform(1.5, 3, n))[:, None]
    return KernelSpec("gaussian").block(xa, xb)


class TestAca:
    def test_rank_one_exact(self, rng):
        x, y = rng.uniform(1, 2, 30), rng.uniform(1, 2, 40)
        a = np.outer(x, y)
        blk = aca_compress(source(a), 30, 40)
        assert blk.rank == 1
        assert np.abs(blk.to_dense() - a).max() <= 1e-15 * np.abs(a).max()

    def test_zero_block(self):
        blk = aca_compress(lambda i, j: np.zeros((len(i), len(j))), 20, 30)
        assert blk.rank == 0 and blk.shape == (20, 30) and not blk.truncated

    def test_separated_gaussian_clusters(self):
        a = gaussian_clusters()
        blk = aca_compress(source(a), 64, 64, eps=1e-12)
        r_star = eps_rank(np.linalg.svd(a, compute_uv=False), 1e-12)
        assert blk.rank <= 20
        assert blk.rank <= r_star + 5
        assert np.linalg.norm(a - blk.to_dense()) / np.linalg.norm(a) <= 1e-11

    def test_scalar_source_adapter(self):
        a = gaussian_clusters(12, 9)
        blk = aca_compress(entries_from_scalar(lambda i, j: a[i, j]), 12, 9, max_rank=9)
        assert not blk.truncated
        assert np.linalg.norm(a - blk.to_dense()) <= 1e-11 * np.linalg.norm(a)

    def test_identity_is_truncated(self):
        blk = aca_compress(source(np.eye(16)), 16, 16)
        assert blk.truncated and blk.rank == 8

    def test_full_rank_with_explicit_max_rank(self, rng):
        a = rng.normal(size=(10, 6))
        blk = aca_compress(source(a), 10, 6, max_rank=6)
        assert not blk.truncated and blk.rank == 6
        np.testing.assert_allclose(blk.to_dense(), a, atol=1e-12)

    def test_zero_leading_rows_are_skipped(self, rng):
        # first rows vanish: the degenerate-pivot retries must find the rest
        a = np.zeros((40, 30))
        a[25:] = np.outer(rng.uniform(1, 2, 15), rng.uniform(1, 2, 30))
        blk = aca_compress(source(a), 40, 30, seed=3)
        assert blk.rank == 1
        np.testing.assert_allclose(blk.to_dense(), a, atol=1e-14)

    def test_abs_tol_drops_tiny_block(self):
        a = 1e-20 * gaussian_clusters()
        assert aca_compress(source(a), 64, 64, abs_tol=1e-12).rank == 0

    def test_probes_catch_isolated_entry(self):
        # a smooth part plus one entry the random guard is unlikely to see
        a = np.full((200, 200), 1e-3)
        a[137, 59] = 1.0
        p = (np.array([137]), np.array([59]), np.array([1.0]))
        blk = aca_compress(source(a), 200, 200, probes=p, seed=1)
        assert np.abs(a - blk.to_dense()).max() <= 1e-12

    def test_deterministic(self):
        a = gaussian_clusters(50, 70)
        b1 = aca_compress(source(a), 50, 70, seed=9)
        b2 = aca_compress(source(a), 50, 70, seed=9)
        assert np.array_equal(b1.U, b2.U) and np.array_equal(b1.V, b2.V)

    @pytest.mark.parametrize("args", [(0, 5, 1e-6), (5, 5, 0.0), (5, 5, 1.0)])
    def test_rejects_bad_arguments(self, args):
        with pytest.raises(ValueError):
            aca_compress(lambda i, j: np.ones((len(i), len(j))), *args)

    def test_rejects_bad_max_rank(self):
        with pytest.raises(ValueError):
            aca_compress(lambda i, j: np.ones((len(i), len(j))), 4, 4, max_rank=0)


class TestSvd:
    def test_identity_full_rank(self):
        assert svd_truncate(np.eye(4), 1e-12).rank == 4

    def test_rank_two(self, rng):
        a = np.outer(rng.normal(size=8), rng.normal(size=5)) + np.outer(rng.normal(size=8), rng.normal(size=5))
        blk = svd_truncate(a, 1e-12)
        assert blk.rank == 2
        np.testing.assert_allclose(blk.to_dense(), a, atol=1e-13)

    def test_error_bound_is_minimal(self):
        a = gaussian_clusters()
        for eps in (1e-4, 1e-8, 1e-12):
            blk = svd_truncate(a, eps)
            assert np.linalg.norm(a - blk.to_dense()) <= eps * np.linalg.norm(a) * (1 + 1e-8)
            if blk.rank:
                shorter = svd_truncate(a, eps)
                u, s, vt = np.linalg.svd(a)
                r = blk.rank - 1
                assert np.linalg.norm(a - (u[:, :r] * s[:r]) @ vt[:r]) > eps * np.linalg.norm(a)
                assert shorter.rank == blk.rank

    def test_zero_and_nonfinite(self):
        assert svd_truncate(np.zeros((3, 4))).rank == 0
        with pytest.raises(ValueError):
            svd_truncate(np.array([[np.nan]]))


class TestBlock:
    def test_transpose_and_from_dense(self, rng):
        a = rng.normal(size=(3, 5))
        for b in (LowRankBlock.from_dense(a), LowRankBlock.from_dense(a.T)):
            assert b.rank == 3
        np.testing.assert_array_equal(LowRankBlock.from_dense(a).to_dense(), a)
        np.testing.assert_array_equal(LowRankBlock.from_dense(a).transpose().to_dense(), a.T)

    def test_incompatible_factors(self):
        with pytest.raises(ValueError):
            LowRankBlock(np.zeros((3, 2)), np.zeros((4, 1)))
