import math

import numpy as np
import pytest

from hodlr_gp.dense_ref import (DenseFactorization, DenseSizeError, MAX_DENSE_N, dense_assemble,
                                dense_logdet, dense_matvec, dense_slogdet, dense_solve,
                                is_symmetric, naive_cholesky, naive_lu)
from hodlr_gp.kernels import KernelSpec, eval_entry


def spd(n, rng):
    a = rng.normal(size=(n, n))
    return a @ a.T + n * np.eye(n)


def test_two_point_gaussian():
    m = dense_assemble(KernelSpec("gaussian", {}, 1.0), np.array([[0.0], [1.0]])).array
    np.testing.assert_allclose(m, [[2, math.exp(-1)], [math.exp(-1), 2]], rtol=1e-15)


def test_zero_kernel_is_scaled_identity(rng):
    m = dense_assemble(KernelSpec("gaussian", {"amplitude": 0.0}, 3.0), rng.normal(size=(6, 2)))
    np.testing.assert_array_equal(m.array, 3 * np.eye(6))


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_matches_eval_entry_exactly(dim, rng):
    spec = KernelSpec("multiquadric", {}, 1.0)
    x = rng.uniform(-3, 3, (512, dim))
    m = dense_assemble(spec, x).array
    for i, j in rng.integers(0, 512, (300, 2)):
        assert m[i, j] == eval_entry(spec, x, int(i), int(j))
    assert is_symmetric(m)


def test_size_guard():
    with pytest.raises(DenseSizeError):
        dense_assemble(KernelSpec("gaussian"), np.zeros((MAX_DENSE_N + 1, 1)))


def test_streamed_matvec(rng):
    spec = KernelSpec("exponential", {}, 1.0)
    x, v = rng.normal(size=(300, 2)), rng.normal(size=300)
    np.testing.assert_allclose(dense_matvec(spec, x, v, chunk=64),
                               dense_assemble(spec, x).array @ v, rtol=1e-13)


@pytest.mark.parametrize("backend", ["naive", "lapack"])
class TestFactorization:
    def test_identity(self, backend, rng):
        b = rng.normal(size=7)
        np.testing.assert_array_equal(dense_solve(np.eye(7), b, backend=backend), b)
        assert dense_logdet(np.eye(7), backend=backend) == 0.0

    def test_two_identity(self, backend):
        assert dense_logdet(2 * np.eye(100), backend=backend) == pytest.approx(100 * math.log(2), rel=1e-14)

    def test_lu_matches_cholesky_logdet(self, backend, rng):
        a = spd(50, rng)
        assert dense_logdet(a, "lu", backend) == pytest.approx(dense_logdet(a, "cholesky", backend), rel=1e-12)
        assert dense_logdet(a, "lu", backend) == pytest.approx(np.linalg.slogdet(a)[1], rel=1e-12)

    def test_nonsymmetric_sign(self, backend, rng):
        for _ in range(5):
            a = rng.normal(size=(9, 9))
            s, v = dense_slogdet(a, backend=backend)
            s0, v0 = np.linalg.slogdet(a)
            assert s == s0 and v == pytest.approx(v0, rel=1e-12)

    def test_solve_residual(self, backend, rng):
        spec = KernelSpec("gaussian", {}, 1.0)
        m = dense_assemble(spec, rng.uniform(-3, 3, (200, 1))).array
        b = rng.normal(size=(200, 3))
        for method in ("auto", "lu"):
            x = dense_solve(m, b, method, backend)
            assert np.linalg.norm(m @ x - b) <= 1e-12 * np.linalg.cond(m) * np.linalg.norm(b)

    def test_singular(self, backend):
        a = np.array([[1.0, 2.0], [2.0, 4.0]])
        assert dense_slogdet(a, backend=backend) == (0.0, -math.inf)
        with pytest.raises(np.linalg.LinAlgError):
            DenseFactorization(a, "lu", backend)

    def test_indefinite_falls_back_to_lu(self, backend):
        a = np.array([[1.0, 2.0], [2.0, 1.0]])
        f = DenseFactorization(a, backend=backend)
        assert f.method == "lu" and f.slogdet()[0] == -1.0
        with pytest.raises(np.linalg.LinAlgError):
            DenseFactorization(a, "cholesky", backend)


def test_naive_factors_reconstruct(rng):
    a = rng.normal(size=(12, 12))
    fac, perm = naive_lu(a)
    lower = np.tril(fac, -1) + np.eye(12)
    np.testing.assert_allclose(lower @ np.triu(fac), a[perm], atol=1e-12)
    s = spd(12, rng)
    c = naive_cholesky(s)
    np.testing.assert_allclose(c @ c.T, s, rtol=1e-13)


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        DenseFactorization(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        DenseFactorization(np.eye(2), backend="magma")
    with pytest.raises(ValueError):
        DenseFactorization(np.eye(2), method="qr")
