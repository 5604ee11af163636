"""Randomised invariants (hypothesis)."""

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from hodlr_gp.dense_ref import dense_assemble
from hodlr_gp.geometry import kd_sort
from hodlr_gp.gp import fit
from hodlr_gp.hodlr import assemble, factorize
from hodlr_gp.kernels import Family, KernelSpec
from hodlr_gp.lowrank import aca_compress, eps_rank

SMOOTH = [Family.GAUSSIAN, Family.MULTIQUADRIC, Family.EXPONENTIAL]
PROFILE = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])

seeds = st.integers(0, 2**32 - 1)


def cluster_block(family, m, n, dim, gap, seed):
    """Kernel block between two boxes of side 1.5 separated by ``gap`` along x."""
    rng = np.random.default_rng(seed)
    xa = rng.uniform(0, 1.5, (m, dim))
    xb = rng.uniform(0, 1.5, (n, dim))
    xb[:, 0] += 1.5 + gap
    return KernelSpec(family).block(xa, xb)


blocks = st.builds(
    cluster_block,
    family=st.sampled_from(SMOOTH),
    m=st.integers(8, 120),
    n=st.integers(8, 120),
    dim=st.sampled_from([1, 2]),
    gap=st.floats(0.0, 3.0),
    seed=seeds,
)


@PROFILE
@given(a=blocks, eps=st.sampled_from([1e-6, 1e-9, 1e-12]), seed=seeds)
def test_aca_sampled_reconstruction(a, eps, seed):
    m, n = a.shape
    blk = aca_compress(lambda i, j: a[np.ix_(i, j)], m, n, eps, max_rank=min(m, n))
    rng = np.random.default_rng(seed)
    i, j = rng.integers(0, m, 200), rng.integers(0, n, 200)
    approx = np.einsum("kr,kr->k", blk.U[i], blk.V[j])
    fro = np.sqrt(m * n * np.mean(a[i, j] ** 2))
    assert np.max(np.abs(a[i, j] - approx)) <= 10 * eps * fro


@PROFILE
@given(a=blocks, eps=st.sampled_from([1e-6, 1e-9, 1e-12]))
def test_aca_rank_close_to_svd(a, eps):
    m, n = a.shape
    blk = aca_compress(lambda i, j: a[np.ix_(i, j)], m, n, eps, max_rank=min(m, n))
    assert blk.rank <= eps_rank(np.linalg.svd(a, compute_uv=False), eps) + 5


@PROFILE
@given(a=blocks, seed=seeds)
def test_aca_deterministic(a, seed):
    m, n = a.shape
    f = lambda i, j: a[np.ix_(i, j)]  # noqa: E731
    b1, b2 = aca_compress(f, m, n, seed=seed), aca_compress(f, m, n, seed=seed)
    assert np.array_equal(b1.U, b2.U) and np.array_equal(b1.V, b2.V)


@settings(max_examples=100, deadline=None)
@given(n=st.integers(1, 400), dim=st.integers(1, 5), leaf=st.integers(1, 40), seed=seeds,
       ties=st.booleans())
def test_kd_sort_is_valid_permutation(n, dim, leaf, seed, ties):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 4, (n, dim)).astype(float) if ties else rng.normal(size=(n, dim))
    ps = kd_sort(x, leaf)
    assert np.array_equal(np.bincount(ps.perm, minlength=n), np.ones(n, dtype=int))
    if dim == 1:
        assert np.array_equal(ps.perm, np.argsort(x[:, 0], kind="stable"))


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 300), p_max=st.integers(1, 30))
def test_tree_balance(n, p_max):
    tree = assemble(KernelSpec("gaussian", {"amplitude": 0.0}, 1.0), np.arange(n, dtype=float), p_max=p_max)
    for lvl in tree.levels[:-1]:
        for nd in lvl:
            assert abs(nd.left.size - nd.right.size) <= 1 and nd.left.size >= nd.right.size


instances = st.builds(
    lambda family, n, dim, noise, seed: (KernelSpec(family, {}, noise),
                                         np.random.default_rng(seed).uniform(-3, 3, (n, dim))),
    family=st.sampled_from([Family.GAUSSIAN, Family.EXPONENTIAL, Family.MULTIQUADRIC,
                            Family.INVERSE_MULTIQUADRIC, Family.MATERN]),
    n=st.integers(1, 1024),
    dim=st.sampled_from([1, 2, 3]),
    noise=st.floats(1.0, 3.0),
    seed=seeds,
)


@settings(max_examples=25, deadline=None)
@given(inst=instances, seed=seeds)
def test_solve_apply_round_trip(inst, seed):
    spec, x = inst
    n = x.shape[0]
    tree = assemble(spec, x)
    fact = factorize(tree)
    b = np.random.default_rng(seed).normal(size=n)
    # multiquadric matrices in several dimensions are ill-conditioned
    tol = max(1e-10, 1e-13 * np.linalg.cond(tree.to_dense(sorted_order=True)))
    assert np.linalg.norm(tree.matvec(fact.solve(b)) - b) <= tol * np.linalg.norm(b)
    assert np.linalg.norm(fact.solve(tree.matvec(b)) - b) <= tol * np.linalg.norm(b)


@settings(max_examples=15, deadline=None)
@given(inst=instances)
def test_factor_product_identity(inst):
    spec, x = inst
    eps = 1e-12
    tree = assemble(spec, x, eps)
    mats = factorize(tree).factor_matrices()
    prod = mats[0]
    for m in mats[1:]:
        prod = prod @ m
    c = tree.to_dense(sorted_order=True)
    assert np.linalg.norm(prod - c) <= 10 * eps * np.linalg.norm(c)


@settings(max_examples=15, deadline=None)
@given(inst=instances)
def test_assembly_deterministic(inst):
    spec, x = inst
    np.testing.assert_array_equal(assemble(spec, x).to_dense(), assemble(spec, x).to_dense())


@settings(max_examples=50, deadline=None)
@given(family=st.sampled_from(list(Family)), seed=seeds, dim=st.integers(1, 4))
def test_kernel_matrix_exactly_symmetric(family, seed, dim):
    x = np.random.default_rng(seed).normal(size=(30, dim))
    m = dense_assemble(KernelSpec(family, {}, 0.3), x).array
    assert np.array_equal(m, m.T)


@settings(max_examples=20, deadline=None)
@given(n=st.integers(5, 300), ell=st.floats(0.2, 3.0), noise=st.floats(1e-4, 2.0), seed=seeds)
def test_predictive_variance_nonnegative(n, ell, noise, seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-3, 3, (n, 1))
    model = fit(KernelSpec("gaussian", {"length_scale": ell}, noise), x, rng.normal(size=n))
    _, var = model.predict(rng.uniform(-4, 4, (40, 1)))
    assert np.all(var >= 0)
