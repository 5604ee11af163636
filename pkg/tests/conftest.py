import numpy as np
import pytest

from hodlr_gp.experiments import DEFAULT_NOISE
from hodlr_gp.kernels import Family, KernelSpec

# the five benchmark kernels with the diagonal noise used in their tables
BENCH_FAMILIES = [Family.GAUSSIAN, Family.EXPONENTIAL, Family.MULTIQUADRIC,
                  Family.INVERSE_MULTIQUADRIC, Family.BIHARMONIC]


def bench_spec(family: Family) -> KernelSpec:
    return KernelSpec(family, {}, DEFAULT_NOISE[family])


def rel(a, b) -> float:
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / np.linalg.norm(b))


def uniform(n, dim=1, seed=0, lo=-3.0, hi=3.0):
    return np.random.default_rng(seed).uniform(lo, hi, (n, dim))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
