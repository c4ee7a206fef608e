import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from maglev_gp.kernels import INPUT_DIM, HyperParameters, KernelSpec

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

ALL_SPECS = list(KernelSpec)


def brute_kernel(spec, hp, a, b):
    """Scalar loop over the kernel definition, no vectorisation shared with the library."""
    rbf = sum((a[v] - b[v]) ** 2 / (2 * hp.lambda_rbf[v] ** 2) for v in range(INPUT_DIM))
    per = 0.0
    if spec is KernelSpec.FULL:
        per = sum(math.sin(math.pi * (a[v] - b[v]) / hp.p_sin) ** 2 for v in range(INPUT_DIM))
        per /= 2 * hp.lambda_sin**2
    val = hp.sigma1**2 * math.exp(-rbf - per)
    if spec is not KernelSpec.RBF:
        val += sum(hp.sigma2[v] ** 2 * (a[v] - hp.c_lin[v]) * (b[v] - hp.c_lin[v]) for v in range(2))
    return val


def brute_gram(spec, hp, A, B=None):
    B = A if B is None else B
    return np.array([[brute_kernel(spec, hp, a, b) for b in B] for a in A])


def random_hp(rng, sigma_e=(0.1, 0.3)):
    return HyperParameters(
        sigma1=rng.uniform(0.5, 2.0),
        lambda_rbf=rng.uniform(0.3, 2.0, INPUT_DIM),
        lambda_sin=rng.uniform(0.5, 2.0),
        p_sin=rng.uniform(0.8, 2.0),
        sigma2=rng.uniform(0.2, 1.0, 2),
        c_lin=rng.normal(0.0, 0.5, 2),
        sigma_e=rng.uniform(*sigma_e),
    )


def prior_sample(rng, spec, hp, n):
    """Inputs on a unit scale and targets drawn from the GP prior plus noise."""
    W = rng.uniform(-1.0, 1.0, (n, INPUT_DIM))
    K = brute_gram(spec, hp, W) + hp.sigma_e**2 * np.eye(n)
    y = np.linalg.cholesky(K + 1e-12 * np.eye(n)) @ rng.standard_normal(n)
    return W, y


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
