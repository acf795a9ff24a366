import numpy as np
import pytest

from scorelab.mixtures import IsotropicGaussianMixture


@pytest.fixture
def two_spike():
    """Even mixture of two narrow Gaussians at +-0.5."""
    return IsotropicGaussianMixture.from_weights([0.5, 0.5], [[-0.5], [0.5]], [1e-4, 1e-4])


@pytest.fixture
def std_normal():
    return IsotropicGaussianMixture.from_weights([1.0], [[0.0]], [1.0])


def random_mixture(rng: np.random.Generator, max_dim: int = 3, max_components: int = 3):
    """A small random mixture for probe-based checks."""
    d = int(rng.integers(1, max_dim + 1))
    k = int(rng.integers(1, max_components + 1))
    weights = rng.dirichlet(np.ones(k) * 2.0)
    means = rng.normal(scale=1.5, size=(k, d))
    variances = np.exp(rng.uniform(np.log(1e-2), 0.0, size=k))
    return IsotropicGaussianMixture.from_weights(weights, means, variances)
