import numpy as np
import pytest

from metrics.discrepancy import MetricConfig
from metrics.numerics import KernelSpec


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def cfg():
    return MetricConfig()


@pytest.fixture
def linear_cfg():
    return MetricConfig(x_kernel=KernelSpec('linear'), y_kernel=KernelSpec('gaussian', 0.5))


@pytest.fixture
def smooth_cfg():
    """Moderate regularization for tests that compare magnitudes."""
    return MetricConfig(epsilon=0.1, ridge_lambda=0.1)
