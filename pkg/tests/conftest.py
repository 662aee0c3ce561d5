import numpy as np
import pytest

from divweb.quadrature import QuadratureSpec
from divweb.web import WebChart


@pytest.fixture(scope="session")
def quad():
    return QuadratureSpec()


@pytest.fixture(scope="session")
def web_1pxy():
    """Nontrivial planar web with known closed-form reflections."""
    return WebChart.from_text("1 + x*y", ("x", "y"), ((1,), (2,)),
                              (-0.9, -0.9), (0.9, 0.9))


@pytest.fixture(scope="session")
def web_separable():
    return WebChart.from_text("(1+x)*(1+y)", ("x", "y"), ((1,), (2,)),
                              (-0.9, -0.9), (0.9, 0.9))


@pytest.fixture(scope="session")
def web_exp_quartic():
    return WebChart.from_text("exp(x^2*y^2/4)", ("x", "y"), ((1,), (2,)),
                              (-0.9, -0.9), (0.9, 0.9))


@pytest.fixture(scope="session")
def web_polar():
    """Radial-lines / circles web in its adapted chart; density r."""
    return WebChart.from_text("r", ("r", "phi"), ((1,), (2,)),
                              (0.25, -1.5), (2.5, 1.5))


def sample_points(bounds, count, seed):
    rng = np.random.default_rng(seed)
    lows = np.array([lo for lo, _ in bounds])
    highs = np.array([hi for _, hi in bounds])
    return lows + (highs - lows) * rng.random((count, len(bounds)))
