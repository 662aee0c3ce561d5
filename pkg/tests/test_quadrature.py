import numpy as np
import pytest

from divweb.quadrature import (QuadratureError, QuadratureSpec, integrate_1d,
                               integrate_box)


def test_polynomial_is_exact():
    value = integrate_1d(lambda t: 3 * t ** 2, 0.0, 2.0)
    assert value == pytest.approx(8.0, abs=1e-12)


def test_signed_direction():
    assert integrate_1d(lambda t: np.ones_like(t), 1.0, 0.0) == pytest.approx(-1.0)
    assert integrate_1d(lambda t: t, 0.0, 0.0) == 0.0


def test_smooth_integrand_to_tolerance():
    value = integrate_1d(lambda t: np.exp(t) * np.sin(3 * t), 0.0, 2.0)
    exact = (np.exp(2.0) * (np.sin(6.0) - 3 * np.cos(6.0)) + 3) / 10.0
    assert value == pytest.approx(exact, abs=1e-10)


def test_batched_integrand():
    scales = np.array([1.0, 2.0, 3.0])

    def f(t):
        return t[:, None] * scales[None, :]

    out = integrate_1d(f, 0.0, 1.0)
    np.testing.assert_allclose(out, 0.5 * scales, atol=1e-12)


def test_box_integral_and_batch():
    value = integrate_box(lambda x, y: 1 + x * y, [(0, 1), (0, 1)])
    assert value == pytest.approx(1.25, abs=1e-12)

    offsets = np.array([0.0, 1.0])
    out = integrate_box(lambda x, s: x + s, [(0, 1)], batch=[offsets])
    np.testing.assert_allclose(out, [0.5, 1.5], atol=1e-12)


def test_depth_exhaustion_reports_estimate():
    spec = QuadratureSpec(tol=1e-14, max_depth=3)
    with pytest.raises(QuadratureError) as err:
        integrate_1d(lambda t: 1.0 / np.sqrt(np.abs(t) + 1e-300), 0.0, 1.0, spec)
    assert err.value.error_estimate > 0


def test_spec_validation():
    with pytest.raises(ValueError):
        QuadratureSpec(tol=0.0)
    with pytest.raises(ValueError):
        QuadratureSpec(max_depth=0)
