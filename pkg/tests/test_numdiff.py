"""Finite-difference oracle sanity checks."""

import numpy as np

from symvio.numdiff import mixed_partial, numeric_differential
from symvio.sphere import stereo_chart, stereo_chart_inv


def test_identity_map():
    jac = numeric_differential(lambda x: x, np.zeros(5), 1e-6)
    np.testing.assert_allclose(jac, np.eye(5), atol=1e-12)


def test_quadratic_form():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((4, 4))
    a = 0.5 * (a + a.T)
    x0 = rng.standard_normal(4)
    jac = numeric_differential(lambda x: np.array([x @ a @ x]), x0, 1e-6)
    np.testing.assert_allclose(jac[0], 2.0 * a @ x0, atol=1e-8)


def test_chart_round_trip_composition():
    eta = np.array([0.0, 0.6, 0.8])
    jac = numeric_differential(
        lambda z: stereo_chart(eta, stereo_chart_inv(eta, z)),
        np.array([0.3, -0.2]), 1e-6)
    np.testing.assert_allclose(jac, np.eye(2), atol=1e-8)


def test_richardson_extrapolation_improves():
    f = lambda x: np.array([np.exp(2.0 * x[0])])
    coarse = numeric_differential(f, np.array([0.3]), 1e-3)
    fine = numeric_differential(f, np.array([0.3]), 1e-3, richardson=True)
    truth = 2.0 * np.exp(0.6)
    assert abs(fine[0, 0] - truth) < abs(coarse[0, 0] - truth)


def test_mixed_partial_bilinear():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((3, 4))

    def f(t, x):
        return t * (a @ x) + np.sin(x[:3]) + t**2

    jac = mixed_partial(f, 1e-5, rng.standard_normal(4), 1e-5)
    np.testing.assert_allclose(jac, a, atol=1e-6)
