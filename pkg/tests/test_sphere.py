"""Sphere projection and stereographic charts."""

import numpy as np
import pytest

from symvio.numdiff import numeric_differential
from symvio.sphere import (
    ChartDomainError,
    ExceptionSetError,
    sphere_project,
    stereo_chart,
    stereo_chart_inv,
    stereo_chart_inv_jacobian,
    stereo_chart_jacobian,
    tangent_basis,
)


def random_unit(rng):
    v = rng.standard_normal(3)
    return v / np.linalg.norm(v)


def test_sphere_project_closed_forms():
    np.testing.assert_array_equal(sphere_project([0, 0, 2]), [0, 0, 1])
    np.testing.assert_allclose(sphere_project([3, 4, 0]), [0.6, 0.8, 0.0], atol=0.0)


def test_sphere_project_idempotent_on_unit(rng):
    for _ in range(50):
        y = random_unit(rng)
        np.testing.assert_allclose(sphere_project(y), y, atol=1e-15)


def test_sphere_project_rejects_exception_ball():
    with pytest.raises(ExceptionSetError):
        sphere_project([1e-5, 0, 0])
    with pytest.raises(ExceptionSetError):
        sphere_project([0.5e-3, 0, 0], eps_depth=1e-3)


def test_chart_centre_maps_to_zero(rng):
    # The chart is centred: chart(eta, eta) = 0.
    for _ in range(100):
        eta = random_unit(rng)
        assert np.abs(stereo_chart(eta, eta)).max() < 1e-14
        np.testing.assert_allclose(stereo_chart_inv(eta, [0.0, 0.0]), eta, atol=1e-15)
    e1 = np.array([1.0, 0.0, 0.0])
    np.testing.assert_array_equal(stereo_chart(e1, e1), [0.0, 0.0])


def test_chart_round_trip(rng):
    for _ in range(300):
        eta = random_unit(rng)
        y = stereo_chart_inv(eta, 1.5 * rng.standard_normal(2))
        z = stereo_chart(eta, y)
        np.testing.assert_allclose(stereo_chart_inv(eta, z), y, atol=1e-10)


def test_chart_domain_error_at_antipode(rng):
    eta = random_unit(rng)
    with pytest.raises(ChartDomainError):
        stereo_chart(eta, -eta)
    # Slightly away from the antipode is fine.
    ok = stereo_chart(eta, stereo_chart_inv(eta, [500.0, 0.0]))
    assert np.all(np.isfinite(ok))


def test_chart_jacobians_match_numeric(rng):
    worst = 0.0
    for _ in range(30):
        eta = random_unit(rng)
        z0 = 0.5 * rng.standard_normal(2)
        y0 = stereo_chart_inv(eta, z0)
        num = numeric_differential(lambda z: stereo_chart_inv(eta, z), z0, 1e-6)
        worst = max(worst, np.abs(stereo_chart_inv_jacobian(eta, z0) - num).max())
        basis = tangent_basis(y0)

        def on_sphere(s):
            y = y0 + basis @ s
            return stereo_chart(eta, y / np.linalg.norm(y))

        num_fwd = numeric_differential(on_sphere, np.zeros(2), 1e-6)
        worst = max(worst, np.abs(stereo_chart_jacobian(eta, y0) @ basis - num_fwd).max())
    assert worst < 1e-8


def test_chart_jacobians_mutually_inverse_at_centre(rng):
    for _ in range(30):
        eta = random_unit(rng)
        fwd = stereo_chart_jacobian(eta, eta)
        inv = stereo_chart_inv_jacobian(eta, np.zeros(2))
        np.testing.assert_allclose(fwd @ inv, np.eye(2), atol=1e-12)


def test_tangent_basis_orthonormal(rng):
    for _ in range(50):
        y = random_unit(rng)
        basis = tangent_basis(y)
        np.testing.assert_allclose(basis.T @ basis, np.eye(2), atol=1e-12)
        np.testing.assert_allclose(basis.T @ y, 0.0, atol=1e-12)
