"""Unit-sphere utilities: projection and stereographic coordinate charts.

The chart centred at eta maps the punctured sphere S^2 \\ {-eta} to R^2 with
chart(eta, eta) = 0.  For eta != e1 the point is first reflected through the
Householder plane that swaps eta and e1, then projected with the e1 chart

    chart_e1(y) = (y2, y3) / (1 + y1),

which is the stereographic projection from the deleted point -e1.
"""

from __future__ import annotations

import numpy as np

# Default radius of the exception ball around the camera centre, metres.
EPS_DEPTH = 1e-3

# Chord distance below which a point counts as the deleted chart point.
CHART_GUARD = 1e-8

_E1 = np.array([1.0, 0.0, 0.0])


class ExceptionSetError(ValueError):
    """A landmark is inside the exception ball around the camera centre."""


class ChartDomainError(ValueError):
    """A point lies outside the domain of the requested coordinate chart."""


def sphere_project(q, eps_depth: float = EPS_DEPTH) -> np.ndarray:
    """Radial projection q / ||q||; rejects points inside the exception ball."""
    q = np.asarray(q, dtype=float).reshape(3)
    norm = float(np.linalg.norm(q))
    if norm <= eps_depth:
        raise ExceptionSetError(f"point with norm {norm:.3e} is inside the exception ball")
    return q / norm


def _householder(eta: np.ndarray) -> np.ndarray:
    """Reflection swapping eta and e1 (identity when eta == e1)."""
    d = _E1 - eta
    nd = np.linalg.norm(d)
    if nd < CHART_GUARD:
        return np.eye(3)
    zeta = d / nd
    return np.eye(3) - 2.0 * np.outer(zeta, zeta)


def _chart_e1(y: np.ndarray) -> np.ndarray:
    denom = 1.0 + y[0]
    if denom < CHART_GUARD**2 / 2.0 or np.linalg.norm(y + _E1) < CHART_GUARD:
        raise ChartDomainError("point is antipodal to the chart centre")
    return y[1:] / denom


def stereo_chart(eta, y) -> np.ndarray:
    """Chart coordinates of unit vector y in the chart centred at unit eta."""
    eta = np.asarray(eta, dtype=float).reshape(3)
    y = np.asarray(y, dtype=float).reshape(3)
    if np.linalg.norm(y + eta) < CHART_GUARD:
        raise ChartDomainError("point is antipodal to the chart centre")
    return _chart_e1(_householder(eta) @ y)


def stereo_chart_inv(eta, z) -> np.ndarray:
    """Inverse chart: R^2 -> S^2 with stereo_chart_inv(eta, 0) == eta."""
    eta = np.asarray(eta, dtype=float).reshape(3)
    z = np.asarray(z, dtype=float).reshape(2)
    s = float(z @ z)
    y = np.array([(1.0 - s), 2.0 * z[0], 2.0 * z[1]]) / (1.0 + s)
    return _householder(eta) @ y


def _chart_e1_jacobian(y: np.ndarray) -> np.ndarray:
    denom = 1.0 + y[0]
    jac = np.zeros((2, 3))
    jac[0, 0] = -y[1] / denom**2
    jac[1, 0] = -y[2] / denom**2
    jac[0, 1] = 1.0 / denom
    jac[1, 2] = 1.0 / denom
    return jac


def stereo_chart_jacobian(eta, y) -> np.ndarray:
    """Ambient 2x3 Jacobian of stereo_chart(eta, .) at unit vector y.

    Restricts to the correct differential on tangent vectors of the sphere.
    """
    eta = np.asarray(eta, dtype=float).reshape(3)
    y = np.asarray(y, dtype=float).reshape(3)
    h = _householder(eta)
    return _chart_e1_jacobian(h @ y) @ h


def stereo_chart_inv_jacobian(eta, z) -> np.ndarray:
    """3x2 Jacobian of stereo_chart_inv(eta, .) at chart coordinates z."""
    eta = np.asarray(eta, dtype=float).reshape(3)
    z = np.asarray(z, dtype=float).reshape(2)
    s = float(z @ z)
    denom = (1.0 + s) ** 2
    jac = np.empty((3, 2))
    jac[0] = -4.0 * z / denom
    jac[1, 0] = 2.0 * (1.0 + s) / denom - 4.0 * z[0] * z[0] / denom
    jac[1, 1] = -4.0 * z[0] * z[1] / denom
    jac[2, 0] = -4.0 * z[1] * z[0] / denom
    jac[2, 1] = 2.0 * (1.0 + s) / denom - 4.0 * z[1] * z[1] / denom
    return _householder(eta) @ jac


def tangent_basis(y) -> np.ndarray:
    """3x2 orthonormal basis of the tangent plane at unit vector y."""
    y = np.asarray(y, dtype=float).reshape(3)
    k = int(np.argmin(np.abs(y)))
    e = np.zeros(3)
    e[k] = 1.0
    t1 = np.cross(y, e)
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(y, t1)
    return np.stack([t1, t2], axis=1)
