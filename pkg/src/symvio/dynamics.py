"""System dynamics, IMU bias model, and the lift onto the symmetry group.

The dynamics follow the standard inertial model

    Pdot = P U(Omega, v),  vdot = -Omega x v + a - g R_P^T e3,  pdot_i = 0,

driven by body-frame angular rate Omega and specific force a.  Gravity acts
along +e3 in the inertial frame with configurable magnitude g.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .groups import Pose, Rot3, Se3Tangent, adjoint_inv_se3, skew
from .sphere import EPS_DEPTH, ExceptionSetError
from .states import AlgebraElement, TotalState

GRAVITY = 9.81

_E3 = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True, eq=False)
class ImuInput:
    """One IMU sample: body angular rate (rad/s) and specific force (m/s^2)."""

    omega: np.ndarray
    accel: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "omega", np.reshape(np.asarray(self.omega, float), 3))
        object.__setattr__(self, "accel", np.reshape(np.asarray(self.accel, float), 3))
        object.__setattr__(self, "t", float(self.t))


@dataclass(frozen=True, eq=False)
class BiasState:
    """Gyroscope and accelerometer biases."""

    b_omega: np.ndarray
    b_accel: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "b_omega", np.reshape(np.asarray(self.b_omega, float), 3))
        object.__setattr__(self, "b_accel", np.reshape(np.asarray(self.b_accel, float), 3))

    @staticmethod
    def zero() -> "BiasState":
        return BiasState(np.zeros(3), np.zeros(3))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.b_omega, self.b_accel])


@dataclass(frozen=True, eq=False)
class TotalTangent:
    """Tangent of the total state: body pose tangent, vdot, and pdot_i."""

    pose_tangent: Se3Tangent
    v_dot: np.ndarray
    p_dot: np.ndarray   # (n, 3)

    def __post_init__(self):
        object.__setattr__(self, "v_dot", np.reshape(np.asarray(self.v_dot, float), 3))
        object.__setattr__(self, "p_dot", np.asarray(self.p_dot, float).reshape(-1, 3))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.pose_tangent.as_vector(), self.v_dot,
                               self.p_dot.reshape(-1)])


def dynamics(xi: TotalState, u: ImuInput, gravity: float = GRAVITY) -> TotalTangent:
    """System function: landmark rates are exactly zero."""
    v_dot = -np.cross(u.omega, xi.vel) + u.accel - gravity * (xi.pose.rotation.matrix.T @ _E3)
    return TotalTangent(Se3Tangent(u.omega, xi.vel), v_dot,
                        np.zeros((xi.n_landmarks, 3)))


def apply_bias_correction(u: ImuInput, b_hat: BiasState) -> ImuInput:
    """Subtract the estimated biases from a measured IMU sample."""
    return ImuInput(u.omega - b_hat.b_omega, u.accel - b_hat.b_accel, u.t)


def lift(xi: TotalState, u: ImuInput, t_cam: Pose,
         gravity: float = GRAVITY, eps_depth: float = EPS_DEPTH) -> AlgebraElement:
    """Equivariant lift of the dynamics onto the symmetry-group algebra.

    The projected flow of the lifted element through the group action
    reproduces the system dynamics at xi.
    """
    w_dot = -u.accel + gravity * (xi.pose.rotation.matrix.T @ _E3)
    cam_twist = adjoint_inv_se3(t_cam, Se3Tangent(u.omega, xi.vel))
    omega_c, v_c = cam_twist.angular, cam_twist.linear
    q = xi.camera_points(t_cam)
    sq = np.einsum("ni,ni->n", q, q)
    bad = [lid for lid, s in zip(xi.ids, sq) if s <= eps_depth**2]
    if bad:
        raise ExceptionSetError(f"landmarks {bad} are inside the exception ball")
    omega = omega_c + np.cross(q, v_c[None, :]) / sq[:, None]
    alpha = (q @ v_c) / sq
    return AlgebraElement(Se3Tangent(u.omega, xi.vel), w_dot, xi.ids, omega, alpha)


def _flow_derivative(r: np.ndarray, v: np.ndarray, u: ImuInput, gravity: float):
    r_dot = r @ skew(u.omega)
    x_dot = r @ v
    v_dot = -np.cross(u.omega, v) + u.accel - gravity * (r.T @ _E3)
    return r_dot, x_dot, v_dot


def rk4_step(xi: TotalState, u_of_t, t: float, dt: float,
             gravity: float = GRAVITY) -> TotalState:
    """One classical RK4 step of the dynamics; u_of_t maps time to ImuInput."""
    r0 = xi.pose.rotation.matrix
    x0 = xi.pose.translation
    v0 = xi.vel

    k1 = _flow_derivative(r0, v0, u_of_t(t), gravity)
    k2 = _flow_derivative(r0 + 0.5 * dt * k1[0], v0 + 0.5 * dt * k1[2],
                          u_of_t(t + 0.5 * dt), gravity)
    k3 = _flow_derivative(r0 + 0.5 * dt * k2[0], v0 + 0.5 * dt * k2[2],
                          u_of_t(t + 0.5 * dt), gravity)
    k4 = _flow_derivative(r0 + dt * k3[0], v0 + dt * k3[2], u_of_t(t + dt), gravity)
    r = r0 + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    x = x0 + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    v = v0 + dt / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
    # Project back onto SO(3); RK4 keeps the defect at O(dt^5) per step.
    r = r @ np.linalg.inv(_sqrtm_spd(r.T @ r))
    return TotalState(Pose(Rot3(r), x), v, xi.ids, xi.points)


def _sqrtm_spd(m: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(m)
    return (vecs * np.sqrt(np.maximum(vals, 0.0))) @ vecs.T


def propagate_truth(xi: TotalState, u_of_t, t0: float, t1: float,
                    gravity: float = GRAVITY, rate_hz: float = 1000.0) -> TotalState:
    """Reference propagation by RK4 substeps at the given rate (default 1 kHz)."""
    total = t1 - t0
    n_steps = max(1, int(round(abs(total) * rate_hz)))
    dt = total / n_steps
    t = t0
    for _ in range(n_steps):
        xi = rk4_step(xi, u_of_t, t, dt, gravity)
        t += dt
    return xi
