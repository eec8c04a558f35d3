"""System dynamics, bias model, and the lift."""

import numpy as np
import pytest

from symvio.dynamics import (
    BiasState,
    GRAVITY,
    ImuInput,
    apply_bias_correction,
    dynamics,
    lift,
    propagate_truth,
)
from symvio.groups import GaugeElement, Pose
from symvio.numdiff import numeric_differential
from symvio.sphere import ExceptionSetError
from symvio.states import TotalState, chart_epsilon, exp_sym, gauge_act, sym_act_total

E3 = np.array([0.0, 0.0, 1.0])


def hover_input(xi, gravity=GRAVITY):
    return ImuInput(np.zeros(3), gravity * (xi.pose.rotation.matrix.T @ E3))


def test_dynamics_hover_equilibrium(rng, t_cam):
    xi = TotalState.random(rng, 3, t_cam)
    xi = TotalState(xi.pose, np.zeros(3), xi.ids, xi.points)
    f = dynamics(xi, hover_input(xi))
    np.testing.assert_allclose(f.v_dot, 0.0, atol=1e-12)
    np.testing.assert_allclose(f.pose_tangent.angular, 0.0, atol=0.0)
    np.testing.assert_allclose(f.pose_tangent.linear, 0.0, atol=0.0)
    np.testing.assert_array_equal(f.p_dot, np.zeros((3, 3)))


def test_dynamics_substitution():
    xi = TotalState(Pose.identity(), np.array([1.0, 0.0, 0.0]), (), np.zeros((0, 3)))
    u = ImuInput([0.0, 0.0, 1.0], GRAVITY * E3)
    f = dynamics(xi, u)
    np.testing.assert_allclose(f.v_dot, [0.0, -1.0, 0.0], atol=1e-15)
    # Translation rate of the pose is the state velocity, not an input.
    np.testing.assert_array_equal(f.pose_tangent.linear, xi.vel)


def test_dynamics_gauge_invariance(rng, t_cam):
    # Pushforward under a gauge change: body-frame pose tangent and vdot are
    # unchanged, landmark rates stay zero.
    for _ in range(100):
        xi = TotalState.random(rng, 3, t_cam)
        u = ImuInput(rng.standard_normal(3), rng.standard_normal(3))
        s = GaugeElement.random(rng)
        f0 = dynamics(xi, u)
        f1 = dynamics(gauge_act(s, xi), u)
        np.testing.assert_allclose(f1.pose_tangent.as_vector(),
                                   f0.pose_tangent.as_vector(), atol=1e-10)
        np.testing.assert_allclose(f1.v_dot, f0.v_dot, atol=1e-10)
        np.testing.assert_array_equal(f1.p_dot, f0.p_dot)


def test_bias_correction():
    u = ImuInput([1.0, 1.0, 1.0], [0.5, 0.5, 0.5], t=2.0)
    zero = apply_bias_correction(u, BiasState.zero())
    np.testing.assert_array_equal(zero.omega, u.omega)
    np.testing.assert_array_equal(zero.accel, u.accel)
    b = BiasState([1.0, 0.0, 0.0], [0.0, 0.2, 0.0])
    corrected = apply_bias_correction(u, b)
    np.testing.assert_array_equal(corrected.omega, [0.0, 1.0, 1.0])
    restored = ImuInput(corrected.omega + b.b_omega, corrected.accel + b.b_accel, u.t)
    np.testing.assert_array_equal(restored.omega, u.omega)
    np.testing.assert_array_equal(restored.accel, u.accel)


def test_lift_hover_is_zero(rng):
    pose = Pose.identity()
    xi = TotalState(pose, np.zeros(3), (0,), np.array([[0.0, 0.0, 3.0]]))
    lam = lift(xi, hover_input(xi), Pose.identity())
    assert np.abs(lam.as_vector()).max() == 0.0


def test_lift_axial_landmark_pure_scale_rate():
    d = 2.5
    xi = TotalState(Pose.identity(), E3.copy(), (0,), np.array([[0.0, 0.0, d]]))
    u = ImuInput(np.zeros(3), GRAVITY * E3)
    lam = lift(xi, u, Pose.identity())
    np.testing.assert_allclose(lam.omega[0], 0.0, atol=1e-15)
    assert lam.alpha[0] == pytest.approx(1.0 / d, abs=1e-12)


def test_lift_names_offending_landmark():
    xi = TotalState(Pose.identity(), np.zeros(3), (3, 8),
                    np.array([[0.0, 0.0, 2.0], [0.0, 0.0, 1e-9]]))
    with pytest.raises(ExceptionSetError, match="8"):
        lift(xi, ImuInput(np.zeros(3), np.zeros(3)), Pose.identity())


def test_lift_property_finite_difference(rng, t_cam):
    # d(Phi_xi)(Lambda) = f by central differences on the group.
    step = 1e-5
    worst = 0.0
    for k in range(60):
        n = (1, 5, 20)[k % 3]
        xi = TotalState.random(rng, n, t_cam)
        u = ImuInput(rng.standard_normal(3), rng.standard_normal(3))
        lam = lift(xi, u, t_cam)
        plus = sym_act_total(exp_sym(lam.scaled(step)), xi, t_cam)
        minus = sym_act_total(exp_sym(lam.scaled(-step)), xi, t_cam)
        f = dynamics(xi, u)
        pose_rate = xi.pose.matrix() @ f.pose_tangent.hat()
        worst = max(worst, np.abs(
            (plus.pose.matrix() - minus.pose.matrix()) / (2 * step) - pose_rate).max())
        worst = max(worst, np.abs((plus.vel - minus.vel) / (2 * step) - f.v_dot).max())
        worst = max(worst, np.abs((plus.points - minus.points) / (2 * step)).max())
    assert worst < 1e-6


def test_dynamics_input_jacobians(rng, t_cam):
    # Linear in the accelerometer channel, affine in the gyroscope channel.
    xi = TotalState.random(rng, 2, t_cam)

    def vdot_of_accel(a):
        return dynamics(xi, ImuInput(np.array([0.1, -0.2, 0.3]), a)).v_dot

    jac_a = numeric_differential(vdot_of_accel, np.zeros(3), 1e-6)
    np.testing.assert_allclose(jac_a, np.eye(3), atol=1e-10)

    def vdot_of_omega(w):
        return dynamics(xi, ImuInput(w, np.zeros(3))).v_dot

    jac_w = numeric_differential(vdot_of_omega, np.zeros(3), 1e-6)
    # d(-w x v)/dw = skew(v)
    expected = np.array([[0, -xi.vel[2], xi.vel[1]],
                         [xi.vel[2], 0, -xi.vel[0]],
                         [-xi.vel[1], xi.vel[0], 0]]).T
    np.testing.assert_allclose(jac_w, expected.T, atol=1e-10)


def test_quotient_propagation_gauge_invariant(rng, t_cam):
    # Gauge-related initial conditions stay gauge-related under the flow:
    # their chart coordinates coincide along the trajectory.
    origin = TotalState.random(rng, 3, t_cam)
    xi = TotalState.random(rng, 3, t_cam)
    s = GaugeElement.random(rng)
    u = ImuInput(np.array([0.2, -0.1, 0.3]), np.array([0.5, 0.2, 9.5]))
    u_of_t = lambda t: u
    end_a = propagate_truth(xi, u_of_t, 0.0, 0.1)
    end_b = propagate_truth(gauge_act(s, xi), u_of_t, 0.0, 0.1)
    coords_a = chart_epsilon(end_a, origin, t_cam)
    coords_b = chart_epsilon(end_b, origin, t_cam)
    np.testing.assert_allclose(coords_a, coords_b, atol=1e-8)


def test_rk4_reference_accuracy():
    # Constant-rate rotation about e3 with zero velocity has a closed form.
    from symvio.groups import yaw_rotation
    xi = TotalState(Pose.identity(), np.zeros(3), (), np.zeros((0, 3)))
    omega_z = 0.7
    u_of_t = lambda t: ImuInput([0.0, 0.0, omega_z], GRAVITY * E3)
    end = propagate_truth(xi, u_of_t, 0.0, 1.0)
    np.testing.assert_allclose(end.pose.rotation.matrix,
                               yaw_rotation(omega_z).matrix, atol=1e-9)
    np.testing.assert_allclose(end.vel, 0.0, atol=1e-9)
