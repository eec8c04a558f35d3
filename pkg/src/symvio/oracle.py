"""Finite-difference verification suite for the geometric constructions.

Every analytic object with an independent numerical oracle is checked here:
group axioms by random sampling, the action and invariance identities, the
lift property, the filter linearisation matrices against finite differences
of the composed error-coordinate flows, and the bundle-lift optimality.

The suite backs both the `oracle` CLI subcommand and the acceptance tests.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import filter as eqf
from .dynamics import ImuInput, dynamics, lift, propagate_truth
from .groups import (
    ExtPose,
    GaugeElement,
    Pose,
    Rot3,
    ScaledRot,
)
from .numdiff import mixed_partial, numeric_differential
from .simulate import rmse_positions
from .states import (
    SymElement,
    TotalState,
    chart_delta,
    chart_epsilon,
    chart_epsilon_inv,
    gauge_act,
    gauge_orbit_basis,
    measure,
    output_act,
    sym_act_total,
)

FD_STEP = 1e-5


@dataclass(frozen=True)
class OracleResult:
    name: str
    passed: bool
    max_error: float
    tolerance: float
    runtime_s: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        msg = (f"{status} {self.name}: max error {self.max_error:.3e} "
               f"(tol {self.tolerance:.1e}, {self.runtime_s:.2f} s)")
        if self.detail:
            msg += f" [{self.detail}]"
        return msg


def _pose_err(a: Pose, b: Pose) -> float:
    return max(np.abs(a.rotation.matrix - b.rotation.matrix).max(),
               np.abs(a.translation - b.translation).max())


def _state_err(a: TotalState, b: TotalState) -> float:
    return max(_pose_err(a.pose, b.pose),
               np.abs(a.vel - b.vel).max(),
               float(np.abs(a.points - b.points).max()) if a.n_landmarks else 0.0)


def _sym_err(a: SymElement, b: SymElement) -> float:
    return max(_pose_err(a.ext.pose, b.ext.pose),
               np.abs(a.ext.aux - b.ext.aux).max(),
               float(np.abs(a.rot - b.rot).max()) if len(a.ids) else 0.0,
               float(np.abs(a.scale - b.scale).max()) if len(a.ids) else 0.0)


# ---------------------------------------------------------------------------
# Criterion 1: group axioms
# ---------------------------------------------------------------------------

_GROUPS = {
    "SO(3)": dict(
        sample=lambda rng: Rot3.random(rng),
        identity=Rot3.identity,
        err=lambda a, b: float(np.abs(a.matrix - b.matrix).max()),
    ),
    "SE(3)": dict(
        sample=lambda rng: Pose.random(rng),
        identity=Pose.identity,
        err=_pose_err,
    ),
    "SE2(3)": dict(
        sample=lambda rng: ExtPose.random(rng),
        identity=ExtPose.identity,
        err=lambda a, b: max(_pose_err(a.pose, b.pose),
                             float(np.abs(a.aux - b.aux).max())),
    ),
    "SOT(3)": dict(
        sample=lambda rng: ScaledRot.random(rng),
        identity=ScaledRot.identity,
        err=lambda a, b: max(float(np.abs(a.rotation.matrix - b.rotation.matrix).max()),
                             abs(a.scale - b.scale)),
    ),
    "MR(1)": dict(
        sample=lambda rng: ScaledRot(Rot3.identity(), math.exp(rng.standard_normal())),
        identity=ScaledRot.identity,
        err=lambda a, b: abs(a.scale - b.scale),
    ),
    "SE_e3(3)": dict(
        sample=lambda rng: GaugeElement.random(rng),
        identity=GaugeElement.identity,
        err=lambda a, b: _pose_err(a.embed(), b.embed()),
    ),
}


def check_group_axioms(samples: int = 1000, seed: int = 1,
                       tol: float = 1e-10) -> OracleResult:
    """Associativity, identity and inverse for all six groups."""
    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    worst = 0.0
    for spec in _GROUPS.values():
        sample, identity, err = spec["sample"], spec["identity"], spec["err"]
        for _ in range(samples):
            a, b, c = sample(rng), sample(rng), sample(rng)
            worst = max(worst, err((a @ b) @ c, a @ (b @ c)))
            worst = max(worst, err(identity() @ a, a))
            worst = max(worst, err(a @ identity(), a))
            worst = max(worst, err(a @ a.inverse(), identity()))
            worst = max(worst, err(a.inverse().inverse(), a))
    elapsed = time.perf_counter() - start
    return OracleResult("group axioms (6 groups)", worst < tol, worst, tol, elapsed)


# ---------------------------------------------------------------------------
# Criterion 2: actions, invariance, equivariance
# ---------------------------------------------------------------------------

def check_actions(cases: int = 1000, seed: int = 2) -> OracleResult:
    """Action axioms, gauge invariance of h and f, output equivariance."""
    rng = np.random.default_rng(seed)
    t_cam = Pose.random(rng, radius=0.3)
    start = time.perf_counter()
    worst_action = worst_inv = worst_equiv = 0.0
    sizes = (1, 5, 20)
    for k in range(cases):
        n = sizes[k % len(sizes)]
        xi = TotalState.random(rng, n, t_cam)
        ids = xi.ids
        x, y = SymElement.random(rng, ids, 0.6), SymElement.random(rng, ids, 0.6)
        # Lemma-style action axioms for the symmetry group.
        lhs = sym_act_total(x @ y, xi, t_cam)
        rhs = sym_act_total(y, sym_act_total(x, xi, t_cam), t_cam)
        worst_action = max(worst_action, _state_err(lhs, rhs))
        worst_action = max(worst_action,
                           _state_err(sym_act_total(SymElement.identity(ids), xi, t_cam), xi))
        # Gauge invariance of the measurements and of the dynamics.
        s = GaugeElement.random(rng)
        moved = gauge_act(s, xi)
        h0, h1 = measure(xi, t_cam), measure(moved, t_cam)
        worst_inv = max(worst_inv, float(np.abs(h0.units - h1.units).max()))
        u = ImuInput(rng.standard_normal(3), rng.standard_normal(3))
        f0, f1 = dynamics(xi, u), dynamics(moved, u)
        worst_inv = max(worst_inv, float(np.abs(
            f0.pose_tangent.as_vector() - f1.pose_tangent.as_vector()).max()))
        worst_inv = max(worst_inv, float(np.abs(f0.v_dot - f1.v_dot).max()))
        worst_inv = max(worst_inv, float(np.abs(f1.p_dot).max()))
        # Output equivariance: h(Phi(X, xi)) = rho(X, h(xi)).
        lhs_y = measure(sym_act_total(x, xi, t_cam), t_cam)
        rhs_y = output_act(x, measure(xi, t_cam))
        worst_equiv = max(worst_equiv, float(np.abs(
            lhs_y.units - rhs_y.reindexed(lhs_y.ids).units).max()))
    elapsed = time.perf_counter() - start
    passed = worst_action < 1e-9 and worst_inv < 1e-10 and worst_equiv < 1e-10
    worst = max(worst_action, worst_inv, worst_equiv)
    return OracleResult("action/invariance/equivariance", passed, worst, 1e-9, elapsed,
                        detail=f"action {worst_action:.1e}, invariance {worst_inv:.1e}, "
                               f"equivariance {worst_equiv:.1e}")


# ---------------------------------------------------------------------------
# Criterion 3: lift property
# ---------------------------------------------------------------------------

def check_lift(cases: int = 500, seed: int = 3, tol: float = 1e-6,
               step: float = FD_STEP) -> OracleResult:
    """d(Phi_xi)(Lambda) equals the system function, by central differences."""
    rng = np.random.default_rng(seed)
    t_cam = Pose.random(rng, radius=0.3)
    start = time.perf_counter()
    worst = 0.0
    sizes = (1, 5, 20)
    from .states import exp_sym
    for k in range(cases):
        n = sizes[k % len(sizes)]
        xi = TotalState.random(rng, n, t_cam)
        u = ImuInput(rng.standard_normal(3), rng.standard_normal(3))
        lam = lift(xi, u, t_cam)
        plus = sym_act_total(exp_sym(lam.scaled(step)), xi, t_cam)
        minus = sym_act_total(exp_sym(lam.scaled(-step)), xi, t_cam)
        f = dynamics(xi, u)
        pose_rate_fd = (plus.pose.matrix() - minus.pose.matrix()) / (2 * step)
        pose_rate = xi.pose.matrix() @ f.pose_tangent.hat()
        worst = max(worst, float(np.abs(pose_rate_fd - pose_rate).max()))
        vel_fd = (plus.vel - minus.vel) / (2 * step)
        worst = max(worst, float(np.abs(vel_fd - f.v_dot).max()))
        pts_fd = (plus.points - minus.points) / (2 * step)
        worst = max(worst, float(np.abs(pts_fd - f.p_dot).max()))
    elapsed = time.perf_counter() - start
    return OracleResult("lift property", worst < tol, worst, tol, elapsed)


# ---------------------------------------------------------------------------
# Criterion 4: linearisation matrices
# ---------------------------------------------------------------------------

def _random_filter_state(rng, n: int, t_cam: Pose, cfg: eqf.GainConfig,
                         spread: float = 0.4) -> eqf.FilterState:
    origin = TotalState.random(rng, n, t_cam)
    fs = eqf.make_filter_state(origin, cfg, t_cam)
    x_hat = SymElement.random(rng, origin.ids, spread)
    a = rng.standard_normal((fs.dof, fs.dof))
    sigma = a @ a.T / fs.dof + 0.5 * np.eye(fs.dof)
    return eqf.FilterState(x_hat, fs.b_hat, sigma, fs.origin,
                           fs.origin_bearings, fs.cache)


def _rel_err(fd: np.ndarray, analytic: np.ndarray) -> float:
    scale = max(float(np.linalg.norm(analytic)), 1e-9)
    return float(np.linalg.norm(fd - analytic)) / scale


def check_matrices(seed: int = 4, tol: float = 1e-5, cases_per_n: int = 2,
                   sizes=(1, 3, 10), step: float = FD_STEP) -> OracleResult:
    """State, input, and output matrices against flow finite differences."""
    rng = np.random.default_rng(seed)
    t_cam = Pose.random(rng, radius=0.3)
    cfg = eqf.GainConfig()
    start = time.perf_counter()
    worst = {"A": 0.0, "B": 0.0, "C": 0.0}
    from .states import exp_sym
    for n in sizes:
        for _ in range(cases_per_n):
            fs = _random_filter_state(rng, n, t_cam, cfg)
            u = ImuInput(rng.standard_normal(3), rng.standard_normal(3))
            est = eqf.estimated_state(fs, t_cam)
            lam = lift(est, u, t_cam)

            def error_flow(t, x, fs=fs, u=u, est=est, lam=lam):
                xi0 = sym_act_total(fs.x_hat, chart_epsilon_inv(x, fs.origin, t_cam),
                                    t_cam)
                xi_t = propagate_truth(xi0, lambda _t: u, 0.0, t) if t != 0.0 else xi0
                x_t = fs.x_hat @ exp_sym(lam.scaled(t))
                err = sym_act_total(x_t.inverse(), xi_t, t_cam)
                return chart_epsilon(err, fs.origin, t_cam)

            a_fd = mixed_partial(error_flow, step, np.zeros(5 + 3 * n), step)
            a_mat = eqf.compute_state_matrix(fs, u, t_cam)
            worst["A"] = max(worst["A"], _rel_err(a_fd, a_mat))

            def input_flow(t, du, fs=fs, u=u, est=est, lam=lam):
                u_pert = ImuInput(u.omega + du[:3], u.accel + du[3:], u.t)
                xi_t = (propagate_truth(est, lambda _t: u_pert, 0.0, t)
                        if t != 0.0 else est)
                x_t = fs.x_hat @ exp_sym(lam.scaled(t))
                err = sym_act_total(x_t.inverse(), xi_t, t_cam)
                return chart_epsilon(err, fs.origin, t_cam)

            b_fd = mixed_partial(input_flow, step, np.zeros(6), step)
            b_mat = eqf.compute_input_matrix(fs, u, t_cam)
            worst["B"] = max(worst["B"], _rel_err(b_fd, b_mat))

            def output_map(x, fs=fs):
                xi = sym_act_total(fs.x_hat, chart_epsilon_inv(x, fs.origin, t_cam),
                                   t_cam)
                rotated = output_act(fs.x_hat.inverse(), measure(xi, t_cam))
                return chart_delta(rotated, fs.origin_bearings)

            c_fd = numeric_differential(output_map, np.zeros(5 + 3 * n), step)
            worst["C"] = max(worst["C"], _rel_err(c_fd, fs.output_mat))
    elapsed = time.perf_counter() - start
    max_err = max(worst.values())
    return OracleResult("linearisation matrices", max_err < tol, max_err, tol, elapsed,
                        detail=f"A {worst['A']:.1e}, B {worst['B']:.1e}, C {worst['C']:.1e}")


# ---------------------------------------------------------------------------
# Criterion 5: bundle lift
# ---------------------------------------------------------------------------

def check_bundle(seed: int = 5, cases: int = 200, tol: float = 1e-9) -> OracleResult:
    """Constraint satisfaction and gauge local-optimality of the bundle lift."""
    rng = np.random.default_rng(seed)
    t_cam = Pose.random(rng, radius=0.3)
    cfg = eqf.GainConfig()
    start = time.perf_counter()
    worst_constraint = 0.0
    optimality_ok = True
    sizes = (1, 3, 10)
    from .states import chart_epsilon_diff, dphi_group_identity, dphi_state
    for k in range(cases):
        n = sizes[k % len(sizes)]
        fs = _random_filter_state(rng, n, t_cam, cfg)
        gamma = rng.standard_normal(5 + 3 * n)
        delta = eqf.bundle_lift(fs, gamma, t_cam)
        n_mat = chart_epsilon_diff(fs.origin, t_cam)
        d_id = dphi_group_identity(fs.origin, t_cam)
        gamma_prime = d_id @ delta.as_vector()
        worst_constraint = max(worst_constraint,
                               float(np.abs(n_mat @ gamma_prime - gamma).max()))
        # Optimality along the gauge directions (the feasible family).
        est = eqf.estimated_state(fs, t_cam)
        keep = np.zeros((9 + 3 * n, 9 + 3 * n))
        keep[9:, 9:] = np.eye(3 * n)
        m_mat = n_mat @ dphi_state(fs.x_hat.inverse(), est, t_cam) @ keep \
            @ dphi_state(fs.x_hat, fs.origin, t_cam)
        w_inv = np.linalg.inv(fs.sigma[6:, 6:])

        def cost(v):
            mv = m_mat @ v
            return float(mv @ w_inv @ mv)

        j_opt = cost(gamma_prime)
        basis = gauge_orbit_basis(fs.origin)
        for col in range(4):
            direction = basis[:, col] / np.linalg.norm(basis[:, col])
            for s in (1e-3, -1e-3, 1e-2, -1e-2):
                if cost(gamma_prime + s * direction) < j_opt - 1e-12 * max(1.0, j_opt):
                    optimality_ok = False
        # Zero input gives exactly zero correction.
        zero = eqf.bundle_lift(fs, np.zeros(5 + 3 * n), t_cam)
        if float(np.abs(zero.as_vector()).max()) != 0.0:
            optimality_ok = False
    elapsed = time.perf_counter() - start
    passed = worst_constraint < tol and optimality_ok
    detail = "optimality ok" if optimality_ok else "optimality FAILED"
    return OracleResult("bundle lift", passed, worst_constraint, tol, elapsed,
                        detail=detail)


def run_all(seed: int = 0, fast: bool = False) -> list[OracleResult]:
    """Run the verification suite; `fast` trims sample counts for smoke runs."""
    scale = 10 if fast else 1
    return [
        check_group_axioms(samples=1000 // scale, seed=seed + 1),
        check_actions(cases=1000 // scale, seed=seed + 2),
        check_lift(cases=500 // scale, seed=seed + 3),
        check_matrices(seed=seed + 4, cases_per_n=max(1, 2 // scale)),
        check_bundle(seed=seed + 5, cases=200 // scale),
    ]
