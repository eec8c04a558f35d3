"""Equivariant filter on the symmetry group, with IMU bias estimation.

The observer state is a symmetry-group element X_hat acting on a fixed origin
configuration; the state estimate is the action of X_hat on that origin.  A
Riccati matrix Sigma over the stacked error coordinates

    [bias(6) | gravity chart(2) | velocity(3) | landmarks(3 each)]

drives Kalman-style corrections.  Propagation integrates the observer by the
exact group exponential of the lifted dynamics; vision updates apply a
discrete Kalman step whose manifold correction is lifted to the group through
a weighted least-squares bundle lift that minimises landmark motion.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .dynamics import BiasState, GRAVITY, ImuInput, apply_bias_correction, lift
from .groups import skew, skew_stack
from .groups import Pose
from .sphere import (
    CHART_GUARD,
    EPS_DEPTH,
    stereo_chart,
    stereo_chart_inv_jacobian,
    stereo_chart_jacobian,
)
from .states import (
    AlgebraElement,
    BearingSet,
    SymElement,
    TotalState,
    chart_epsilon_diff,
    dphi_group_identity,
    dphi_state,
    exp_sym,
    gauge_orbit_basis,
    gravity_direction,
    measure,
    sym_act_total,
)

log = logging.getLogger(__name__)

# Relative singular-value threshold for the pseudo-inverse fallbacks.
SVD_THRESHOLD = 1e-10


@dataclass(frozen=True)
class GainConfig:
    """Filter gains and policies; all noise entries are variances."""

    sigma0_bias: float = 1e-2
    sigma0_gravity: float = 1e-1
    sigma0_velocity: float = 1e-1
    sigma0_landmark: float = 1.0
    r_gyro: float = 1e-6          # (1e-3)^2
    r_accel: float = 1e-4         # (1e-2)^2
    q_bearing: float = 1e-4       # (1e-2)^2 per chart coordinate
    p_bias: float = 1e-6          # bias random-walk intensity
    p_manifold: float = 1e-8      # floor process noise on manifold blocks
    new_landmark_depth: float = 1.0
    eps_depth: float = EPS_DEPTH
    max_dt: float = 0.1

    def __post_init__(self):
        for name in ("sigma0_bias", "sigma0_gravity", "sigma0_velocity",
                     "sigma0_landmark", "r_gyro", "r_accel", "q_bearing",
                     "p_bias", "p_manifold", "new_landmark_depth",
                     "eps_depth", "max_dt"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")

    @staticmethod
    def from_mapping(values: dict) -> "GainConfig":
        known = {f for f in GainConfig.__dataclass_fields__}
        bad = set(values) - known
        if bad:
            raise ValueError(f"unknown gain keys: {sorted(bad)}")
        return GainConfig(**{k: float(v) for k, v in values.items()})

    def sigma0(self, n: int) -> np.ndarray:
        diag = ([self.sigma0_bias] * 6 + [self.sigma0_gravity] * 2 +
                [self.sigma0_velocity] * 3 + [self.sigma0_landmark] * 3 * n)
        return np.diag(diag)

    def process_noise(self, n: int) -> np.ndarray:
        diag = [self.p_bias] * 6 + [self.p_manifold] * (5 + 3 * n)
        return np.diag(diag)

    def input_noise(self) -> np.ndarray:
        return np.diag([self.r_gyro] * 3 + [self.r_accel] * 3)


@dataclass(frozen=True, eq=False)
class MeasurementBatch:
    """Bearing measurements of one camera frame."""

    t: float
    bearings: BearingSet

    @property
    def ids(self) -> tuple[int, ...]:
        return self.bearings.ids


@dataclass(frozen=True, eq=False)
class OriginCache:
    """Origin-dependent constants, rebuilt only when the registry changes."""

    output_mat: np.ndarray       # (2n, 5+3n) constant output matrix
    eps_diff: np.ndarray         # (5+3n, 9+3n) chart differential at the origin
    dphi_id: np.ndarray          # (9+3n, 9+4n) action differential at identity
    null_basis: np.ndarray       # (9+3n, 4) orthonormal gauge directions
    eps_gram_cho: tuple | None   # Cholesky of eps_diff eps_diff^T, None if degenerate
    dphi_gram_cho: tuple | None  # Cholesky of dphi_id dphi_id^T, None if degenerate


def _gram_cholesky(mat: np.ndarray):
    gram = mat @ mat.T
    try:
        cho = scipy.linalg.cho_factor(gram, check_finite=False)
    except scipy.linalg.LinAlgError:
        return None
    diag = np.abs(np.diag(cho[0]))
    if diag.min() < 1e-9 * max(diag.max(), 1.0):
        return None
    return cho


def make_origin_cache(origin: TotalState, t_cam: Pose,
                      eps_depth: float = EPS_DEPTH) -> OriginCache:
    output_mat = compute_output_matrix(origin, t_cam, eps_depth)
    eps_diff = chart_epsilon_diff(origin, t_cam)
    dphi_id = dphi_group_identity(origin, t_cam)
    null_basis = np.linalg.qr(gauge_orbit_basis(origin))[0]
    return OriginCache(output_mat, eps_diff, dphi_id, null_basis,
                       _gram_cholesky(eps_diff), _gram_cholesky(dphi_id))


@dataclass(frozen=True, eq=False)
class FilterState:
    """Observer group element, bias estimate, Riccati matrix, and origin."""

    x_hat: SymElement
    b_hat: BiasState
    sigma: np.ndarray
    origin: TotalState
    origin_bearings: BearingSet
    cache: OriginCache

    @property
    def ids(self) -> tuple[int, ...]:
        return self.origin.ids

    @property
    def n_landmarks(self) -> int:
        return self.origin.n_landmarks

    @property
    def dof(self) -> int:
        return 11 + 3 * self.n_landmarks

    @property
    def output_mat(self) -> np.ndarray:
        return self.cache.output_mat

    def block_index(self, lid: int) -> int:
        return self.origin.ids.index(lid)


def make_filter_state(origin: TotalState, cfg: GainConfig, t_cam: Pose) -> FilterState:
    """Initial filter state: identity observer, zero bias, configured Sigma0."""
    origin.check_depths(t_cam, cfg.eps_depth)
    y0 = measure(origin, t_cam, cfg.eps_depth)
    return FilterState(
        x_hat=SymElement.identity(origin.ids),
        b_hat=BiasState.zero(),
        sigma=cfg.sigma0(origin.n_landmarks),
        origin=origin,
        origin_bearings=y0,
        cache=make_origin_cache(origin, t_cam, cfg.eps_depth),
    )


def estimated_state(fs: FilterState, t_cam: Pose) -> TotalState:
    """State estimate: the observer element applied to the origin."""
    return sym_act_total(fs.x_hat, fs.origin, t_cam, eps_depth=0.0)


def _scaled_rot_matrices(x: SymElement) -> np.ndarray:
    return x.scale[:, None, None] * x.rot


def _scaled_rot_inverses(x: SymElement) -> np.ndarray:
    return np.transpose(x.rot, (0, 2, 1)) / x.scale[:, None, None]


def compute_state_matrix(fs: FilterState, u: ImuInput, t_cam: Pose,
                         gravity: float = GRAVITY,
                         est: TotalState | None = None) -> np.ndarray:
    """State matrix of the error coordinates, (5+3n) square.

    u is the bias-corrected IMU sample used for propagation.
    """
    n = fs.n_landmarks
    if est is None:
        est = estimated_state(fs, t_cam)
    a_mat = np.zeros((5 + 3 * n, 5 + 3 * n))
    gamma0 = gravity_direction(fs.origin.pose)
    a_mat[2:5, 0:2] = -gravity * stereo_chart_inv_jacobian(gamma0, np.zeros(2))
    if n == 0:
        return a_mat
    r_atc = (fs.x_hat.ext.pose @ t_cam).rotation.matrix
    q_hat = est.camera_points(t_cam)
    sq = np.einsum("ni,ni->n", q_hat, q_hat)
    v_c = t_cam.rotation.matrix.T @ (est.vel - np.cross(t_cam.translation, u.omega))
    q_mats = _scaled_rot_matrices(fs.x_hat)
    q_invs = _scaled_rot_inverses(fs.x_hat)
    core = (skew_stack(q_hat) @ skew(v_c)
            - 2.0 * np.einsum("i,nj->nij", v_c, q_hat)
            + np.einsum("ni,j->nij", q_hat, v_c))
    diag_blocks = -(q_mats @ core @ q_invs) / sq[:, None, None]
    vel_blocks = -(q_mats @ r_atc.T)
    for k in range(n):
        row = slice(5 + 3 * k, 8 + 3 * k)
        a_mat[row, 2:5] = vel_blocks[k]
        a_mat[row, row] = diag_blocks[k]
    return a_mat


def compute_input_matrix(fs: FilterState, u: ImuInput, t_cam: Pose,
                         est: TotalState | None = None) -> np.ndarray:
    """Input matrix of the error coordinates, (5+3n) x 6."""
    n = fs.n_landmarks
    if est is None:
        est = estimated_state(fs, t_cam)
    b_mat = np.zeros((5 + 3 * n, 6))
    gamma0 = gravity_direction(fs.origin.pose)
    r_a = fs.x_hat.ext.pose.rotation.matrix
    dchart = stereo_chart_jacobian(gamma0, gamma0)
    b_mat[0:2, 0:3] = dchart @ r_a @ skew(r_a.T @ gamma0)
    b_mat[2:5, 0:3] = r_a @ skew(est.vel)
    b_mat[2:5, 3:6] = r_a
    if n == 0:
        return b_mat
    r_tc = t_cam.rotation.matrix
    q_hat = est.camera_points(t_cam)
    rows = _scaled_rot_matrices(fs.x_hat) @ (
        skew_stack(q_hat) @ r_tc.T + r_tc.T @ skew(t_cam.translation))
    b_mat[5:, 0:3] = rows.reshape(3 * n, 3)
    return b_mat


def compute_output_matrix(origin: TotalState, t_cam: Pose,
                          eps_depth: float = EPS_DEPTH) -> np.ndarray:
    """Constant output matrix at the origin, (2n) x (5+3n)."""
    origin.check_depths(t_cam, eps_depth)
    n = origin.n_landmarks
    c_mat = np.zeros((2 * n, 5 + 3 * n))
    q0 = origin.camera_points(t_cam)
    for k in range(n):
        norm = float(np.linalg.norm(q0[k]))
        y0 = q0[k] / norm
        proj = (np.eye(3) - np.outer(y0, y0)) / norm
        c_mat[2 * k:2 * k + 2, 5 + 3 * k:8 + 3 * k] = \
            stereo_chart_jacobian(y0, y0) @ proj
    return c_mat


def propagate(fs: FilterState, u_measured: ImuInput, dt: float, cfg: GainConfig,
              t_cam: Pose, gravity: float = GRAVITY) -> FilterState:
    """Advance the observer and the Riccati matrix by one IMU interval."""
    if dt == 0.0:
        return fs
    if not 0.0 < dt <= cfg.max_dt:
        raise ValueError(f"dt = {dt} outside (0, {cfg.max_dt}]")

    u_hat = apply_bias_correction(u_measured, fs.b_hat)
    est = estimated_state(fs, t_cam)
    depths = np.linalg.norm(est.camera_points(t_cam), axis=1)
    if np.any(depths <= cfg.eps_depth):
        bad = [lid for lid, d in zip(fs.ids, depths) if d <= cfg.eps_depth]
        log.warning("quarantining landmarks %s: estimate inside exception ball", bad)
        for lid in bad:
            fs = remove_landmark(fs, lid, t_cam, cfg.eps_depth)
        est = estimated_state(fs, t_cam)

    a_mat = compute_state_matrix(fs, u_hat, t_cam, gravity, est=est)
    b_mat = compute_input_matrix(fs, u_hat, t_cam, est=est)
    dof = fs.dof
    f_mat = np.zeros((dof, dof))
    f_mat[6:, 0:6] = -b_mat
    f_mat[6:, 6:] = a_mat
    noise = cfg.process_noise(fs.n_landmarks)
    noise[6:, 6:] += b_mat @ cfg.input_noise() @ b_mat.T
    step = np.eye(dof) + dt * f_mat
    sigma = step @ fs.sigma @ step.T + dt * noise
    sigma = 0.5 * (sigma + sigma.T)

    lam = lift(est, u_hat, t_cam, gravity, cfg.eps_depth)
    x_hat = fs.x_hat @ exp_sym(lam.scaled(dt))
    return replace(fs, x_hat=x_hat, sigma=sigma)


def _min_norm_solve(mat: np.ndarray, cho, rhs: np.ndarray) -> np.ndarray:
    """Minimum-norm solution of mat @ x = rhs for full-row-rank mat."""
    if cho is not None:
        return mat.T @ scipy.linalg.cho_solve(cho, rhs, check_finite=False)
    # Degenerate geometry: pseudo-inverse with thresholded singular values.
    return np.linalg.lstsq(mat, rhs, rcond=SVD_THRESHOLD)[0]


def bundle_lift(fs: FilterState, gamma: np.ndarray, t_cam: Pose,
                est: TotalState | None = None) -> AlgebraElement:
    """Lift a manifold correction to the group, minimising landmark motion.

    Among all total-space corrections consistent with gamma (a 4-parameter
    gauge family), picks the one whose landmark displacement, pulled back to
    error coordinates, has the smallest Sigma-weighted norm, then maps it to
    the algebra through a fixed minimum-norm right-inverse of the action
    differential.
    """
    n = fs.n_landmarks
    gamma = np.asarray(gamma, dtype=float).reshape(5 + 3 * n)
    cache = fs.cache
    if cache.eps_gram_cho is None:
        log.warning("degenerate correction geometry; using minimum-norm lift")
    g_part = _min_norm_solve(cache.eps_diff, cache.eps_gram_cho, gamma)

    if n > 0:
        if est is None:
            est = estimated_state(fs, t_cam)
        null_basis = cache.null_basis
        fwd = dphi_state(fs.x_hat, fs.origin, t_cam)
        back = dphi_state(fs.x_hat.inverse(), est, t_cam)
        m_mat = (cache.eps_diff @ back[:, 9:]) @ fwd[9:, :]
        sigma_mm = fs.sigma[6:, 6:]
        cho = scipy.linalg.cho_factor(sigma_mm, check_finite=False)
        m_null = m_mat @ null_basis
        weighted = scipy.linalg.cho_solve(cho, m_null, check_finite=False)
        h_mat = m_null.T @ weighted
        rhs = weighted.T @ (m_mat @ g_part)
        shift = -np.linalg.pinv(h_mat, rcond=SVD_THRESHOLD) @ rhs
        g_part = g_part + null_basis @ shift

    delta_vec = _min_norm_solve(cache.dphi_id, cache.dphi_gram_cho, g_part)
    return AlgebraElement.from_vector(delta_vec, fs.ids)


def update(fs: FilterState, batch: MeasurementBatch, cfg: GainConfig,
           t_cam: Pose) -> FilterState:
    """Apply one vision frame as a discrete Kalman step on the group."""
    idx = {lid: k for k, lid in enumerate(fs.ids)}
    unknown = [lid for lid in batch.ids if lid not in idx]
    if unknown:
        raise ValueError(f"measurement ids {unknown} are not registered")

    # Residual in output-chart coordinates about the origin bearings; bearings
    # whose rotated value leaves the chart domain are dropped from the batch.
    used: list[int] = []
    residuals: list[np.ndarray] = []
    for lid in batch.ids:
        k = idx[lid]
        # rho(X^{-1}, y)_k = R_{Q_k} y_k
        rotated = fs.x_hat.rot[k] @ batch.bearings.bearing(lid)
        y0 = fs.origin_bearings.units[k]
        if np.linalg.norm(rotated + y0) < CHART_GUARD:
            log.warning("dropping bearing %d: outside residual chart domain", lid)
            continue
        residuals.append(stereo_chart(y0, rotated))
        used.append(lid)
    if not used:
        return fs

    m = len(used)
    z = np.concatenate(residuals)
    c_mat = np.zeros((2 * m, fs.dof))
    for r, lid in enumerate(used):
        k = idx[lid]
        c_mat[2 * r:2 * r + 2, 6:] = fs.output_mat[2 * k:2 * k + 2]

    s_mat = c_mat @ fs.sigma @ c_mat.T + cfg.q_bearing * np.eye(2 * m)
    gain = np.linalg.solve(s_mat, c_mat @ fs.sigma).T
    correction = gain @ z
    beta, gamma = correction[:6], correction[6:]

    est = estimated_state(fs, t_cam)
    delta = bundle_lift(fs, gamma, t_cam, est=est)
    x_hat = exp_sym(delta) @ fs.x_hat
    b_hat = BiasState(fs.b_hat.b_omega + beta[:3], fs.b_hat.b_accel + beta[3:])

    joseph = np.eye(fs.dof) - gain @ c_mat
    sigma = joseph @ fs.sigma @ joseph.T + cfg.q_bearing * (gain @ gain.T)
    sigma = 0.5 * (sigma + sigma.T)
    return replace(fs, x_hat=x_hat, b_hat=b_hat, sigma=sigma)


def add_landmark(fs: FilterState, lid: int, bearing: np.ndarray, cfg: GainConfig,
                 t_cam: Pose, depth: float | None = None) -> FilterState:
    """Register a landmark seen along `bearing` at nominal depth.

    The origin point is chosen so the estimate reproduces the measured
    bearing exactly; with fewer than five landmarks the nominal depth is the
    configured default, afterwards it is scaled by the median scene depth.
    """
    if lid in fs.ids:
        raise ValueError(f"landmark id {lid} already registered")
    bearing = np.asarray(bearing, dtype=float).reshape(3)
    bearing = bearing / np.linalg.norm(bearing)
    if depth is None:
        depth = cfg.new_landmark_depth
        if fs.n_landmarks >= 5:
            est = estimated_state(fs, t_cam)
            depth *= float(np.median(np.linalg.norm(est.camera_points(t_cam), axis=1)))

    origin = fs.origin
    p0_new = (origin.pose @ t_cam).act(depth * bearing)
    new_origin = TotalState(origin.pose, origin.vel, origin.ids + (lid,),
                            np.vstack([origin.points, p0_new[None, :]]))
    x = fs.x_hat
    new_x = SymElement(x.ext, new_origin.ids,
                       np.concatenate([x.rot, np.eye(3)[None, :, :]]),
                       np.concatenate([x.scale, [1.0]]))
    y = fs.origin_bearings
    new_y = BearingSet(y.ids + (lid,), np.vstack([y.units, bearing[None, :]]))

    dof = fs.dof
    sigma = np.zeros((dof + 3, dof + 3))
    sigma[:dof, :dof] = fs.sigma
    sigma[dof:, dof:] = cfg.sigma0_landmark * np.eye(3)

    return FilterState(new_x, fs.b_hat, sigma, new_origin, new_y,
                       make_origin_cache(new_origin, t_cam, cfg.eps_depth))


def remove_landmark(fs: FilterState, lid: int, t_cam: Pose,
                    eps_depth: float = EPS_DEPTH) -> FilterState:
    """Drop a landmark and its covariance rows/columns."""
    if lid not in fs.ids:
        raise ValueError(f"landmark id {lid} is not registered")
    k = fs.block_index(lid)
    keep = [i for i in range(fs.n_landmarks) if i != k]
    ids = tuple(l for l in fs.ids if l != lid)
    origin = TotalState(fs.origin.pose, fs.origin.vel, ids, fs.origin.points[keep])
    x = fs.x_hat
    new_x = SymElement(x.ext, ids, x.rot[keep], x.scale[keep])
    y = fs.origin_bearings
    new_y = BearingSet(ids, y.units[keep])
    drop = list(range(11 + 3 * k, 14 + 3 * k))
    sigma = np.delete(np.delete(fs.sigma, drop, axis=0), drop, axis=1)
    return FilterState(new_x, fs.b_hat, sigma, origin, new_y,
                       make_origin_cache(origin, t_cam, eps_depth))
