"""State space, symmetry group actions, and local coordinate charts.

The total state collects the IMU pose P, the body-frame velocity v and n
inertial landmarks p_i.  Two groups act on it:

- the gauge group (yaw + translation of the inertial frame), under which the
  dynamics and the bearing measurements are invariant, and
- the symmetry group SE2(3) x SOT(3)^n, which acts transitively and is
  compatible with the bearing outputs.

Landmarks are keyed by stable integer ids everywhere; operations align their
arguments by id, never by list position.

Tangent vectors of the total state are stored as stacked coordinates
[omega(3), v_body(3), vdot(3), pdot_1(3), ..., pdot_n(3)] where (omega,
v_body) is the body-frame pose tangent (Pdot = P hat(omega, v_body)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .groups import (
    ExtPose,
    GaugeElement,
    Pose,
    Rot3,
    ScaledRot,
    Se3Tangent,
    skew,
    skew_stack,
    so3_exp_stack,
    so3_left_jacobian,
    yaw_rotation,
)
from .sphere import (
    EPS_DEPTH,
    ChartDomainError,
    ExceptionSetError,
    sphere_project,
    stereo_chart,
    stereo_chart_inv,
    stereo_chart_jacobian,
)

# The camera extrinsic calibration is an ordinary pose: camera frame {C}
# with respect to the body frame {B}.
CameraExtrinsics = Pose

_E3 = np.array([0.0, 0.0, 1.0])


def rotation_between(a, b) -> Rot3:
    """Minimal rotation taking unit vector a to unit vector b."""
    a = np.asarray(a, dtype=float).reshape(3)
    b = np.asarray(b, dtype=float).reshape(3)
    axis = np.cross(a, b)
    s = np.linalg.norm(axis)
    c = float(a @ b)
    if s < 1e-12:
        if c > 0.0:
            return Rot3.identity()
        # Antipodal: rotate by pi around any perpendicular axis.
        k = int(np.argmin(np.abs(a)))
        e = np.zeros(3)
        e[k] = 1.0
        perp = np.cross(a, e)
        perp /= np.linalg.norm(perp)
        return Rot3.exp(math.pi * perp)
    angle = math.atan2(s, c)
    return Rot3.exp(axis / s * angle)


def _check_ids(ids) -> tuple[int, ...]:
    ids = tuple(int(i) for i in ids)
    if len(set(ids)) != len(ids):
        raise ValueError("landmark ids must be unique")
    return ids


def _index_map(ids: tuple[int, ...]) -> dict[int, int]:
    return {lid: k for k, lid in enumerate(ids)}


@dataclass(frozen=True, eq=False)
class TotalState:
    """Robot pose, body velocity and inertial landmark positions."""

    pose: Pose
    vel: np.ndarray
    ids: tuple[int, ...]
    points: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vel", np.reshape(np.asarray(self.vel, float), 3))
        object.__setattr__(self, "ids", _check_ids(self.ids))
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if pts.shape[0] != len(self.ids):
            raise ValueError("landmark count does not match id count")
        object.__setattr__(self, "points", pts)

    @property
    def n_landmarks(self) -> int:
        return len(self.ids)

    def landmark(self, lid: int) -> np.ndarray:
        return self.points[_index_map(self.ids)[lid]]

    def reindexed(self, ids) -> "TotalState":
        """Same state with landmarks listed in the requested id order."""
        ids = _check_ids(ids)
        if ids == self.ids:
            return self
        idx = _index_map(self.ids)
        rows = [idx[lid] for lid in ids]
        return TotalState(self.pose, self.vel, ids, self.points[rows])

    def camera_points(self, t_cam: Pose) -> np.ndarray:
        """Landmark coordinates in the camera frame, (n, 3)."""
        r_cam = self.pose.rotation.matrix @ t_cam.rotation.matrix
        x_cam = self.pose.act(t_cam.translation)
        return (self.points - x_cam) @ r_cam

    def depths(self, t_cam: Pose) -> np.ndarray:
        return np.linalg.norm(self.camera_points(t_cam), axis=1)

    def check_depths(self, t_cam: Pose, eps_depth: float = EPS_DEPTH) -> None:
        d = self.depths(t_cam)
        bad = [lid for lid, dk in zip(self.ids, d) if dk <= eps_depth]
        if bad:
            raise ExceptionSetError(f"landmarks {bad} are inside the exception ball")

    @staticmethod
    def random(rng: np.random.Generator, n: int, t_cam: Pose | None = None,
               depth_range=(0.5, 5.0), ids=None) -> "TotalState":
        """Random state with all landmarks at safe camera depths."""
        t_cam = t_cam if t_cam is not None else Pose.identity()
        pose = Pose.random(rng, radius=2.0)
        vel = rng.standard_normal(3)
        dirs = rng.standard_normal((n, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        depth = rng.uniform(*depth_range, size=n)
        cam = pose @ t_cam
        points = cam.act(dirs * depth[:, None])
        ids = tuple(range(n)) if ids is None else _check_ids(ids)
        return TotalState(pose, vel, ids, points)


@dataclass(frozen=True, eq=False)
class BearingSet:
    """Unit bearing vectors in the camera frame, keyed by landmark id."""

    ids: tuple[int, ...]
    units: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "ids", _check_ids(self.ids))
        u = np.asarray(self.units, dtype=float).reshape(-1, 3)
        if u.shape[0] != len(self.ids):
            raise ValueError("bearing count does not match id count")
        norms = np.linalg.norm(u, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValueError("bearings must be unit vectors (within 1e-6)")
        object.__setattr__(self, "units", u / norms[:, None])

    @property
    def n(self) -> int:
        return len(self.ids)

    def bearing(self, lid: int) -> np.ndarray:
        return self.units[_index_map(self.ids)[lid]]

    def reindexed(self, ids) -> "BearingSet":
        ids = _check_ids(ids)
        if ids == self.ids:
            return self
        idx = _index_map(self.ids)
        rows = [idx[lid] for lid in ids]
        return BearingSet(ids, self.units[rows])


@dataclass(frozen=True, eq=False)
class SymElement:
    """Element (A, w, Q_1..Q_n) of the symmetry group SE2(3) x SOT(3)^n."""

    ext: ExtPose
    ids: tuple[int, ...]
    rot: np.ndarray     # (n, 3, 3) rotation parts of the Q_i
    scale: np.ndarray   # (n,) positive scale parts of the Q_i

    def __post_init__(self):
        object.__setattr__(self, "ids", _check_ids(self.ids))
        r = np.asarray(self.rot, dtype=float).reshape(-1, 3, 3)
        s = np.asarray(self.scale, dtype=float).reshape(-1)
        if r.shape[0] != len(self.ids) or s.shape[0] != len(self.ids):
            raise ValueError("per-landmark component count does not match id count")
        if np.any(s <= 0.0):
            raise ValueError("scales must be strictly positive")
        object.__setattr__(self, "rot", r)
        object.__setattr__(self, "scale", s)

    @staticmethod
    def identity(ids) -> "SymElement":
        ids = _check_ids(ids)
        n = len(ids)
        return SymElement(ExtPose.identity(), ids, np.tile(np.eye(3), (n, 1, 1)), np.ones(n))

    @staticmethod
    def from_parts(ext: ExtPose, ids, scaled_rots) -> "SymElement":
        ids = _check_ids(ids)
        rot = np.stack([q.rotation.matrix for q in scaled_rots]) if ids else np.zeros((0, 3, 3))
        scale = np.array([q.scale for q in scaled_rots])
        return SymElement(ext, ids, rot, scale)

    @staticmethod
    def random(rng: np.random.Generator, ids, spread: float = 1.0) -> "SymElement":
        ids = _check_ids(ids)
        n = len(ids)
        rot = so3_exp_stack(spread * rng.standard_normal((n, 3)))
        scale = np.exp(0.3 * spread * rng.standard_normal(n))
        return SymElement(ExtPose.random(rng, spread), ids, rot, scale)

    def scaled_rot(self, lid: int) -> ScaledRot:
        k = _index_map(self.ids)[lid]
        return ScaledRot(Rot3(self.rot[k]), float(self.scale[k]))

    def reindexed(self, ids) -> "SymElement":
        ids = _check_ids(ids)
        if ids == self.ids:
            return self
        idx = _index_map(self.ids)
        rows = [idx[lid] for lid in ids]
        return SymElement(self.ext, ids, self.rot[rows], self.scale[rows])

    def compose(self, other: "SymElement") -> "SymElement":
        other = other.reindexed(self.ids)
        return SymElement(self.ext @ other.ext, self.ids,
                          self.rot @ other.rot, self.scale * other.scale)

    def __matmul__(self, other: "SymElement") -> "SymElement":
        return self.compose(other)

    def inverse(self) -> "SymElement":
        rot_inv = np.transpose(self.rot, (0, 2, 1))
        return SymElement(self.ext.inverse(), self.ids, rot_inv, 1.0 / self.scale)


@dataclass(frozen=True, eq=False)
class AlgebraElement:
    """Element of the symmetry-group algebra se2(3) x (so(3) x R)^n."""

    u: Se3Tangent
    w_dot: np.ndarray
    ids: tuple[int, ...]
    omega: np.ndarray   # (n, 3) rotation rates of the Q_i
    alpha: np.ndarray   # (n,) log-scale rates of the Q_i

    def __post_init__(self):
        object.__setattr__(self, "w_dot", np.reshape(np.asarray(self.w_dot, float), 3))
        object.__setattr__(self, "ids", _check_ids(self.ids))
        om = np.asarray(self.omega, dtype=float).reshape(-1, 3)
        al = np.asarray(self.alpha, dtype=float).reshape(-1)
        if om.shape[0] != len(self.ids) or al.shape[0] != len(self.ids):
            raise ValueError("per-landmark component count does not match id count")
        object.__setattr__(self, "omega", om)
        object.__setattr__(self, "alpha", al)

    @staticmethod
    def zero(ids) -> "AlgebraElement":
        ids = _check_ids(ids)
        n = len(ids)
        return AlgebraElement(Se3Tangent(np.zeros(3), np.zeros(3)), np.zeros(3),
                              ids, np.zeros((n, 3)), np.zeros(n))

    @staticmethod
    def from_vector(vec, ids) -> "AlgebraElement":
        """Unstack coordinates [omega(3), v(3), w_dot(3), (om_i(3), al_i(1))_i]."""
        ids = _check_ids(ids)
        n = len(ids)
        vec = np.asarray(vec, dtype=float).reshape(9 + 4 * n)
        pairs = vec[9:].reshape(n, 4)
        return AlgebraElement(Se3Tangent(vec[0:3], vec[3:6]), vec[6:9],
                              ids, pairs[:, :3], pairs[:, 3])

    def as_vector(self) -> np.ndarray:
        n = len(self.ids)
        pairs = np.concatenate([self.omega, self.alpha[:, None]], axis=1)
        return np.concatenate([self.u.as_vector(), self.w_dot, pairs.reshape(4 * n)])

    def scaled(self, factor: float) -> "AlgebraElement":
        return AlgebraElement(Se3Tangent(factor * self.u.angular, factor * self.u.linear),
                              factor * self.w_dot, self.ids,
                              factor * self.omega, factor * self.alpha)


def exp_sym(alg: AlgebraElement) -> SymElement:
    """Group exponential of the symmetry-group algebra."""
    pose = Pose.exp(alg.u)
    aux = so3_left_jacobian(alg.u.angular) @ alg.w_dot
    return SymElement(ExtPose(pose, aux), alg.ids,
                      so3_exp_stack(alg.omega), np.exp(alg.alpha))


# ---------------------------------------------------------------------------
# Group actions
# ---------------------------------------------------------------------------

def gauge_act(s: GaugeElement, xi: TotalState) -> TotalState:
    """Change of inertial frame: (P, v, p_i) -> (S^{-1} P, v, S^{-1}(p_i))."""
    s_inv = s.inverse().embed()
    return TotalState(s_inv @ xi.pose, xi.vel, xi.ids, s_inv.act(xi.points))


def sym_act_total(x: SymElement, xi: TotalState, t_cam: Pose,
                  eps_depth: float = EPS_DEPTH) -> TotalState:
    """Right action of the symmetry group on the total state."""
    x = x.reindexed(xi.ids)
    pose = xi.pose @ x.ext.pose
    r_a = x.ext.pose.rotation
    vel = r_a.inverse().act(xi.vel - x.ext.aux)
    q = xi.camera_points(t_cam)
    depths = np.linalg.norm(q, axis=1) / x.scale
    bad = [lid for lid, dk in zip(xi.ids, depths) if dk <= eps_depth]
    if bad:
        raise ExceptionSetError(
            f"action would place landmarks {bad} inside the exception ball")
    # Landmark map: p -> P A T_C Q^{-1} T_C^{-1} P^{-1} (p).
    q_new = np.einsum("nij,nj->ni", np.transpose(x.rot, (0, 2, 1)), q) / x.scale[:, None]
    points = (pose @ t_cam).act(q_new)
    return TotalState(pose, vel, xi.ids, points)


def output_act(x: SymElement, y: BearingSet) -> BearingSet:
    """Right action on bearings: eta_i -> R_{Q_i}^T eta_i (scale-free)."""
    x = x.reindexed(y.ids)
    units = np.einsum("nji,nj->ni", x.rot, y.units)
    return BearingSet(y.ids, units)


def measure(xi: TotalState, t_cam: Pose, eps_depth: float = EPS_DEPTH) -> BearingSet:
    """Bearing outputs of all landmarks clear of the exception ball.

    Landmarks inside the ball are omitted from the result; callers detect
    them by the missing ids.
    """
    q = xi.camera_points(t_cam)
    norms = np.linalg.norm(q, axis=1)
    keep = norms > eps_depth
    ids = tuple(lid for lid, ok in zip(xi.ids, keep) if ok)
    return BearingSet(ids, q[keep] / norms[keep, None])


# ---------------------------------------------------------------------------
# Local coordinate charts
# ---------------------------------------------------------------------------

def gravity_direction(pose: Pose) -> np.ndarray:
    """Inertial up-axis expressed in the body frame, R_P^T e3."""
    return pose.rotation.matrix.T @ _E3


def chart_epsilon(xi: TotalState, origin: TotalState, t_cam: Pose) -> np.ndarray:
    """Gauge-invariant chart about the origin; zero exactly at the origin.

    Coordinates stack the gravity-direction chart (2), the velocity offset
    (3) and the camera-frame landmark offsets q_i - q_i° (3 each, in the
    origin id order).
    """
    xi = xi.reindexed(origin.ids)
    grav = stereo_chart(gravity_direction(origin.pose), gravity_direction(xi.pose))
    dq = xi.camera_points(t_cam) - origin.camera_points(t_cam)
    return np.concatenate([grav, xi.vel - origin.vel, dq.reshape(-1)])


def chart_epsilon_inv(coords, origin: TotalState, t_cam: Pose) -> TotalState:
    """Representative of the chart point with the origin's yaw and position.

    The gauge freedom is fixed by choosing the unique pose whose horizontal
    heading and translation match the origin (section through the origin
    fibre); chart_epsilon_inv(0) returns the origin itself.
    """
    n = origin.n_landmarks
    coords = np.asarray(coords, dtype=float).reshape(5 + 3 * n)
    gamma0 = gravity_direction(origin.pose)
    gamma = stereo_chart_inv(gamma0, coords[:2])
    # R must map gamma to e3; the one-parameter yaw family is resolved by
    # matching the origin heading.
    r0 = rotation_between(gamma, _E3)
    ref = r0.matrix[:, 0]
    horiz = math.hypot(ref[0], ref[1])
    if horiz < 1e-12:
        psi = 0.0
    else:
        psi = origin.pose.rotation.yaw() - math.atan2(ref[1], ref[0])
    rotation = yaw_rotation(psi) @ r0
    pose = Pose(rotation, origin.pose.translation)
    vel = origin.vel + coords[2:5]
    q = origin.camera_points(t_cam) + coords[5:].reshape(n, 3)
    points = (pose @ t_cam).act(q)
    return TotalState(pose, vel, origin.ids, points)


def chart_delta(y: BearingSet, origin_y: BearingSet) -> np.ndarray:
    """Output chart about the origin bearings, 2 coordinates per landmark."""
    y = y.reindexed(origin_y.ids)
    out = np.empty(2 * origin_y.n)
    for k in range(origin_y.n):
        try:
            out[2 * k:2 * k + 2] = stereo_chart(origin_y.units[k], y.units[k])
        except ChartDomainError as err:
            raise ChartDomainError(
                f"bearing for landmark {origin_y.ids[k]} is outside the chart domain"
            ) from err
    return out


def chart_delta_inv(coords, origin_y: BearingSet) -> BearingSet:
    coords = np.asarray(coords, dtype=float).reshape(origin_y.n, 2)
    units = np.stack([stereo_chart_inv(origin_y.units[k], coords[k])
                      for k in range(origin_y.n)]) if origin_y.n else np.zeros((0, 3))
    return BearingSet(origin_y.ids, units)


# ---------------------------------------------------------------------------
# Differentials
# ---------------------------------------------------------------------------

def state_dim(n: int) -> int:
    return 9 + 3 * n


def group_dim(n: int) -> int:
    return 9 + 4 * n


def dphi_group_identity(xi: TotalState, t_cam: Pose) -> np.ndarray:
    """Differential at the group identity of E -> Phi(E, xi).

    Maps algebra coordinates (9 + 4n) to total-state tangent coordinates
    (9 + 3n); columns follow AlgebraElement.as_vector ordering.
    """
    n = xi.n_landmarks
    out = np.zeros((state_dim(n), group_dim(n)))
    out[0:6, 0:6] = np.eye(6)
    out[6:9, 0:3] = skew(xi.vel)
    out[6:9, 6:9] = -np.eye(3)
    r_p = xi.pose.rotation.matrix
    r_pc = (xi.pose @ t_cam).rotation.matrix
    body = (xi.points - xi.pose.translation) @ r_p  # P^{-1}(p_i)
    q = xi.camera_points(t_cam)
    for k in range(n):
        row = slice(9 + 3 * k, 12 + 3 * k)
        out[row, 0:3] = -r_p @ skew(body[k])
        out[row, 3:6] = r_p
        col = 9 + 4 * k
        out[row, col:col + 3] = r_pc @ skew(q[k])
        out[row, col + 3] = -r_pc @ q[k]
    return out


def dphi_state(x: SymElement, xi: TotalState, t_cam: Pose) -> np.ndarray:
    """Differential of Phi(X, .) at xi in total-state tangent coordinates."""
    x = x.reindexed(xi.ids)
    n = xi.n_landmarks
    out = np.zeros((state_dim(n), state_dim(n)))
    a = x.ext.pose
    out[0:6, 0:6] = a.inverse().adjoint_matrix()
    out[6:9, 6:9] = a.rotation.matrix.T
    if n == 0:
        return out
    r_p = xi.pose.rotation.matrix
    r_tc = t_cam.rotation.matrix
    body = (xi.points - xi.pose.translation) @ r_p        # P^{-1}(p_i)
    new_state = sym_act_total(x, xi, t_cam, eps_depth=0.0)
    body_new = (new_state.points - xi.pose.translation) @ r_p   # P^{-1}(p'_i)
    # Linear part of the landmark point map p -> P A T_C Q^{-1} T_C^{-1} P^{-1} p.
    left = r_p @ a.rotation.matrix @ r_tc
    r_l = left @ (np.transpose(x.rot, (0, 2, 1)) / x.scale[:, None, None]) \
        @ (r_tc.T @ r_p.T)
    omega_blocks = -(r_p @ skew_stack(body_new)) + r_l @ (r_p @ skew_stack(body))
    mu_blocks = r_p - r_l @ r_p
    for k in range(n):
        row = slice(9 + 3 * k, 12 + 3 * k)
        out[row, 0:3] = omega_blocks[k]
        out[row, 3:6] = mu_blocks[k]
        out[row, row] = r_l[k]
    return out


def chart_epsilon_diff(origin: TotalState, t_cam: Pose) -> np.ndarray:
    """Differential at the origin of Xi -> chart_epsilon(Xi, origin)."""
    n = origin.n_landmarks
    out = np.zeros((5 + 3 * n, state_dim(n)))
    gamma0 = gravity_direction(origin.pose)
    out[0:2, 0:3] = stereo_chart_jacobian(gamma0, gamma0) @ skew(gamma0)
    out[2:5, 6:9] = np.eye(3)
    r_p = origin.pose.rotation.matrix
    r_tc = t_cam.rotation.matrix
    body = (origin.points - origin.pose.translation) @ r_p
    for k in range(n):
        row = slice(5 + 3 * k, 8 + 3 * k)
        out[row, 0:3] = r_tc.T @ skew(body[k])
        out[row, 3:6] = -r_tc.T
        out[row, 9 + 3 * k:12 + 3 * k] = r_tc.T @ r_p.T
    return out


def gauge_orbit_basis(origin: TotalState) -> np.ndarray:
    """Tangents of the gauge orbit at the origin, (9 + 3n, 4).

    Columns are the derivatives of gauge_act along yaw and the three
    translations; they span the kernel of chart_epsilon_diff.
    """
    n = origin.n_landmarks
    out = np.zeros((state_dim(n), 4))
    rt = origin.pose.rotation.matrix.T
    x_p = origin.pose.translation
    # Yaw direction.
    out[0:3, 0] = -rt @ _E3
    out[3:6, 0] = -rt @ np.cross(_E3, x_p)
    for k in range(n):
        out[9 + 3 * k:12 + 3 * k, 0] = -np.cross(_E3, origin.points[k])
    # Translation directions.
    for j in range(3):
        e = np.zeros(3)
        e[j] = 1.0
        out[3:6, 1 + j] = -rt @ e
        for k in range(n):
            out[9 + 3 * k:12 + 3 * k, 1 + j] = -e
    return out


def solve_transitive(xi1: TotalState, xi2: TotalState, t_cam: Pose) -> SymElement:
    """Group element X with sym_act_total(X, xi1) == xi2 (exact construction)."""
    xi2 = xi2.reindexed(xi1.ids)
    a = xi1.pose.inverse() @ xi2.pose
    w = xi1.vel - a.rotation.act(xi2.vel)
    q1 = xi1.camera_points(t_cam)
    q2 = xi2.camera_points(t_cam)
    rots = []
    scales = []
    for k in range(xi1.n_landmarks):
        n1, n2 = np.linalg.norm(q1[k]), np.linalg.norm(q2[k])
        r_fwd = rotation_between(q1[k] / n1, q2[k] / n2)
        rots.append(r_fwd.inverse().matrix)
        scales.append(n1 / n2)
    rot = np.stack(rots) if rots else np.zeros((0, 3, 3))
    return SymElement(ExtPose(a, w), xi1.ids, rot, np.array(scales))
