"""Synthetic world generator and gauge-aligned trajectory evaluation.

Scenarios produce an exact analytic trajectory (position and yaw with closed
form derivatives), the corresponding ideal IMU stream, and bearing
measurements of a static landmark field.  Noise enters as per-sample Gaussian
perturbations on the IMU channels and as small random rotations of the
bearings, which keeps them exactly on the sphere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import BiasState, GRAVITY, ImuInput
from .filter import MeasurementBatch
from .groups import GaugeElement, Pose, Rot3, yaw_rotation
from .sphere import tangent_basis
from .states import BearingSet, TotalState, gauge_act, measure

_E3 = np.array([0.0, 0.0, 1.0])

TRAJECTORY_KINDS = ("circle", "lissajous", "stationary")


class GenerationError(ValueError):
    """The requested scenario cannot be generated (e.g. exception-set hit)."""


@dataclass(frozen=True)
class ScenarioConfig:
    """Synthetic scenario description.

    Noise fields are per-sample standard deviations: gyro_noise in rad/s,
    accel_noise in m/s^2, bearing_noise in radians of angular perturbation,
    bias_rw in units/s^(1/2) of random walk on the true biases (zero keeps
    them constant).
    """

    kind: str = "circle"
    radius: float = 2.0
    period: float = 10.0
    duration: float = 20.0
    imu_rate: float = 200.0
    cam_rate: float = 20.0
    n_landmarks: int = 30
    center: tuple = (0.0, 0.0, 1.0)
    spawn_half: tuple = (4.0, 4.0, 1.5)
    spawn_center: tuple = (0.0, 0.0, 1.0)
    gyro_noise: float = 0.0
    accel_noise: float = 0.0
    bearing_noise: float = 0.0
    bias_rw: float = 0.0
    gyro_bias: tuple = (0.0, 0.0, 0.0)
    accel_bias: tuple = (0.0, 0.0, 0.0)
    seed: int = 0
    min_depth: float = 0.2
    gravity: float = GRAVITY

    def __post_init__(self):
        if self.kind not in TRAJECTORY_KINDS:
            raise ValueError(f"unknown trajectory kind {self.kind!r}")
        if not (self.imu_rate > 0 and self.cam_rate > 0):
            raise ValueError("rates must be positive")
        if self.imu_rate < self.cam_rate:
            raise ValueError("IMU rate must be at least the camera rate")
        if self.duration <= 0:
            raise ValueError("duration must be positive")

    @staticmethod
    def from_mapping(values: dict) -> "ScenarioConfig":
        known = set(ScenarioConfig.__dataclass_fields__)
        bad = set(values) - known
        if bad:
            raise ValueError(f"unknown scenario keys: {sorted(bad)}")
        kwargs = {}
        for key, raw in values.items():
            if key == "kind":
                kwargs[key] = str(raw)
            elif key in ("n_landmarks", "seed"):
                kwargs[key] = int(raw)
            elif key in ("center", "spawn_half", "spawn_center",
                         "gyro_bias", "accel_bias"):
                kwargs[key] = tuple(float(v) for v in str(raw).split(","))
            else:
                kwargs[key] = float(raw)
        return ScenarioConfig(**kwargs)


class _Path:
    """Analytic trajectory: position, yaw, and their time derivatives."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.center = np.asarray(cfg.center, dtype=float)
        self.w = 2.0 * math.pi / cfg.period

    def position(self, t: float) -> np.ndarray:
        c, r, w = self.center, self.cfg.radius, self.w
        if self.cfg.kind == "stationary":
            return c.copy()
        if self.cfg.kind == "circle":
            return c + r * np.array([math.cos(w * t), math.sin(w * t), 0.0])
        return c + r * np.array([math.sin(w * t),
                                 0.5 * math.sin(2.0 * w * t),
                                 0.25 * math.sin(3.0 * w * t)])

    def velocity(self, t: float) -> np.ndarray:
        r, w = self.cfg.radius, self.w
        if self.cfg.kind == "stationary":
            return np.zeros(3)
        if self.cfg.kind == "circle":
            return r * w * np.array([-math.sin(w * t), math.cos(w * t), 0.0])
        return r * w * np.array([math.cos(w * t),
                                 math.cos(2.0 * w * t),
                                 0.75 * math.cos(3.0 * w * t)])

    def acceleration(self, t: float) -> np.ndarray:
        r, w = self.cfg.radius, self.w
        if self.cfg.kind == "stationary":
            return np.zeros(3)
        if self.cfg.kind == "circle":
            return -r * w * w * np.array([math.cos(w * t), math.sin(w * t), 0.0])
        return -r * w * w * np.array([math.sin(w * t),
                                      2.0 * math.sin(2.0 * w * t),
                                      2.25 * math.sin(3.0 * w * t)])

    # Circle heading follows the tangent plus a wobble.  A heading locked to
    # the orbit rate would make the body-frame acceleration constant, which
    # renders scene scale indistinguishable from accelerometer bias; the
    # wobble keeps the specific-force direction moving in the body frame.
    _WOBBLE = 0.6

    def yaw(self, t: float) -> float:
        if self.cfg.kind == "stationary":
            return 0.0
        if self.cfg.kind == "circle":
            return self.w * t + 0.5 * math.pi + self._WOBBLE * math.sin(2.0 * self.w * t)
        return 0.8 * math.sin(self.w * t)

    def yaw_rate(self, t: float) -> float:
        if self.cfg.kind == "stationary":
            return 0.0
        if self.cfg.kind == "circle":
            return self.w + 2.0 * self._WOBBLE * self.w * math.cos(2.0 * self.w * t)
        return 0.8 * self.w * math.cos(self.w * t)

    def state(self, t: float, ids, points) -> TotalState:
        rot = yaw_rotation(self.yaw(t))
        pose = Pose(rot, self.position(t))
        vel = rot.matrix.T @ self.velocity(t)
        return TotalState(pose, vel, ids, points)

    def imu(self, t: float) -> ImuInput:
        # Yaw-only attitude: Omega = psidot e3 and a = R^T (xddot + g e3).
        rot_t = yaw_rotation(self.yaw(t)).matrix.T
        omega = np.array([0.0, 0.0, self.yaw_rate(t)])
        accel = rot_t @ (self.acceleration(t) + self.cfg.gravity * _E3)
        return ImuInput(omega, accel, t)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Time-indexed exact states plus the true (initial) IMU bias."""

    times: np.ndarray
    states: tuple
    bias: BiasState

    def state_at(self, t: float) -> TotalState:
        k = int(np.argmin(np.abs(self.times - t)))
        return self.states[k]

    def trajectory(self) -> "Trajectory":
        pos = np.stack([s.pose.translation for s in self.states])
        quat = np.stack([s.pose.rotation.as_quat() for s in self.states])
        vel = np.stack([s.vel for s in self.states])
        return Trajectory(self.times.copy(), pos, quat, vel)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled trajectory: times, positions, optional quaternions/velocities."""

    times: np.ndarray
    positions: np.ndarray
    quats: np.ndarray | None = None
    velocities: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "times", np.asarray(self.times, float).reshape(-1))
        object.__setattr__(self, "positions",
                           np.asarray(self.positions, float).reshape(-1, 3))


def _spawn_landmarks(cfg: ScenarioConfig, rng: np.random.Generator,
                     path_positions: np.ndarray) -> np.ndarray:
    low = np.asarray(cfg.spawn_center) - np.asarray(cfg.spawn_half)
    high = np.asarray(cfg.spawn_center) + np.asarray(cfg.spawn_half)
    points = np.empty((cfg.n_landmarks, 3))
    for k in range(cfg.n_landmarks):
        for _ in range(1000):
            cand = rng.uniform(low, high)
            if np.min(np.linalg.norm(path_positions - cand, axis=1)) > cfg.min_depth:
                points[k] = cand
                break
        else:
            raise GenerationError("could not place landmarks clear of the trajectory")
    return points


def _perturb_bearing(y: np.ndarray, angle_std: float,
                     rng: np.random.Generator) -> np.ndarray:
    """Rotate y about a random tangent-plane axis; stays exactly on S^2."""
    basis = tangent_basis(y)
    phi = rng.uniform(0.0, 2.0 * math.pi)
    axis = basis @ np.array([math.cos(phi), math.sin(phi)])
    angle = angle_std * rng.standard_normal()
    return Rot3.exp(angle * axis).act(y)


def generate_scenario(cfg: ScenarioConfig, t_cam: Pose | None = None):
    """Build (GroundTruth, imu stream, measurement stream) for a scenario.

    Deterministic for a fixed seed.  Raises GenerationError when the
    trajectory passes too close to a landmark.
    """
    t_cam = t_cam if t_cam is not None else Pose.identity()
    rng = np.random.default_rng(cfg.seed)
    path = _Path(cfg)

    n_imu = int(round(cfg.duration * cfg.imu_rate))
    imu_times = np.arange(n_imu + 1) / cfg.imu_rate
    n_cam = int(round(cfg.duration * cfg.cam_rate))
    cam_times = np.arange(n_cam + 1) / cfg.cam_rate

    cam_positions = np.stack([
        (path.state(t, (), np.zeros((0, 3))).pose @ t_cam).translation
        for t in imu_times])
    points = _spawn_landmarks(cfg, rng, cam_positions)
    ids = tuple(range(cfg.n_landmarks))

    states = tuple(path.state(t, ids, points) for t in imu_times)
    for s in states:
        if np.min(s.depths(t_cam)) <= cfg.min_depth:
            raise GenerationError("trajectory intersects the exception set")

    bias0 = BiasState(np.asarray(cfg.gyro_bias, float),
                      np.asarray(cfg.accel_bias, float))
    b_omega = bias0.b_omega.copy()
    b_accel = bias0.b_accel.copy()
    dt = 1.0 / cfg.imu_rate
    imu_stream = []
    for t in imu_times:
        ideal = path.imu(t)
        omega = ideal.omega + b_omega + cfg.gyro_noise * rng.standard_normal(3)
        accel = ideal.accel + b_accel + cfg.accel_noise * rng.standard_normal(3)
        imu_stream.append(ImuInput(omega, accel, float(t)))
        if cfg.bias_rw > 0.0:
            b_omega = b_omega + cfg.bias_rw * math.sqrt(dt) * rng.standard_normal(3)
            b_accel = b_accel + cfg.bias_rw * math.sqrt(dt) * rng.standard_normal(3)

    measurement_stream = []
    for t in cam_times:
        bearings = measure(path.state(float(t), ids, points), t_cam)
        units = bearings.units
        if cfg.bearing_noise > 0.0:
            units = np.stack([_perturb_bearing(y, cfg.bearing_noise, rng)
                              for y in units])
        measurement_stream.append(
            MeasurementBatch(float(t), BearingSet(bearings.ids, units)))

    truth = GroundTruth(imu_times, states, bias0)
    return truth, imu_stream, measurement_stream


# ---------------------------------------------------------------------------
# Gauge-aligned evaluation
# ---------------------------------------------------------------------------

MATCH_TOLERANCE = 0.005  # seconds; half a 100 Hz frame period


@dataclass(frozen=True, eq=False)
class AlignmentResult:
    gauge: GaugeElement
    times: np.ndarray
    aligned: np.ndarray        # estimate positions after gauge alignment
    truth: np.ndarray          # matched truth positions
    degenerate: bool


def match_times(est_times, truth_times, tol: float = MATCH_TOLERANCE):
    """Nearest-neighbour index pairs (est_idx, truth_idx) within tol seconds."""
    est_times = np.asarray(est_times, float)
    truth_times = np.asarray(truth_times, float)
    order = np.argsort(truth_times)
    sorted_truth = truth_times[order]
    pos = np.searchsorted(sorted_truth, est_times)
    pairs = []
    for i, p in enumerate(pos):
        cands = [c for c in (p - 1, p) if 0 <= c < sorted_truth.size]
        best = min(cands, key=lambda c: abs(sorted_truth[c] - est_times[i]))
        if abs(sorted_truth[best] - est_times[i]) <= tol:
            pairs.append((i, int(order[best])))
    return pairs


def align_gauge(estimate: Trajectory, truth: Trajectory,
                tol: float = MATCH_TOLERANCE) -> AlignmentResult:
    """Yaw-translation alignment of an estimate onto the truth positions.

    Minimises the summed squared position error over the gauge group: yaw by
    a 2D Procrustes fit on centred horizontal coordinates, translation from
    the centroids.  Vertically colinear geometry leaves the yaw indeterminate
    and is flagged degenerate (yaw 0 is returned).
    """
    pairs = match_times(estimate.times, truth.times, tol)
    if not pairs:
        raise ValueError("no temporally overlapping samples to align")
    ei = [i for i, _ in pairs]
    ti = [j for _, j in pairs]
    est = estimate.positions[ei]
    tru = truth.positions[ti]

    est_c = est - est.mean(axis=0)
    tru_c = tru - tru.mean(axis=0)
    cross = float(np.sum(est_c[:, 0] * tru_c[:, 1] - est_c[:, 1] * tru_c[:, 0]))
    dot = float(np.sum(est_c[:, 0] * tru_c[:, 0] + est_c[:, 1] * tru_c[:, 1]))
    scale = np.sum(est_c[:, :2] ** 2) * np.sum(tru_c[:, :2] ** 2)
    degenerate = math.hypot(cross, dot) < 1e-12 * max(1.0, math.sqrt(scale))
    yaw = 0.0 if degenerate else math.atan2(cross, dot)
    rot = yaw_rotation(yaw)
    translation = tru.mean(axis=0) - rot.act(est.mean(axis=0))
    gauge = GaugeElement(yaw, translation)
    aligned = gauge.act(est)
    return AlignmentResult(gauge, estimate.times[ei], aligned, tru, degenerate)


def rmse_positions(a: np.ndarray, b: np.ndarray) -> float:
    """Root-mean-square distance between matched position arrays, metres."""
    a = np.asarray(a, float).reshape(-1, 3)
    b = np.asarray(b, float).reshape(-1, 3)
    if a.shape != b.shape or a.shape[0] == 0:
        raise ValueError("position arrays must match and be non-empty")
    return float(np.sqrt(np.mean(np.sum((a - b) ** 2, axis=1))))


def aligned_rmse(estimate: Trajectory, truth: Trajectory,
                 tol: float = MATCH_TOLERANCE) -> float:
    """Gauge-aligned position RMSE between two trajectories."""
    res = align_gauge(estimate, truth, tol)
    return rmse_positions(res.aligned, res.truth)


def gauge_transform_trajectory(gauge: GaugeElement, traj: Trajectory) -> Trajectory:
    """Apply a change of inertial frame to a sampled trajectory."""
    embed = gauge.inverse().embed()
    pos = embed.act(traj.positions)
    quats = None
    if traj.quats is not None:
        quats = np.stack([
            (embed.rotation @ Rot3.from_quat(q)).as_quat() for q in traj.quats])
    return Trajectory(traj.times.copy(), pos, quats, traj.velocities)
