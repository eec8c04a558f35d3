"""Matrix Lie groups used by the filter.

Conventions:
- Rotations R map body-frame vectors to inertial-frame vectors.
- Poses P = (R, x) act on points by P(q) = R q + x.
- SE(3) body tangents U = (omega, v) satisfy Pdot = P * hat(U), i.e.
  Rdot = R omega^x and xdot = R v.
- The extended pose group SE2(3) has elements (A, w) with product
  (A1, w1) * (A2, w2) = (A1 A2, w1 + R_{A1} w2).
- Scaled rotations Q = (R, c) with c > 0 act linearly by Q(q) = c R q.
- The gauge group is the yaw-translation subgroup of SE(3): elements
  (theta, x) with R e3 = e3 for the embedded rotation.

All types are immutable values; operations return new objects.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

# Taylor fallback for exp/log coefficients below this rotation angle.
SMALL_ANGLE = 1e-6

# Rotation angles closer to pi than this trigger a precision warning in log.
PI_ANGLE_GUARD = 1e-6

_E3 = np.array([0.0, 0.0, 1.0])

# Compositions between renormalisations of the rotation matrix.  The default
# renormalises on every composition, which keeps orthogonality drift below
# 1e-15 over arbitrarily long filter runs.
_renorm_interval = 1


class LogPrecisionWarning(RuntimeWarning):
    """Rotation logarithm evaluated near the angle-pi singularity."""


def set_renormalization_interval(interval: int) -> None:
    """Set how many compositions may elapse before re-orthonormalising."""
    global _renorm_interval
    if interval < 1:
        raise ValueError("renormalization interval must be >= 1")
    _renorm_interval = interval


def skew(w) -> np.ndarray:
    """Skew-symmetric matrix of a 3-vector: skew(w) @ p == cross(w, p)."""
    w = np.asarray(w, dtype=float).reshape(3)
    return np.array([
        [0.0, -w[2], w[1]],
        [w[2], 0.0, -w[0]],
        [-w[1], w[0], 0.0],
    ])


def skew_stack(w: np.ndarray) -> np.ndarray:
    """Stack of skew matrices, (n, 3) -> (n, 3, 3)."""
    w = np.asarray(w, dtype=float).reshape(-1, 3)
    out = np.zeros((w.shape[0], 3, 3))
    out[:, 0, 1] = -w[:, 2]
    out[:, 0, 2] = w[:, 1]
    out[:, 1, 0] = w[:, 2]
    out[:, 1, 2] = -w[:, 0]
    out[:, 2, 0] = -w[:, 1]
    out[:, 2, 1] = w[:, 0]
    return out


def unskew(m) -> np.ndarray:
    """Inverse of skew on antisymmetric matrices (vee operator)."""
    m = np.asarray(m, dtype=float)
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def _orthonormalize(m: np.ndarray) -> np.ndarray:
    # One symmetric Newton step; quadratic convergence for near-orthonormal m.
    return m @ (1.5 * np.eye(3) - 0.5 * (m.T @ m))


def so3_exp_matrix(w) -> np.ndarray:
    """Rodrigues formula; Taylor coefficients below SMALL_ANGLE."""
    w = np.asarray(w, dtype=float).reshape(3)
    theta = float(np.linalg.norm(w))
    wx = skew(w)
    if theta < SMALL_ANGLE:
        a = 1.0 - theta**2 / 6.0
        b = 0.5 - theta**2 / 24.0
    else:
        a = math.sin(theta) / theta
        b = (1.0 - math.cos(theta)) / theta**2
    return np.eye(3) + a * wx + b * (wx @ wx)


def so3_exp_stack(w: np.ndarray) -> np.ndarray:
    """Vectorised Rodrigues formula for an (n, 3) stack of rotation vectors."""
    w = np.asarray(w, dtype=float).reshape(-1, 3)
    theta = np.linalg.norm(w, axis=1)
    wx = skew_stack(w)
    small = theta < SMALL_ANGLE
    t2 = theta**2
    with np.errstate(invalid="ignore", divide="ignore"):
        a = np.where(small, 1.0 - t2 / 6.0, np.sin(theta) / np.where(small, 1.0, theta))
        b = np.where(small, 0.5 - t2 / 24.0, (1.0 - np.cos(theta)) / np.where(small, 1.0, t2))
    return np.eye(3) + a[:, None, None] * wx + b[:, None, None] * (wx @ wx)


def so3_log_matrix(m: np.ndarray) -> np.ndarray:
    """Rotation vector of a rotation matrix; warns near the pi singularity."""
    m = np.asarray(m, dtype=float)
    cos_angle = min(1.0, max(-1.0, 0.5 * (np.trace(m) - 1.0)))
    theta = math.acos(cos_angle)
    if theta < SMALL_ANGLE:
        return unskew(0.5 * (m - m.T)) * (1.0 + theta**2 / 6.0)
    if math.pi - theta < PI_ANGLE_GUARD:
        warnings.warn(
            "rotation logarithm near angle pi; axis is ill-conditioned",
            LogPrecisionWarning,
            stacklevel=2,
        )
        # Axis from the dominant diagonal of (m + I)/2 = axis axis^T near pi.
        diag = np.diag(m)
        k = int(np.argmax(diag))
        axis = np.empty(3)
        axis[k] = math.sqrt(max(0.0, (diag[k] + 1.0) * 0.5))
        for j in range(3):
            if j != k:
                axis[j] = (m[k, j] + m[j, k]) / (4.0 * axis[k])
        axis /= np.linalg.norm(axis)
        # Sign of the axis from the antisymmetric part where possible.
        w = unskew(0.5 * (m - m.T))
        if np.dot(w, axis) < 0.0:
            axis = -axis
        return axis * theta
    return unskew(m - m.T) * (theta / (2.0 * math.sin(theta)))


# The Jacobian coefficients cancel much more harshly than the Rodrigues
# ones: (theta - sin)/theta^3 and (1 - (theta/2) cot(theta/2))/theta^2 lose
# ~1e-5 absolute accuracy already at theta ~ 1e-6, so the Taylor branch
# extends to 1e-2 with enough terms to stay below 1e-15 there.
_JACOBIAN_SMALL_ANGLE = 1e-2


def so3_left_jacobian(w) -> np.ndarray:
    """Left Jacobian of SO(3): J(w) = int_0^1 exp(s w^x) ds."""
    w = np.asarray(w, dtype=float).reshape(3)
    theta = float(np.linalg.norm(w))
    wx = skew(w)
    if theta < _JACOBIAN_SMALL_ANGLE:
        t2 = theta**2
        a = 0.5 - t2 / 24.0 + t2 * t2 / 720.0
        b = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
    else:
        a = (1.0 - math.cos(theta)) / theta**2
        b = (theta - math.sin(theta)) / theta**3
    return np.eye(3) + a * wx + b * (wx @ wx)


def so3_left_jacobian_inv(w) -> np.ndarray:
    w = np.asarray(w, dtype=float).reshape(3)
    theta = float(np.linalg.norm(w))
    wx = skew(w)
    if theta < _JACOBIAN_SMALL_ANGLE:
        t2 = theta**2
        b = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    else:
        b = (1.0 - 0.5 * theta * math.sin(theta) / (1.0 - math.cos(theta))) / theta**2
    return np.eye(3) - 0.5 * wx + b * (wx @ wx)


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Rot3:
    """Element of SO(3) stored as a 3x3 orthonormal matrix."""

    matrix: np.ndarray
    _chain: int = field(default=0, repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (3, 3):
            raise ValueError(f"rotation matrix must be 3x3, got {m.shape}")
        err = np.abs(m @ m.T - np.eye(3)).max()
        det = (m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
               - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
               + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0]))
        if err > 1e-6 or det < 0.0:
            raise ValueError("matrix is not a rotation (orthogonality or det failure)")
        object.__setattr__(self, "matrix", _freeze(m))

    @staticmethod
    def identity() -> "Rot3":
        return Rot3(np.eye(3))

    @staticmethod
    def exp(w) -> "Rot3":
        return Rot3(so3_exp_matrix(w))

    @staticmethod
    def from_quat(q) -> "Rot3":
        """Unit quaternion (w, x, y, z), Hamilton convention."""
        q = np.asarray(q, dtype=float).reshape(4)
        q = q / np.linalg.norm(q)
        w, x, y, z = q
        return Rot3(np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]))

    @staticmethod
    def random(rng: np.random.Generator) -> "Rot3":
        q = rng.standard_normal(4)
        return Rot3.from_quat(q / np.linalg.norm(q))

    def as_quat(self) -> np.ndarray:
        """Unit quaternion (w, x, y, z) with non-negative scalar part."""
        m = self.matrix
        t = np.trace(m)
        if t > 0.0:
            s = math.sqrt(t + 1.0) * 2.0
            q = np.array([0.25 * s, (m[2, 1] - m[1, 2]) / s,
                          (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s])
        else:
            k = int(np.argmax(np.diag(m)))
            i, j = (k + 1) % 3, (k + 2) % 3
            s = math.sqrt(max(0.0, 1.0 + m[k, k] - m[i, i] - m[j, j])) * 2.0
            q = np.empty(4)
            q[0] = (m[j, i] - m[i, j]) / s
            q[1 + k] = 0.25 * s
            q[1 + i] = (m[i, k] + m[k, i]) / s
            q[1 + j] = (m[j, k] + m[k, j]) / s
        if q[0] < 0.0:
            q = -q
        return q / np.linalg.norm(q)

    def compose(self, other: "Rot3") -> "Rot3":
        chain = self._chain + other._chain + 1
        m = self.matrix @ other.matrix
        if chain >= _renorm_interval:
            m = _orthonormalize(m)
            chain = 0
        return Rot3(m, _chain=chain)

    def __matmul__(self, other: "Rot3") -> "Rot3":
        return self.compose(other)

    def inverse(self) -> "Rot3":
        return Rot3(self.matrix.T, _chain=self._chain)

    def act(self, v) -> np.ndarray:
        """Rotate 3-vectors; accepts a single vector or an (n, 3) stack."""
        v = np.asarray(v, dtype=float)
        return v @ self.matrix.T

    def log(self) -> np.ndarray:
        return so3_log_matrix(self.matrix)

    def yaw(self) -> float:
        """Heading angle of the rotated e1 axis in the horizontal plane."""
        c1 = self.matrix[:, 0]
        return math.atan2(c1[1], c1[0])


def yaw_rotation(theta: float) -> Rot3:
    """Anti-clockwise rotation about e3; satisfies R @ e3 == e3 exactly."""
    c, s = math.cos(theta), math.sin(theta)
    return Rot3(np.array([
        [c, -s, 0.0],
        [s, c, 0.0],
        [0.0, 0.0, 1.0],
    ]))


@dataclass(frozen=True, eq=False)
class Se3Tangent:
    """Body-frame se(3) tangent (omega, v): Pdot = P hat(omega, v)."""

    angular: np.ndarray
    linear: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "angular", _freeze(np.reshape(self.angular, 3)))
        object.__setattr__(self, "linear", _freeze(np.reshape(self.linear, 3)))

    @staticmethod
    def from_vector(v) -> "Se3Tangent":
        v = np.asarray(v, dtype=float).reshape(6)
        return Se3Tangent(v[:3], v[3:])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.angular, self.linear])

    def hat(self) -> np.ndarray:
        m = np.zeros((4, 4))
        m[:3, :3] = skew(self.angular)
        m[:3, 3] = self.linear
        return m


@dataclass(frozen=True, eq=False)
class Pose:
    """Element of SE(3): rotation plus translation, acting affinely on points."""

    rotation: Rot3
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "translation", _freeze(np.reshape(self.translation, 3)))

    @staticmethod
    def identity() -> "Pose":
        return Pose(Rot3.identity(), np.zeros(3))

    @staticmethod
    def exp(tangent) -> "Pose":
        if isinstance(tangent, Se3Tangent):
            w, v = tangent.angular, tangent.linear
        else:
            t = np.asarray(tangent, dtype=float).reshape(6)
            w, v = t[:3], t[3:]
        return Pose(Rot3.exp(w), so3_left_jacobian(w) @ v)

    @staticmethod
    def random(rng: np.random.Generator, radius: float = 1.0) -> "Pose":
        return Pose(Rot3.random(rng), radius * rng.standard_normal(3))

    def log(self) -> Se3Tangent:
        w = self.rotation.log()
        return Se3Tangent(w, so3_left_jacobian_inv(w) @ self.translation)

    def compose(self, other: "Pose") -> "Pose":
        return Pose(self.rotation @ other.rotation,
                    self.rotation.act(other.translation) + self.translation)

    def __matmul__(self, other: "Pose") -> "Pose":
        return self.compose(other)

    def inverse(self) -> "Pose":
        rinv = self.rotation.inverse()
        return Pose(rinv, -rinv.act(self.translation))

    def act(self, p) -> np.ndarray:
        """Apply to points; accepts a single 3-vector or an (n, 3) stack."""
        p = np.asarray(p, dtype=float)
        return p @ self.rotation.matrix.T + self.translation

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation.matrix
        m[:3, 3] = self.translation
        return m

    def adjoint_matrix(self) -> np.ndarray:
        """6x6 adjoint acting on stacked (omega, v) tangents."""
        r = self.rotation.matrix
        ad = np.zeros((6, 6))
        ad[:3, :3] = r
        ad[3:, :3] = skew(self.translation) @ r
        ad[3:, 3:] = r
        return ad


def adjoint_se3(pose: Pose, tangent: Se3Tangent) -> Se3Tangent:
    """Adjoint action Ad_P(omega, v) = (R omega, R v + x x (R omega))."""
    r_omega = pose.rotation.act(tangent.angular)
    return Se3Tangent(r_omega,
                      pose.rotation.act(tangent.linear) + np.cross(pose.translation, r_omega))


def adjoint_inv_se3(pose: Pose, tangent: Se3Tangent) -> Se3Tangent:
    """Ad_P^{-1}, implemented as the adjoint of the inverse pose."""
    return adjoint_se3(pose.inverse(), tangent)


@dataclass(frozen=True, eq=False)
class ExtPose:
    """Element (A, w) of SE2(3): a pose with an auxiliary 3-vector."""

    pose: Pose
    aux: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "aux", _freeze(np.reshape(self.aux, 3)))

    @staticmethod
    def identity() -> "ExtPose":
        return ExtPose(Pose.identity(), np.zeros(3))

    @staticmethod
    def random(rng: np.random.Generator, radius: float = 1.0) -> "ExtPose":
        return ExtPose(Pose.random(rng, radius), radius * rng.standard_normal(3))

    def compose(self, other: "ExtPose") -> "ExtPose":
        return ExtPose(self.pose @ other.pose,
                       self.aux + self.pose.rotation.act(other.aux))

    def __matmul__(self, other: "ExtPose") -> "ExtPose":
        return self.compose(other)

    def inverse(self) -> "ExtPose":
        # The group axioms force the aux part to -R_A^T w (the published
        # closed form drops the transpose; compose(g, inverse(g)) decides).
        return ExtPose(self.pose.inverse(),
                       -self.pose.rotation.inverse().act(self.aux))


@dataclass(frozen=True, eq=False)
class ScaledRot:
    """Element of SOT(3): rotation and a positive scale, acting by c R q."""

    rotation: Rot3
    scale: float = 1.0

    def __post_init__(self):
        s = float(self.scale)
        if not (s > 0.0 and math.isfinite(s)):
            raise ValueError(f"scale must be strictly positive, got {s}")
        object.__setattr__(self, "scale", s)

    @staticmethod
    def identity() -> "ScaledRot":
        return ScaledRot(Rot3.identity(), 1.0)

    @staticmethod
    def exp(w, alpha: float) -> "ScaledRot":
        return ScaledRot(Rot3.exp(w), math.exp(alpha))

    @staticmethod
    def random(rng: np.random.Generator, log_scale: float = 0.5) -> "ScaledRot":
        return ScaledRot(Rot3.random(rng), math.exp(log_scale * rng.standard_normal()))

    def log(self) -> tuple[np.ndarray, float]:
        return self.rotation.log(), math.log(self.scale)

    def compose(self, other: "ScaledRot") -> "ScaledRot":
        return ScaledRot(self.rotation @ other.rotation, self.scale * other.scale)

    def __matmul__(self, other: "ScaledRot") -> "ScaledRot":
        return self.compose(other)

    def inverse(self) -> "ScaledRot":
        return ScaledRot(self.rotation.inverse(), 1.0 / self.scale)

    def act(self, v) -> np.ndarray:
        return self.scale * self.rotation.act(v)

    def matrix(self) -> np.ndarray:
        return self.scale * self.rotation.matrix


def _wrap_angle(theta: float) -> float:
    wrapped = math.remainder(theta, 2.0 * math.pi)
    return wrapped


@dataclass(frozen=True, eq=False)
class GaugeElement:
    """Yaw-translation change of inertial frame; preserves the gravity axis."""

    yaw: float
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "yaw", _wrap_angle(float(self.yaw)))
        object.__setattr__(self, "translation", _freeze(np.reshape(self.translation, 3)))

    @staticmethod
    def identity() -> "GaugeElement":
        return GaugeElement(0.0, np.zeros(3))

    @staticmethod
    def random(rng: np.random.Generator, radius: float = 1.0) -> "GaugeElement":
        return GaugeElement(rng.uniform(-math.pi, math.pi),
                            radius * rng.standard_normal(3))

    def compose(self, other: "GaugeElement") -> "GaugeElement":
        return GaugeElement(self.yaw + other.yaw,
                            self.translation + yaw_rotation(self.yaw).act(other.translation))

    def __matmul__(self, other: "GaugeElement") -> "GaugeElement":
        return self.compose(other)

    def inverse(self) -> "GaugeElement":
        # Derived from the group axioms: (theta, x)^{-1} = (-theta, -R(-theta) x).
        # The published closed form uses R(+theta); it fails compose(g, g^-1) = id.
        return GaugeElement(-self.yaw, -yaw_rotation(-self.yaw).act(self.translation))

    def embed(self) -> Pose:
        """Group embedding into SE(3); a homomorphism onto the e3-fixing subgroup."""
        return Pose(yaw_rotation(self.yaw), self.translation)

    def act(self, p) -> np.ndarray:
        return self.embed().act(p)
