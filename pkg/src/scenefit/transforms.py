"""Quaternion algebra and Sim(3) similarity transforms.

Quaternions are float64 arrays [w, x, y, z] and are kept unit-norm by every
constructor and composition helper. q and -q denote the same rotation; all
comparisons here are sign-insensitive.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError

QUAT_IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])

_UNIT_TOL = 1e-9


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q)
    if n == 0.0:
        raise DegenerateInputError("cannot normalize zero quaternion")
    return q / n


def quat_mul(a, b) -> np.ndarray:
    """Hamilton product a*b: rotating by the result applies b first, then a."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    out = np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )
    return quat_normalize(out)


def quat_conj(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = quat_normalize(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_from_matrix(m) -> np.ndarray:
    """Unit quaternion from a proper rotation matrix (Shepperd's method)."""
    m = np.asarray(m, dtype=np.float64)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2
        q = np.array(
            [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        )
    elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
        s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
        q = np.array(
            [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
        )
    elif m[1, 1] >= m[2, 2]:
        s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
        q = np.array(
            [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
        )
    else:
        s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
        q = np.array(
            [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
        )
    if q[0] < 0:
        q = -q
    return quat_normalize(q)


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    n = np.linalg.norm(axis)
    if n == 0.0:
        if angle == 0.0:
            return QUAT_IDENTITY.copy()
        raise DegenerateInputError("zero axis with nonzero angle")
    h = 0.5 * angle
    return quat_normalize(np.concatenate([[np.cos(h)], np.sin(h) * axis / n]))


def quat_from_rotvec(r) -> np.ndarray:
    """Quaternion for the axis-angle vector r (angle = |r|)."""
    r = np.asarray(r, dtype=np.float64)
    angle = np.linalg.norm(r)
    if angle < 1e-300:
        return QUAT_IDENTITY.copy()
    return quat_from_axis_angle(r, angle)


def quat_angle(q) -> float:
    """Rotation angle in [0, pi], sign-insensitive in q."""
    q = quat_normalize(q)
    return 2.0 * np.arctan2(np.linalg.norm(q[1:]), abs(q[0]))


def quat_rotate(q, pts) -> np.ndarray:
    pts = np.asarray(pts, dtype=np.float64)
    return pts @ quat_to_matrix(q).T


def quat_log(q) -> np.ndarray:
    """Half-angle log map: returns (theta/2) * axis, so ||log q|| = theta/2.

    The sign of q is canonicalized first (w >= 0), making q and -q equivalent.
    """
    q = quat_normalize(q)
    if q[0] < 0:
        q = -q
    vn = np.linalg.norm(q[1:])
    if vn < 1e-300:
        return np.zeros(3)
    half = np.arctan2(vn, q[0])
    return q[1:] * (half / vn)


def quat_slerp(q0, q1, t: float) -> np.ndarray:
    """Geodesic interpolation between two unit quaternions (shortest arc)."""
    q0 = quat_normalize(q0)
    q1 = quat_normalize(q1)
    dot = float(np.dot(q0, q1))
    if dot < 0.0:
        q1 = -q1
        dot = -dot
    if dot > 0.9995:
        # nearly parallel: lerp + renormalize avoids the sin(0)/sin(0) blowup
        return quat_normalize(q0 + t * (q1 - q0))
    theta = np.arccos(np.clip(dot, -1.0, 1.0))
    s = np.sin(theta)
    return quat_normalize((np.sin((1 - t) * theta) / s) * q0 + (np.sin(t * theta) / s) * q1)


def quat_angle_between(qa, qb) -> float:
    """Relative rotation angle between two rotations, in [0, pi]."""
    return quat_angle(quat_mul(quat_conj(qa), qb))


def rotvec_to_matrix(r) -> np.ndarray:
    """Rodrigues formula for the axis-angle vector r."""
    r = np.asarray(r, dtype=np.float64)
    theta = np.linalg.norm(r)
    K = skew(r)
    if theta < 1e-12:
        # second-order series; exact enough below the sqrt(eps) scale
        return np.eye(3) + K + 0.5 * (K @ K)
    K = K / theta
    return np.eye(3) + np.sin(theta) * K + (1.0 - np.cos(theta)) * (K @ K)


def matrix_to_rotvec(m) -> np.ndarray:
    q = quat_from_matrix(m)
    return 2.0 * quat_log(q)


def skew(v) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def so3_left_jacobian(r) -> np.ndarray:
    """Left Jacobian of SO(3): exp((r + d)^) ~= exp((J_l(r) d)^) exp(r^)."""
    r = np.asarray(r, dtype=np.float64)
    theta = np.linalg.norm(r)
    K = skew(r)
    if theta < 1e-6:
        return np.eye(3) + 0.5 * K + (K @ K) / 6.0
    t2 = theta * theta
    return (
        np.eye(3)
        + ((1.0 - np.cos(theta)) / t2) * K
        + ((theta - np.sin(theta)) / (t2 * theta)) * (K @ K)
    )


@dataclass(frozen=True)
class Sim3Transform:
    """Similarity transform p -> scale * R(rotation) p + translation."""

    scale: float = 1.0
    rotation: np.ndarray = field(default_factory=lambda: QUAT_IDENTITY.copy())
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if not self.scale > 0:
            raise DegenerateInputError(f"Sim(3) scale must be positive, got {self.scale}")
        object.__setattr__(self, "rotation", quat_normalize(self.rotation))
        object.__setattr__(
            self, "translation", np.asarray(self.translation, dtype=np.float64).reshape(3)
        )

    def apply(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        return self.scale * (pts @ quat_to_matrix(self.rotation).T) + self.translation

    def compose(self, other: "Sim3Transform") -> "Sim3Transform":
        """Transform equivalent to applying `other` first, then self."""
        return Sim3Transform(
            scale=self.scale * other.scale,
            rotation=quat_mul(self.rotation, other.rotation),
            translation=self.scale * quat_rotate(self.rotation, other.translation)
            + self.translation,
        )

    def inverse(self) -> "Sim3Transform":
        rinv = quat_conj(self.rotation)
        return Sim3Transform(
            scale=1.0 / self.scale,
            rotation=rinv,
            translation=-quat_rotate(rinv, self.translation) / self.scale,
        )

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.rotation)

    def to_dict(self) -> dict:
        return {
            "s": float(self.scale),
            "q": [float(v) for v in self.rotation],
            "t": [float(v) for v in self.translation],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Sim3Transform":
        return cls(scale=float(d["s"]), rotation=np.asarray(d["q"]), translation=np.asarray(d["t"]))

    @classmethod
    def identity(cls) -> "Sim3Transform":
        return cls()
