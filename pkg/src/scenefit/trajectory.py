"""Camera trajectory synthesis: key-view selection, geodesic densification
under an angular-density budget, and the spherical sampling / pair filtering
used for dataset-style view generation.

Angular density rho of a pose sequence is the mean quaternion-log magnitude
of consecutive increments. The log here is the half-angle convention
(||log q|| = theta / 2); insertion counts and the density bound use the same
convention throughout.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .camera import CameraView, look_at
from .errors import ConfigError, DegenerateInputError
from .transforms import (
    quat_angle,
    quat_conj,
    quat_log,
    quat_mul,
    quat_slerp,
    quat_to_matrix,
)

logger = logging.getLogger(__name__)

_BOUNDARY_EPS = 1e-12  # guards ceil() against exact-boundary float noise


def angular_density(quats) -> float:
    """Mean per-step rotation magnitude, half-angle convention.

    Args:
        quats: ordered (N, 4) array or sequence of unit quaternions, N >= 2.

    Returns:
        (1/(N-1)) * sum ||log(q_t^-1 q_{t+1})||, which for a step of full
        rotation angle theta contributes theta/2. Sign-insensitive in each
        quaternion.
    """
    quats = np.atleast_2d(np.asarray(quats, dtype=np.float64))
    if len(quats) < 2:
        raise DegenerateInputError("angular density needs at least 2 poses")
    steps = [
        np.linalg.norm(quat_log(quat_mul(quat_conj(quats[i]), quats[i + 1])))
        for i in range(len(quats) - 1)
    ]
    return float(np.mean(steps))


@dataclass(frozen=True)
class Trajectory:
    """Ordered camera sequence with its angular density and key-view indices."""

    views: list
    rho: float
    key_indices: list = field(default_factory=list)

    def quaternions(self) -> np.ndarray:
        return np.stack([v.q for v in self.views])

    def __len__(self) -> int:
        return len(self.views)


@dataclass(frozen=True)
class SphericalSamplingSpec:
    """Stratified theta x phi sphere sampling around a center point."""

    radius: float
    theta_count: int
    phi_count: int
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    budget: int | None = None
    fx: float = 500.0
    fy: float = 500.0
    width: int = 512
    height: int = 512

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64).reshape(3))
        if self.radius <= 0:
            raise ConfigError("sampling radius must be positive")
        if self.theta_count < 1 or self.phi_count < 1:
            raise ConfigError("grid counts must be at least 1")
        total = self.theta_count * self.phi_count
        if self.budget is None:
            object.__setattr__(self, "budget", total)
        elif self.budget != total:
            raise ConfigError(
                f"view budget {self.budget} != theta_count*phi_count = {total}"
            )


def sample_sphere(spec: SphericalSamplingSpec) -> list[CameraView]:
    """Cameras on the sphere looking at the center, exactly budget many.

    Colatitude rows start at the +z pole (theta_i = i*pi/theta_count), so a
    1x1 grid degenerates to the single pole view; azimuth varies the camera
    roll there through the look-at up fallback.
    """
    views = []
    for i in range(spec.theta_count):
        theta = i * np.pi / spec.theta_count
        for j in range(spec.phi_count):
            phi = 2.0 * np.pi * j / spec.phi_count
            direction = np.array(
                [np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)]
            )
            eye = spec.center + spec.radius * direction
            up = (0.0, 0.0, 1.0)
            if np.sin(theta) < 1e-12:
                # pole view: recover a well-defined frame, rolled by phi
                up = (np.cos(phi), np.sin(phi), 0.0)
            views.append(
                look_at(
                    eye,
                    spec.center,
                    fx=spec.fx,
                    fy=spec.fy,
                    cx=spec.width / 2,
                    cy=spec.height / 2,
                    width=spec.width,
                    height=spec.height,
                    up=up,
                )
            )
    return views


def _azimuth(center: np.ndarray, scene_center: np.ndarray) -> float:
    d = center - scene_center
    return float(np.arctan2(d[1], d[0]))


def select_key_views(views, scene_center, count: int, min_separation_deg: float | None = None):
    """Greedy sparse key-view pick by local density and center proximity.

    Score is (local kNN density of camera centers) / (1 + distance to the
    scene center); candidates are visited in a canonical order (score
    descending, then azimuth, then position) so the result is invariant to
    input permutation, and accepted only when at least
    `min_separation_deg` of relative rotation separates them from every
    earlier pick. If the separation constraint starves the selection, the
    remaining slots are filled in canonical order regardless of separation.
    The result is ordered by azimuth around the scene center for a
    continuous sweep.

    Args:
        min_separation_deg: defaults to 0.9 * (360 / count).
    """
    views = list(views)
    n = len(views)
    if count > n:
        raise ConfigError(f"requested {count} key views from only {n}")
    if count == 0:
        return []
    scene_center = np.asarray(scene_center, dtype=np.float64)
    if min_separation_deg is None:
        min_separation_deg = 0.9 * 360.0 / count
    min_sep = np.deg2rad(min_separation_deg)

    centers = np.stack([v.center() for v in views])
    k_density = min(5, n - 1)
    if k_density >= 1:
        tree = cKDTree(centers)
        dists, _ = tree.query(centers, k=k_density + 1)
        mean_nn = dists[:, 1:].mean(axis=1)
    else:
        mean_nn = np.zeros(n)
    density = 1.0 / (1e-12 + mean_nn)
    dist_center = np.linalg.norm(centers - scene_center, axis=1)
    scores = density / (1.0 + dist_center)

    order = sorted(
        range(n),
        key=lambda i: (-scores[i], _azimuth(centers[i], scene_center), *centers[i]),
    )
    chosen: list[int] = []
    for i in order:
        if len(chosen) == count:
            break
        ok = all(
            quat_angle(quat_mul(quat_conj(views[j].q), views[i].q)) >= min_sep for j in chosen
        )
        if ok:
            chosen.append(i)
    if len(chosen) < count:
        for i in order:
            if len(chosen) == count:
                break
            if i not in chosen:
                chosen.append(i)
    chosen.sort(key=lambda i: _azimuth(centers[i], scene_center))
    return [views[i] for i in chosen]


def densify_trajectory(keys, rho_max: float) -> Trajectory:
    """Insert geodesic in-between views until the density bound holds.

    Between consecutive keys with relative rotation angle theta,
    ceil(theta / (2 rho_max)) - 1 views are inserted: rotations by SLERP,
    camera centers by linear interpolation, intrinsics carried over from
    the segment's first key. Every individual step then subtends at most
    2 * rho_max of rotation, so the half-angle density is at most rho_max.
    Re-densifying a compliant trajectory inserts nothing.
    """
    keys = list(keys)
    if len(keys) < 2:
        raise DegenerateInputError("densification needs at least 2 key views")
    if not rho_max > 0:
        raise ConfigError("rho_max must be positive")

    out = [keys[0]]
    key_indices = [0]
    for a, b in zip(keys, keys[1:]):
        theta = quat_angle(quat_mul(quat_conj(a.q), b.q))
        n_steps = max(1, int(np.ceil(theta / (2.0 * rho_max) - _BOUNDARY_EPS)))
        ca, cb = a.center(), b.center()
        for i in range(1, n_steps):
            f = i / n_steps
            q = quat_slerp(a.q, b.q, f)
            center = (1.0 - f) * ca + f * cb
            rot = quat_to_matrix(q)
            out.append(
                CameraView(
                    fx=a.fx, fy=a.fy, cx=a.cx, cy=a.cy,
                    width=a.width, height=a.height,
                    q=q, t=-rot @ center,
                )
            )
        out.append(b)
        key_indices.append(len(out) - 1)
    rho = angular_density(np.stack([v.q for v in out]))
    return Trajectory(views=out, rho=rho, key_indices=key_indices)


def filter_view_pairs(views, min_disparity_deg: float):
    """All unordered view pairs with enough relative rotation.

    Returns (i, j) index pairs with relative rotation angle >=
    min_disparity_deg, sorted by disparity descending (ties by index).
    """
    views = list(views)
    if len(views) < 2:
        raise DegenerateInputError("pair filtering needs at least 2 views")
    thresh = np.deg2rad(min_disparity_deg)
    pairs = []
    for i in range(len(views)):
        for j in range(i + 1, len(views)):
            ang = quat_angle(quat_mul(quat_conj(views[i].q), views[j].q))
            if ang >= thresh:
                pairs.append((ang, i, j))
    pairs.sort(key=lambda p: (-p[0], p[1], p[2]))
    return [(i, j) for _, i, j in pairs]
