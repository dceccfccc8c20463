"""Pinhole cameras, depth unprojection, and mask-based point filtering.

Conventions: extrinsics map world to camera, x_cam = R(q) x_world + t, with
+z looking forward. Continuous image coordinates span [0, width) x
[0, height) with the center of pixel (row i, col j) at (j + 0.5, i + 0.5);
the point on the principal ray projects exactly to (cx, cy).
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, DimensionMismatchError, EmptyInputError
from .mesh import PointCloud
from .transforms import quat_conj, quat_from_matrix, quat_normalize, quat_to_matrix


@dataclass(frozen=True)
class CameraView:
    """Pinhole intrinsics plus world-to-camera extrinsic pose."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    q: np.ndarray  # world->camera rotation, [w, x, y, z]
    t: np.ndarray  # world->camera translation

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise DegenerateInputError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise DegenerateInputError("principal point outside the image")
        object.__setattr__(self, "q", quat_normalize(self.q))
        object.__setattr__(self, "t", np.asarray(self.t, dtype=np.float64).reshape(3))

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.q)

    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -quat_to_matrix(quat_conj(self.q)) @ self.t

    def world_to_camera(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        return pts @ self.rotation_matrix().T + self.t

    def camera_to_world(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        return (pts - self.t) @ self.rotation_matrix()

    def project(self, pts_world):
        """Project world points; returns (uv (N,2), z (N,) camera depth)."""
        cam = self.world_to_camera(pts_world)
        z = cam[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.fx * cam[:, 0] / z + self.cx
            v = self.fy * cam[:, 1] / z + self.cy
        return np.stack([u, v], axis=1), z

    def optical_axis(self) -> np.ndarray:
        """Viewing direction (+z of the camera frame) in world coordinates."""
        return self.rotation_matrix().T @ np.array([0.0, 0.0, 1.0])

    def to_dict(self) -> dict:
        return {
            "fx": float(self.fx),
            "fy": float(self.fy),
            "cx": float(self.cx),
            "cy": float(self.cy),
            "width": int(self.width),
            "height": int(self.height),
            "q": [float(x) for x in self.q],
            "t": [float(x) for x in self.t],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraView":
        return cls(
            fx=float(d["fx"]),
            fy=float(d["fy"]),
            cx=float(d["cx"]),
            cy=float(d["cy"]),
            width=int(d["width"]),
            height=int(d["height"]),
            q=np.asarray(d["q"], dtype=np.float64),
            t=np.asarray(d["t"], dtype=np.float64),
        )


def look_at(eye, target, *, fx, fy, cx, cy, width, height, up=(0.0, 0.0, 1.0)) -> CameraView:
    """Camera at `eye` looking at `target`.

    When the viewing direction is (anti)parallel to `up`, the fallback up
    vector +x keeps the construction defined at the poles.
    """
    eye = np.asarray(eye, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    fwd = target - eye
    n = np.linalg.norm(fwd)
    if n == 0:
        raise DegenerateInputError("look_at eye and target coincide")
    fwd = fwd / n
    up = np.asarray(up, dtype=np.float64)
    side = np.cross(fwd, up)
    if np.linalg.norm(side) < 1e-12:
        side = np.cross(fwd, np.array([1.0, 0.0, 0.0]))
        if np.linalg.norm(side) < 1e-12:
            side = np.cross(fwd, np.array([0.0, 1.0, 0.0]))
    side = side / np.linalg.norm(side)
    down = np.cross(fwd, side)
    # camera rows: +x right, +y down (image v), +z forward
    r_wc = np.stack([side, down, fwd])
    q = quat_from_matrix(r_wc)
    t = -r_wc @ eye
    return CameraView(fx=fx, fy=fy, cx=cx, cy=cy, width=width, height=height, q=q, t=t)


def unproject_depth(depth: np.ndarray, cam: CameraView, mask: np.ndarray | None = None) -> PointCloud:
    """Lift a depth map into a world-space point cloud.

    One point per pixel with depth > 0 (and mask nonzero, when given). A
    depth value of 0 is the invalid sentinel.

    Raises:
        DimensionMismatchError: depth or mask dimensions disagree with cam.
        EmptyInputError: no valid pixel survives.
    """
    depth = np.asarray(depth, dtype=np.float64)
    if depth.shape != (cam.height, cam.width):
        raise DimensionMismatchError(
            f"depth shape {depth.shape} != camera ({cam.height}, {cam.width})"
        )
    valid = depth > 0
    if mask is not None:
        mask = np.asarray(mask)
        if mask.shape != depth.shape:
            raise DimensionMismatchError(f"mask shape {mask.shape} != depth shape {depth.shape}")
        valid &= mask != 0
    vv, uu = np.nonzero(valid)
    if len(vv) == 0:
        raise EmptyInputError("no valid depth pixels to unproject")
    z = depth[vv, uu]
    x = (uu + 0.5 - cam.cx) / cam.fx * z
    y = (vv + 0.5 - cam.cy) / cam.fy * z
    pts_cam = np.stack([x, y, z], axis=1)
    return PointCloud(cam.camera_to_world(pts_cam))


def filter_points_by_masks(points, views_and_masks, min_views: int = 1) -> np.ndarray:
    """Boolean keep-mask for points that fall inside >= min_views mask regions.

    A point counts for a view when it projects in front of the camera, lands
    inside the frame, and the mask pixel under it is nonzero. Used to crop a
    scene cloud down to the editing region outlined by multi-view masks.
    """
    points = np.asarray(points, dtype=np.float64)
    hits = np.zeros(len(points), dtype=np.int64)
    for cam, mask in views_and_masks:
        mask = np.asarray(mask)
        if mask.shape != (cam.height, cam.width):
            raise DimensionMismatchError("mask dimensions disagree with camera")
        uv, z = cam.project(points)
        u = np.floor(uv[:, 0]).astype(np.int64)
        v = np.floor(uv[:, 1]).astype(np.int64)
        ok = (z > 0) & (u >= 0) & (u < cam.width) & (v >= 0) & (v < cam.height)
        idx = np.nonzero(ok)[0]
        hit = mask[v[idx], u[idx]] != 0
        hits[idx[hit]] += 1
    return hits >= min_views
