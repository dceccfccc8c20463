"""Triangle meshes, point clouds, and the queries built on them."""

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from . import kernels
from .errors import DegenerateInputError, EmptyInputError
from .transforms import Sim3Transform

logger = logging.getLogger(__name__)

DEGENERATE_AREA_EPS = 1e-14


@dataclass(frozen=True)
class TriangleMesh:
    """Immutable triangle mesh; faces index into vertices.

    Faces with indices out of range are rejected at construction. Zero-area
    faces are dropped with a warning (generative pipelines emit them
    routinely), so downstream rasterization and distance queries never see
    them.
    """

    vertices: np.ndarray
    faces: np.ndarray
    normals: np.ndarray | None = None

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3))
        f = np.ascontiguousarray(np.asarray(self.faces, dtype=np.int64).reshape(-1, 3))
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise DegenerateInputError("face index out of range")
        if f.size:
            a, b, c = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
            areas = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
            bad = areas <= DEGENERATE_AREA_EPS
            if bad.any():
                logger.warning("dropping %d degenerate face(s)", int(bad.sum()))
                f = f[~bad]
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        if self.normals is not None:
            n = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
            if len(n) != len(v):
                raise DegenerateInputError("per-vertex normal count mismatch")
            object.__setattr__(self, "normals", n)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def triangle_corners(self):
        """Vertex positions per face as three (F, 3) arrays."""
        f = self.faces
        return self.vertices[f[:, 0]], self.vertices[f[:, 1]], self.vertices[f[:, 2]]

    def face_areas(self) -> np.ndarray:
        a, b, c = self.triangle_corners()
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def transformed(self, pose: Sim3Transform) -> "TriangleMesh":
        return TriangleMesh(pose.apply(self.vertices), self.faces)

    def aabb(self):
        if self.n_vertices == 0:
            raise EmptyInputError("empty mesh has no bounding box")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @cached_property
    def is_watertight(self) -> bool:
        """Every undirected edge is used by exactly two faces."""
        if self.n_faces == 0:
            return False
        edges = np.concatenate(
            [self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]]
        )
        edges = np.sort(edges, axis=1)
        _, counts = np.unique(edges, axis=0, return_counts=True)
        return bool((counts == 2).all())

    def sample_surface(self, n: int, seed: int = 0) -> np.ndarray:
        """Area-weighted uniform surface samples, deterministic per seed."""
        if self.n_faces == 0:
            raise EmptyInputError("cannot sample an empty mesh")
        rng = np.random.default_rng(seed)
        areas = self.face_areas()
        idx = rng.choice(self.n_faces, size=n, p=areas / areas.sum())
        u = rng.random(n)
        v = rng.random(n)
        flip = u + v > 1
        u[flip] = 1 - u[flip]
        v[flip] = 1 - v[flip]
        a, b, c = self.triangle_corners()
        return (
            a[idx]
            + u[:, None] * (b[idx] - a[idx])
            + v[:, None] * (c[idx] - a[idx])
        )


@dataclass(frozen=True)
class PointCloud:
    """Point set with optional per-point unit normals."""

    points: np.ndarray
    normals: np.ndarray | None = None

    def __post_init__(self):
        p = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64).reshape(-1, 3))
        object.__setattr__(self, "points", p)
        if self.normals is not None:
            n = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
            if len(n) != len(p):
                raise DegenerateInputError("per-point normal count mismatch")
            object.__setattr__(self, "normals", n)

    def __len__(self) -> int:
        return len(self.points)

    def transformed(self, pose: Sim3Transform) -> "PointCloud":
        return PointCloud(pose.apply(self.points), self.normals)


def aabb_corners(mesh: TriangleMesh, pose: Sim3Transform) -> np.ndarray:
    """Eight AABB corners of the posed mesh in canonical order.

    The order is lexicographic over the (x, y, z) min/max choice: index
    bit 2 selects max-x, bit 1 max-y, bit 0 max-z, so corner 0 is
    (min, min, min) and corner 7 is (max, max, max). Stable ordering gives
    corner losses a fixed correspondence.
    """
    lo, hi = mesh.transformed(pose).aabb()
    return corners_from_bounds(lo, hi)


def corners_from_bounds(lo, hi) -> np.ndarray:
    out = np.empty((8, 3))
    for i in range(8):
        out[i, 0] = hi[0] if i & 4 else lo[0]
        out[i, 1] = hi[1] if i & 2 else lo[1]
        out[i, 2] = hi[2] if i & 1 else lo[2]
    return out


def cloud_aabb_corners(cloud: PointCloud) -> np.ndarray:
    if len(cloud) == 0:
        raise EmptyInputError("empty cloud has no bounding box")
    return corners_from_bounds(cloud.points.min(axis=0), cloud.points.max(axis=0))


def estimate_normals(cloud: PointCloud, k: int = 16, orient_toward=None) -> PointCloud:
    """Per-point normals from local PCA over the k nearest neighbors.

    Points whose neighborhood is degenerate (fewer than 3 distinct
    neighbors, or a rank-deficient covariance) get a zero normal; callers
    treat those as "no reliable side information".

    Args:
        cloud: input points.
        k: neighborhood size (the point itself included).
        orient_toward: optional (3,) position; normals are flipped to point
            toward it (e.g. the dominant camera side).
    """
    pts = cloud.points
    n = len(pts)
    if n == 0:
        raise EmptyInputError("cannot estimate normals of an empty cloud")
    k_eff = min(k, n)
    tree = cKDTree(pts)
    _, nbr = tree.query(pts, k=k_eff)
    if k_eff == 1:
        nbr = nbr[:, None]
    normals = np.zeros((n, 3))
    for i in range(n):
        local = pts[nbr[i]]
        centered = local - local.mean(axis=0)
        cov = centered.T @ centered
        w, vecs = np.linalg.eigh(cov)
        # smallest eigenvector is the plane normal; reject unstable fits
        if w[1] <= 1e-12 * max(w[2], 1e-300):
            continue
        normals[i] = vecs[:, 0]
    if orient_toward is not None:
        toward = np.asarray(orient_toward, dtype=np.float64) - pts
        flip = np.einsum("ij,ij->i", normals, toward) < 0
        normals[flip] *= -1
    return PointCloud(pts, normals)


class MeshDistanceField:
    """Signed/unsigned distance queries against one mesh.

    The BVH is built once at construction and shared read-only afterwards,
    so instances are safe to query from multiple threads. Sign is decided
    by the generalized winding number (> 0.5 means inside); for
    non-watertight meshes that sign is approximate and flagged through
    `sign_is_approximate`.
    """

    def __init__(self, mesh: TriangleMesh):
        if mesh.n_faces == 0:
            raise EmptyInputError("cannot build a distance field over an empty mesh")
        self.mesh = mesh
        v0, v1, v2 = mesh.triangle_corners()
        self._v0 = np.ascontiguousarray(v0)
        self._v1 = np.ascontiguousarray(v1)
        self._v2 = np.ascontiguousarray(v2)
        self._bvh = kernels.build_bvh(self._v0, self._v1, self._v2)
        self.sign_is_approximate = not mesh.is_watertight
        if self.sign_is_approximate:
            logger.warning(
                "mesh is not watertight; SDF sign from winding number is approximate"
            )

    def unsigned_distance(self, points) -> np.ndarray:
        points = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
        d2, _ = kernels.closest_on_mesh(points, self._v0, self._v1, self._v2, self._bvh)
        return np.sqrt(d2)

    def closest_points(self, points):
        points = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
        d2, closest = kernels.closest_on_mesh(points, self._v0, self._v1, self._v2, self._bvh)
        return np.sqrt(d2), closest

    def winding(self, points) -> np.ndarray:
        points = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
        return kernels.winding_numbers(points, self._v0, self._v1, self._v2)

    def signed_distance(self, points) -> np.ndarray:
        """Distance to the surface, negative inside (winding > 0.5)."""
        points = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
        dist = self.unsigned_distance(points)
        inside = self.winding(points) > 0.5
        dist[inside] *= -1.0
        return dist


def point_to_mesh_sdf(point, mesh: TriangleMesh) -> float:
    """One-off signed distance of a single point; builds a throwaway field.

    Use MeshDistanceField directly when querying the same mesh repeatedly.
    """
    return float(MeshDistanceField(mesh).signed_distance(np.asarray(point)[None, :])[0])
