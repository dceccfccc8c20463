"""Alignment quality metrics: silhouette overlap and volumetric overlap."""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DegenerateInputError, DimensionMismatchError, EmptyInputError
from .mesh import TriangleMesh
from .raster import rasterize_silhouette
from .transforms import Sim3Transform

DEFAULT_VOXEL_RES = 128


@dataclass(frozen=True)
class IoUReport:
    per_view_2d: list
    mean_2d: float
    iou_3d: float | None
    voxel_res: int
    empty_pair_views: int = 0  # views where both masks were empty (scored 1)

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "per_view_2d": [float(v) for v in self.per_view_2d],
            "mean_2d": float(self.mean_2d),
            "iou_3d": None if self.iou_3d is None else float(self.iou_3d),
            "voxel_res": int(self.voxel_res),
            "empty_pair_views": int(self.empty_pair_views),
        }


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union of two binary masks.

    Two empty masks agree perfectly and score 1 (callers can count such
    views via IoUReport.empty_pair_views instead of getting NaNs).
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"mask shapes differ: {a.shape} vs {b.shape}")
    a = a != 0
    b = b != 0
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum() / union)


def iou_2d(mesh: TriangleMesh, pose: Sim3Transform, gt_masks) -> IoUReport:
    """Mean silhouette IoU of the posed mesh against ground-truth masks."""
    gt_masks = list(gt_masks)
    if not gt_masks:
        raise EmptyInputError("iou_2d needs at least one view")
    per_view = []
    empty_pairs = 0
    for cam, gt in gt_masks:
        sil = rasterize_silhouette(mesh, pose, cam)
        if not sil.any() and not np.asarray(gt).any():
            empty_pairs += 1
        per_view.append(mask_iou(sil, gt))
    return IoUReport(
        per_view_2d=per_view,
        mean_2d=float(np.mean(per_view)),
        iou_3d=None,
        voxel_res=0,
        empty_pair_views=empty_pairs,
    )


def voxel_occupancy(mesh: TriangleMesh, origin, voxel: float, shape) -> np.ndarray:
    """Solid winding-number occupancy of a mesh on a given grid."""
    v0, v1, v2 = mesh.triangle_corners()
    nx, ny, nz = shape
    return kernels.voxelize_mesh(
        np.ascontiguousarray(v0), np.ascontiguousarray(v1), np.ascontiguousarray(v2),
        np.asarray(origin, dtype=np.float64), float(voxel), int(nx), int(ny), int(nz),
    )


def iou_3d(
    mesh: TriangleMesh,
    pose: Sim3Transform,
    gt_mesh: TriangleMesh,
    gt_pose: Sim3Transform,
    voxel_res: int = DEFAULT_VOXEL_RES,
) -> float:
    """Volumetric IoU of two posed meshes on a shared occupancy grid.

    The grid bounds the union of both bounding boxes, padded by one voxel;
    `voxel_res` counts voxels along the longest extent.

    Raises:
        DegenerateInputError: voxel_res < 8 or a zero-volume union.
    """
    if voxel_res < 8:
        raise DegenerateInputError("voxel_res must be at least 8")
    a = mesh.transformed(pose)
    b = gt_mesh.transformed(gt_pose)
    lo = np.minimum(a.aabb()[0], b.aabb()[0])
    hi = np.maximum(a.aabb()[1], b.aabb()[1])
    extent = hi - lo
    longest = float(extent.max())
    if longest <= 0:
        raise DegenerateInputError("zero-volume union of bounding boxes")
    voxel = longest / voxel_res
    lo = lo - voxel
    hi = hi + voxel
    shape = np.maximum(np.ceil((hi - lo) / voxel).astype(int), 1)
    occ_a = voxel_occupancy(a, lo, voxel, shape)
    occ_b = voxel_occupancy(b, lo, voxel, shape)
    union = np.logical_or(occ_a, occ_b).sum()
    if union == 0:
        raise DegenerateInputError("both meshes voxelized to empty grids")
    inter = np.logical_and(occ_a, occ_b).sum()
    return float(inter / union)


def full_report(mesh, pose, gt_mesh, gt_pose, gt_masks, voxel_res: int = DEFAULT_VOXEL_RES) -> IoUReport:
    """2D and 3D overlap in one report."""
    r2d = iou_2d(mesh, pose, gt_masks)
    vol = iou_3d(mesh, pose, gt_mesh, gt_pose, voxel_res=voxel_res)
    return IoUReport(
        per_view_2d=r2d.per_view_2d,
        mean_2d=r2d.mean_2d,
        iou_3d=vol,
        voxel_res=voxel_res,
        empty_pair_views=r2d.empty_pair_views,
    )
