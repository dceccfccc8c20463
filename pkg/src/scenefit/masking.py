"""Contextual masks: mesh silhouettes grown to cover shadow/reflection zones.

The dilated region is what the inpainting backend is allowed to repaint; it
always contains the raw silhouette, plus a disk dilation and a downward
(+y in image space) smear that stands in for contact shadows.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ConfigError
from .mesh import TriangleMesh
from .raster import rasterize_silhouette
from .trajectory import Trajectory
from .transforms import Sim3Transform


@dataclass(frozen=True)
class ContextualMask:
    """Per-frame silhouette mask and its grown editing region."""

    frame_index: int
    base: np.ndarray
    dilated: np.ndarray
    dilation_px: int
    shadow_px: int

    def __post_init__(self):
        if self.base.shape != self.dilated.shape:
            raise ConfigError("base and dilated masks must share dimensions")


def _disk_footprint(radius: int) -> np.ndarray:
    if radius == 0:
        return np.ones((1, 1), dtype=bool)
    ax = np.arange(-radius, radius + 1)
    dx, dy = np.meshgrid(ax, ax)
    return dx * dx + dy * dy <= radius * radius


def dilate_mask(base: np.ndarray, dilation_px: int, shadow_px: int) -> np.ndarray:
    """Disk-dilate, then union with downward-shifted copies of the base."""
    base = np.asarray(base).astype(bool)
    out = ndimage.binary_dilation(base, structure=_disk_footprint(dilation_px))
    for k in range(1, shadow_px + 1):
        out[k:, :] |= base[:-k, :]
    return out.astype(np.uint8)


def make_contextual_masks(
    mesh: TriangleMesh,
    pose: Sim3Transform,
    traj: Trajectory,
    dilation_px: int = 0,
    shadow_px: int = 0,
) -> list[ContextualMask]:
    """Silhouette masks for every trajectory frame, grown for context.

    Args:
        dilation_px: disk dilation radius in pixels.
        shadow_px: number of rows the base silhouette is smeared downward.
    """
    if dilation_px < 0 or shadow_px < 0:
        raise ConfigError("dilation_px and shadow_px must be non-negative")
    masks = []
    for idx, cam in enumerate(traj.views):
        base = rasterize_silhouette(mesh, pose, cam)
        dilated = dilate_mask(base, dilation_px, shadow_px)
        masks.append(
            ContextualMask(
                frame_index=idx,
                base=base,
                dilated=dilated,
                dilation_px=dilation_px,
                shadow_px=shadow_px,
            )
        )
    return masks
