"""CPU rasterization of mesh silhouettes and depth maps.

Coverage is evaluated at pixel centers with no antialiasing: the outputs
feed IoU metrics and mask losses, where a deterministic binary answer
matters more than smooth edges. Triangles are clipped against the near
plane in camera space before projection, front- and back-facing alike.
"""

import numpy as np

from .camera import CameraView
from .errors import EmptyInputError
from .mesh import TriangleMesh
from .transforms import Sim3Transform

NEAR_PLANE = 1e-6


def _clip_triangles_near(cam_pts, faces, near):
    """Clip camera-space triangles to z >= near; may split quads into two.

    Returns (T', 3, 3) camera-space triangle vertices.
    """
    tri = cam_pts[faces]  # (T, 3, 3)
    z = tri[:, :, 2]
    keep_all = (z >= near).all(axis=1)
    drop_all = (z < near).all(axis=1)
    out = [tri[keep_all]]
    for t in np.nonzero(~(keep_all | drop_all))[0]:
        poly = []
        for i in range(3):
            a = tri[t, i]
            b = tri[t, (i + 1) % 3]
            ain = a[2] >= near
            bin_ = b[2] >= near
            if ain:
                poly.append(a)
            if ain != bin_:
                s = (near - a[2]) / (b[2] - a[2])
                poly.append(a + s * (b - a))
        if len(poly) == 3:
            out.append(np.array(poly)[None])
        elif len(poly) == 4:
            p = np.array(poly)
            out.append(np.stack([p[[0, 1, 2]], p[[0, 2, 3]]]))
    return np.concatenate(out) if out else np.empty((0, 3, 3))


def _project_and_fill(tri_cam, cam: CameraView):
    from . import kernels

    if len(tri_cam) == 0:
        return (
            np.zeros((cam.height, cam.width), dtype=np.uint8),
            np.full((cam.height, cam.width), np.inf),
        )
    z = tri_cam[:, :, 2]
    # shift by the half-pixel so the kernel's integer grid sits on centers
    u = cam.fx * tri_cam[:, :, 0] / z + cam.cx - 0.5
    v = cam.fy * tri_cam[:, :, 1] / z + cam.cy - 0.5
    return kernels.raster_triangles(
        np.ascontiguousarray(u), np.ascontiguousarray(v), np.ascontiguousarray(z),
        cam.width, cam.height,
    )


def rasterize_silhouette(mesh: TriangleMesh, pose: Sim3Transform, cam: CameraView) -> np.ndarray:
    """Binary coverage mask of the posed mesh; all-zero if fully behind."""
    if mesh.n_faces == 0:
        raise EmptyInputError("cannot rasterize an empty mesh")
    cam_pts = cam.world_to_camera(pose.apply(mesh.vertices))
    tri_cam = _clip_triangles_near(cam_pts, mesh.faces, NEAR_PLANE)
    mask, _ = _project_and_fill(tri_cam, cam)
    return mask


def render_depth(meshes_and_poses, cam: CameraView) -> np.ndarray:
    """Z-buffered depth render of several posed meshes into one map.

    Returns camera-space depth per pixel, with 0 marking no coverage (the
    shared invalid-depth sentinel).
    """
    depth = np.full((cam.height, cam.width), np.inf)
    for mesh, pose in meshes_and_poses:
        if mesh.n_faces == 0:
            continue
        cam_pts = cam.world_to_camera(pose.apply(mesh.vertices))
        tri_cam = _clip_triangles_near(cam_pts, mesh.faces, NEAR_PLANE)
        _, d = _project_and_fill(tri_cam, cam)
        np.minimum(depth, d, out=depth)
    depth[~np.isfinite(depth)] = 0.0
    return depth
