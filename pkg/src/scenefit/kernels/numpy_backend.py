"""Pure-numpy reference implementations of the hot kernels.

Each function here matches the signature and semantics of its numba twin in
`numba_backend`. The numpy versions loop over triangles in Python and
vectorize over pixels/points, which keeps them exact and dependency-free at
the cost of speed on large inputs.
"""

import numpy as np

_CHUNK = 128  # points per brute-force distance chunk


def raster_triangles(tri_x, tri_y, tri_z, width, height):
    """Rasterize projected triangles into a coverage mask and z-buffer.

    Args:
        tri_x, tri_y: (T, 3) pixel coordinates of triangle vertices
            (pixel centers sit at integer coordinates).
        tri_z: (T, 3) positive camera-space depths of the vertices.
        width, height: image dimensions in pixels.

    Returns:
        (mask, depth): uint8 coverage mask (H, W) and float64 z-buffer (H, W)
        holding the nearest perspective-correct depth, inf where uncovered.
    """
    mask = np.zeros((height, width), dtype=np.uint8)
    depth = np.full((height, width), np.inf)
    for t in range(tri_x.shape[0]):
        x0, x1, x2 = tri_x[t]
        y0, y1, y2 = tri_y[t]
        area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        if area == 0.0:
            continue
        umin = max(0, int(np.ceil(min(x0, x1, x2))))
        umax = min(width - 1, int(np.floor(max(x0, x1, x2))))
        vmin = max(0, int(np.ceil(min(y0, y1, y2))))
        vmax = min(height - 1, int(np.floor(max(y0, y1, y2))))
        if umin > umax or vmin > vmax:
            continue
        us = np.arange(umin, umax + 1)
        vs = np.arange(vmin, vmax + 1)
        uu, vv = np.meshgrid(us, vs)
        w0 = (x2 - x1) * (vv - y1) - (y2 - y1) * (uu - x1)
        w1 = (x0 - x2) * (vv - y2) - (y0 - y2) * (uu - x2)
        w2 = (x1 - x0) * (vv - y0) - (y1 - y0) * (uu - x0)
        if area < 0:
            w0, w1, w2 = -w0, -w1, -w2
        inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        if not inside.any():
            continue
        b0 = w0 / abs(area)
        b1 = w1 / abs(area)
        b2 = w2 / abs(area)
        inv_z = b0 / tri_z[t, 0] + b1 / tri_z[t, 1] + b2 / tri_z[t, 2]
        with np.errstate(divide="ignore"):
            z = 1.0 / inv_z
        sub_mask = mask[vmin : vmax + 1, umin : umax + 1]
        sub_depth = depth[vmin : vmax + 1, umin : umax + 1]
        sub_mask[inside] = 1
        np.minimum(sub_depth, np.where(inside, z, np.inf), out=sub_depth)
    return mask, depth


def _closest_points_block(p, a, b, c):
    """Closest point on each triangle (T,3) for each point (n,3) -> (n,T,3)."""
    ab = b - a
    ac = c - a
    ap = p[:, None, :] - a[None, :, :]

    d1 = np.einsum("tk,ntk->nt", ab, ap)
    d2 = np.einsum("tk,ntk->nt", ac, ap)

    bp = p[:, None, :] - b[None, :, :]
    d3 = np.einsum("tk,ntk->nt", ab, bp)
    d4 = np.einsum("tk,ntk->nt", ac, bp)

    cp = p[:, None, :] - c[None, :, :]
    d5 = np.einsum("tk,ntk->nt", ab, cp)
    d6 = np.einsum("tk,ntk->nt", ac, cp)

    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    with np.errstate(divide="ignore", invalid="ignore"):
        v_edge_ab = d1 / (d1 - d3)
        w_edge_ac = d2 / (d2 - d6)
        w_edge_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        denom = va + vb + vc
        v_in = vb / denom
        w_in = vc / denom

    out = a[None, :, :] + v_in[..., None] * ab[None, :, :] + w_in[..., None] * ac[None, :, :]

    reg_bc = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
    cand = b[None, :, :] + w_edge_bc[..., None] * (c - b)[None, :, :]
    out = np.where(reg_bc[..., None], cand, out)

    reg_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    cand = a[None, :, :] + w_edge_ac[..., None] * ac[None, :, :]
    out = np.where(reg_ac[..., None], cand, out)

    reg_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    cand = a[None, :, :] + v_edge_ab[..., None] * ab[None, :, :]
    out = np.where(reg_ab[..., None], cand, out)

    reg_c = (d6 >= 0) & (d5 <= d6)
    out = np.where(reg_c[..., None], np.broadcast_to(c, out.shape), out)
    reg_b = (d3 >= 0) & (d4 <= d3)
    out = np.where(reg_b[..., None], np.broadcast_to(b, out.shape), out)
    reg_a = (d1 <= 0) & (d2 <= 0)
    out = np.where(reg_a[..., None], np.broadcast_to(a, out.shape), out)
    return out


def closest_on_mesh(points, v0, v1, v2, bvh):
    """Closest surface point and squared distance per query point.

    The BVH tuple is accepted for signature parity with the numba backend
    but ignored: this reference path brute-forces all triangles, chunked
    over query points to bound memory.

    Returns:
        (dist_sq, closest): (N,) squared distances and (N, 3) surface points.
    """
    del bvh
    points = np.ascontiguousarray(points, dtype=np.float64)
    n = points.shape[0]
    dist_sq = np.empty(n)
    closest = np.empty((n, 3))
    for start in range(0, n, _CHUNK):
        p = points[start : start + _CHUNK]
        cand = _closest_points_block(p, v0, v1, v2)
        d2 = np.sum((p[:, None, :] - cand) ** 2, axis=2)
        idx = np.argmin(d2, axis=1)
        rows = np.arange(p.shape[0])
        dist_sq[start : start + _CHUNK] = d2[rows, idx]
        closest[start : start + _CHUNK] = cand[rows, idx]
    return dist_sq, closest


def winding_numbers(points, v0, v1, v2):
    """Generalized winding number of each query point w.r.t. the mesh.

    Uses the solid-angle sum (Van Oosterom & Strackee) over all triangles,
    normalized by 4*pi; approximately 1 inside a watertight outward mesh.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    n = points.shape[0]
    w = np.empty(n)
    for start in range(0, n, _CHUNK):
        p = points[start : start + _CHUNK]
        a = v0[None, :, :] - p[:, None, :]
        b = v1[None, :, :] - p[:, None, :]
        c = v2[None, :, :] - p[:, None, :]
        la = np.linalg.norm(a, axis=2)
        lb = np.linalg.norm(b, axis=2)
        lc = np.linalg.norm(c, axis=2)
        num = np.einsum("ntk,ntk->nt", a, np.cross(b, c))
        den = (
            la * lb * lc
            + np.einsum("ntk,ntk->nt", a, b) * lc
            + np.einsum("ntk,ntk->nt", b, c) * la
            + np.einsum("ntk,ntk->nt", c, a) * lb
        )
        omega = 2.0 * np.arctan2(num, den)
        w[start : start + _CHUNK] = omega.sum(axis=1) / (4.0 * np.pi)
    return w


def voxelize_mesh(v0, v1, v2, origin, voxel, nx, ny, nz):
    """Solid occupancy grid via per-column winding of +z ray crossings.

    Each triangle with nonzero xy-projection contributes a signed crossing
    (sign of its normal's z component) to every grid column whose center it
    covers; a voxel is occupied when the summed winding of crossings above
    its center exceeds 0.5.

    Returns:
        uint8 occupancy grid of shape (nx, ny, nz).
    """
    ox, oy, oz = origin
    bump = np.zeros((nx, ny, nz + 1), dtype=np.float64)
    for t in range(v0.shape[0]):
        x0, y0, z0 = v0[t]
        x1, y1, z1 = v1[t]
        x2, y2, z2 = v2[t]
        area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        if area == 0.0:
            continue
        sign = 1.0 if area > 0 else -1.0
        ix_lo = max(0, int(np.ceil((min(x0, x1, x2) - ox) / voxel - 0.5)))
        ix_hi = min(nx - 1, int(np.floor((max(x0, x1, x2) - ox) / voxel - 0.5)))
        iy_lo = max(0, int(np.ceil((min(y0, y1, y2) - oy) / voxel - 0.5)))
        iy_hi = min(ny - 1, int(np.floor((max(y0, y1, y2) - oy) / voxel - 0.5)))
        if ix_lo > ix_hi or iy_lo > iy_hi:
            continue
        cx = ox + (np.arange(ix_lo, ix_hi + 1) + 0.5) * voxel
        cy = oy + (np.arange(iy_lo, iy_hi + 1) + 0.5) * voxel
        gx, gy = np.meshgrid(cx, cy, indexing="ij")
        w0 = (x2 - x1) * (gy - y1) - (y2 - y1) * (gx - x1)
        w1 = (x0 - x2) * (gy - y2) - (y0 - y2) * (gx - x2)
        w2 = (x1 - x0) * (gy - y0) - (y1 - y0) * (gx - x0)
        if area < 0:
            w0, w1, w2 = -w0, -w1, -w2
        inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        if not inside.any():
            continue
        b0 = w0 / abs(area)
        b1 = w1 / abs(area)
        b2 = w2 / abs(area)
        zc = b0 * z0 + b1 * z1 + b2 * z2
        m = np.clip(np.floor((zc - oz) / voxel + 0.5).astype(np.int64), 0, nz)
        ii, jj = np.nonzero(inside)
        np.add.at(bump, (ii + ix_lo, jj + iy_lo, m[inside]), sign)
    # winding above voxel iz = sum of bumps at indices > iz
    suffix = np.cumsum(bump[:, :, ::-1], axis=2)[:, :, ::-1]
    winding = suffix[:, :, 1:]
    return (winding > 0.5).astype(np.uint8)
