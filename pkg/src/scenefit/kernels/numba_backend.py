"""Numba-accelerated hot kernels.

Semantics mirror `numpy_backend` exactly; the BVH tuple is actually
traversed here instead of being ignored. All kernels are nopython-compiled
with caching so repeat runs skip JIT cost.
"""

import math

import numpy as np
from numba import njit

_STACK_DEPTH = 128  # supports BVHs beyond 2^120 leaves; plenty


@njit(cache=True)
def raster_triangles(tri_x, tri_y, tri_z, width, height):
    mask = np.zeros((height, width), dtype=np.uint8)
    depth = np.full((height, width), np.inf)
    for t in range(tri_x.shape[0]):
        x0 = tri_x[t, 0]
        x1 = tri_x[t, 1]
        x2 = tri_x[t, 2]
        y0 = tri_y[t, 0]
        y1 = tri_y[t, 1]
        y2 = tri_y[t, 2]
        area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        if area == 0.0:
            continue
        umin = max(0, int(math.ceil(min(x0, min(x1, x2)))))
        umax = min(width - 1, int(math.floor(max(x0, max(x1, x2)))))
        vmin = max(0, int(math.ceil(min(y0, min(y1, y2)))))
        vmax = min(height - 1, int(math.floor(max(y0, max(y1, y2)))))
        if umin > umax or vmin > vmax:
            continue
        flip = -1.0 if area < 0 else 1.0
        inv_area = 1.0 / abs(area)
        iz0 = 1.0 / tri_z[t, 0]
        iz1 = 1.0 / tri_z[t, 1]
        iz2 = 1.0 / tri_z[t, 2]
        for v in range(vmin, vmax + 1):
            for u in range(umin, umax + 1):
                w0 = flip * ((x2 - x1) * (v - y1) - (y2 - y1) * (u - x1))
                if w0 < 0:
                    continue
                w1 = flip * ((x0 - x2) * (v - y2) - (y0 - y2) * (u - x2))
                if w1 < 0:
                    continue
                w2 = flip * ((x1 - x0) * (v - y0) - (y1 - y0) * (u - x0))
                if w2 < 0:
                    continue
                mask[v, u] = 1
                inv_z = (w0 * iz0 + w1 * iz1 + w2 * iz2) * inv_area
                if inv_z > 0:
                    z = 1.0 / inv_z
                    if z < depth[v, u]:
                        depth[v, u] = z
    return mask, depth


@njit(cache=True, inline="always")
def _closest_on_triangle(px, py, pz, ax, ay, az, bx, by, bz, cx, cy, cz):
    abx = bx - ax
    aby = by - ay
    abz = bz - az
    acx = cx - ax
    acy = cy - ay
    acz = cz - az
    apx = px - ax
    apy = py - ay
    apz = pz - az
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        return ax, ay, az
    bpx = px - bx
    bpy = py - by
    bpz = pz - bz
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        return bx, by, bz
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        return ax + v * abx, ay + v * aby, az + v * abz
    cpx = px - cx
    cpy = py - cy
    cpz = pz - cz
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        return cx, cy, cz
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        return ax + w * acx, ay + w * acy, az + w * acz
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and d4 - d3 >= 0.0 and d5 - d6 >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return bx + w * (cx - bx), by + w * (cy - by), bz + w * (cz - bz)
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return ax + abx * v + acx * w, ay + aby * v + acy * w, az + abz * v + acz * w


@njit(cache=True)
def closest_on_mesh(points, v0, v1, v2, bvh):
    bmin, bmax, left, right, first, count, order = bvh
    n = points.shape[0]
    dist_sq = np.empty(n)
    closest = np.empty((n, 3))
    stack = np.empty(_STACK_DEPTH, dtype=np.int64)
    for i in range(n):
        px = points[i, 0]
        py = points[i, 1]
        pz = points[i, 2]
        best = np.inf
        bx = px
        by = py
        bz = pz
        top = 0
        stack[top] = 0
        top += 1
        while top > 0:
            top -= 1
            node = stack[top]
            # lower bound: squared distance to the node AABB
            dx = max(bmin[node, 0] - px, 0.0, px - bmax[node, 0])
            dy = max(bmin[node, 1] - py, 0.0, py - bmax[node, 1])
            dz = max(bmin[node, 2] - pz, 0.0, pz - bmax[node, 2])
            if dx * dx + dy * dy + dz * dz >= best:
                continue
            if left[node] < 0:
                for k in range(first[node], first[node] + count[node]):
                    t = order[k]
                    qx, qy, qz = _closest_on_triangle(
                        px, py, pz,
                        v0[t, 0], v0[t, 1], v0[t, 2],
                        v1[t, 0], v1[t, 1], v1[t, 2],
                        v2[t, 0], v2[t, 1], v2[t, 2],
                    )
                    d = (qx - px) ** 2 + (qy - py) ** 2 + (qz - pz) ** 2
                    if d < best:
                        best = d
                        bx = qx
                        by = qy
                        bz = qz
            else:
                stack[top] = left[node]
                top += 1
                stack[top] = right[node]
                top += 1
        dist_sq[i] = best
        closest[i, 0] = bx
        closest[i, 1] = by
        closest[i, 2] = bz
    return dist_sq, closest


@njit(cache=True)
def winding_numbers(points, v0, v1, v2):
    n = points.shape[0]
    nt = v0.shape[0]
    w = np.empty(n)
    for i in range(n):
        px = points[i, 0]
        py = points[i, 1]
        pz = points[i, 2]
        total = 0.0
        for t in range(nt):
            axp = v0[t, 0] - px
            ayp = v0[t, 1] - py
            azp = v0[t, 2] - pz
            bxp = v1[t, 0] - px
            byp = v1[t, 1] - py
            bzp = v1[t, 2] - pz
            cxp = v2[t, 0] - px
            cyp = v2[t, 1] - py
            czp = v2[t, 2] - pz
            la = math.sqrt(axp * axp + ayp * ayp + azp * azp)
            lb = math.sqrt(bxp * bxp + byp * byp + bzp * bzp)
            lc = math.sqrt(cxp * cxp + cyp * cyp + czp * czp)
            num = (
                axp * (byp * czp - bzp * cyp)
                - ayp * (bxp * czp - bzp * cxp)
                + azp * (bxp * cyp - byp * cxp)
            )
            den = (
                la * lb * lc
                + (axp * bxp + ayp * byp + azp * bzp) * lc
                + (bxp * cxp + byp * cyp + bzp * czp) * la
                + (cxp * axp + cyp * ayp + czp * azp) * lb
            )
            total += 2.0 * math.atan2(num, den)
        w[i] = total / (4.0 * math.pi)
    return w


@njit(cache=True)
def voxelize_mesh(v0, v1, v2, origin, voxel, nx, ny, nz):
    ox = origin[0]
    oy = origin[1]
    oz = origin[2]
    bump = np.zeros((nx, ny, nz + 1))
    for t in range(v0.shape[0]):
        x0 = v0[t, 0]
        y0 = v0[t, 1]
        z0 = v0[t, 2]
        x1 = v1[t, 0]
        y1 = v1[t, 1]
        z1 = v1[t, 2]
        x2 = v2[t, 0]
        y2 = v2[t, 1]
        z2 = v2[t, 2]
        area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        if area == 0.0:
            continue
        sign = 1.0 if area > 0 else -1.0
        flip = sign
        inv_area = 1.0 / abs(area)
        ix_lo = max(0, int(math.ceil((min(x0, min(x1, x2)) - ox) / voxel - 0.5)))
        ix_hi = min(nx - 1, int(math.floor((max(x0, max(x1, x2)) - ox) / voxel - 0.5)))
        iy_lo = max(0, int(math.ceil((min(y0, min(y1, y2)) - oy) / voxel - 0.5)))
        iy_hi = min(ny - 1, int(math.floor((max(y0, max(y1, y2)) - oy) / voxel - 0.5)))
        for ix in range(ix_lo, ix_hi + 1):
            gx = ox + (ix + 0.5) * voxel
            for iy in range(iy_lo, iy_hi + 1):
                gy = oy + (iy + 0.5) * voxel
                w0 = flip * ((x2 - x1) * (gy - y1) - (y2 - y1) * (gx - x1))
                if w0 < 0:
                    continue
                w1 = flip * ((x0 - x2) * (gy - y2) - (y0 - y2) * (gx - x2))
                if w1 < 0:
                    continue
                w2 = flip * ((x1 - x0) * (gy - y0) - (y1 - y0) * (gx - x0))
                if w2 < 0:
                    continue
                zc = (w0 * z0 + w1 * z1 + w2 * z2) * inv_area
                m = int(math.floor((zc - oz) / voxel + 0.5))
                if m < 0:
                    m = 0
                elif m > nz:
                    m = nz
                bump[ix, iy, m] += sign
    occ = np.zeros((nx, ny, nz), dtype=np.uint8)
    for ix in range(nx):
        for iy in range(ny):
            acc = 0.0
            for iz in range(nz - 1, -1, -1):
                acc += bump[ix, iy, iz + 1]
                if acc > 0.5:
                    occ[ix, iy, iz] = 1
    return occ
