#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy reference.

Runs each hot kernel on representative workloads and prints a timing table
with the speedup. The numba column includes a warm-up call so JIT
compilation does not pollute the numbers.

Usage: python benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import time

import numpy as np

from scenefit.kernels import build_bvh, numpy_backend

try:
    from scenefit.kernels import numba_backend
except ImportError:
    numba_backend = None

from scenefit.primitives import icosphere
from scenefit.transforms import Sim3Transform
from scenefit.camera import look_at
from scenefit.raster import _clip_triangles_near, NEAR_PLANE


def _build_workloads():
    mesh = icosphere(1.0, subdivisions=4)  # 5120 faces
    v0, v1, v2 = (np.ascontiguousarray(a) for a in mesh.triangle_corners())
    bvh = build_bvh(v0, v1, v2)
    rng = np.random.default_rng(0)
    points = rng.uniform(-2.0, 2.0, size=(2000, 3))

    cam = look_at(
        eye=(0, 0, -4.0), target=(0, 0, 0),
        fx=800.0, fy=800.0, cx=320.0, cy=240.0, width=640, height=480,
    )
    cam_pts = cam.world_to_camera(Sim3Transform.identity().apply(mesh.vertices))
    tri_cam = _clip_triangles_near(cam_pts, mesh.faces, NEAR_PLANE)
    z = tri_cam[:, :, 2]
    u = np.ascontiguousarray(cam.fx * tri_cam[:, :, 0] / z + cam.cx - 0.5)
    v = np.ascontiguousarray(cam.fy * tri_cam[:, :, 1] / z + cam.cy - 0.5)
    z = np.ascontiguousarray(z)

    origin = np.array([-1.2, -1.2, -1.2])
    return {
        "raster_triangles (5120 tris, 640x480)": (
            "raster_triangles", (u, v, z, 640, 480)),
        "closest_on_mesh (2000 pts, 5120 tris)": (
            "closest_on_mesh", (points, v0, v1, v2, bvh)),
        "winding_numbers (2000 pts, 5120 tris)": (
            "winding_numbers", (points, v0, v1, v2)),
        "voxelize_mesh (96^3 grid, 5120 tris)": (
            "voxelize_mesh", (v0, v1, v2, origin, 2.4 / 96, 96, 96, 96)),
    }


def _time(fn, args, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    workloads = _build_workloads()
    print(f"{'kernel':45s} {'numpy':>10s} {'numba':>10s} {'speedup':>9s}")
    for label, (name, wargs) in workloads.items():
        t_np = _time(getattr(numpy_backend, name), wargs, args.repeat)
        if numba_backend is None:
            print(f"{label:45s} {t_np * 1e3:8.2f}ms {'n/a':>10s} {'n/a':>9s}")
            continue
        fn = getattr(numba_backend, name)
        fn(*wargs)  # warm-up: exclude JIT compile time
        t_nb = _time(fn, wargs, args.repeat)
        print(f"{label:45s} {t_np * 1e3:8.2f}ms {t_nb * 1e3:8.2f}ms {t_np / t_nb:8.1f}x")


if __name__ == "__main__":
    main()
