"""Hot-kernel backend selection.

Two interchangeable implementations exist: `numba_backend` (JIT-compiled,
default when numba imports cleanly) and `numpy_backend` (pure vectorized
reference). Set SCENEFIT_KERNELS=numpy or SCENEFIT_KERNELS=numba to force
one; `benchmarks/bench_kernels.py` compares them head to head.
"""

import logging
import os

import numpy as np

from . import numpy_backend

logger = logging.getLogger(__name__)

try:
    from . import numba_backend

    _NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    numba_backend = None
    _NUMBA_AVAILABLE = False

_requested = os.environ.get("SCENEFIT_KERNELS", "").strip().lower()
if _requested not in ("", "numba", "numpy"):
    logger.warning("unknown SCENEFIT_KERNELS=%r, falling back to auto", _requested)
    _requested = ""
if _requested == "numba" and not _NUMBA_AVAILABLE:
    logger.warning("SCENEFIT_KERNELS=numba requested but numba is unavailable; using numpy")
    _requested = "numpy"
if _requested == "":
    _requested = "numba" if _NUMBA_AVAILABLE else "numpy"

BACKEND = _requested
_impl = numba_backend if BACKEND == "numba" else numpy_backend

raster_triangles = _impl.raster_triangles
closest_on_mesh = _impl.closest_on_mesh
winding_numbers = _impl.winding_numbers
voxelize_mesh = _impl.voxelize_mesh

_LEAF_SIZE = 8


def build_bvh(v0, v1, v2):
    """Median-split BVH over triangles, packed into flat arrays.

    Returns the tuple (bmin, bmax, left, right, first, count, order) consumed
    by `closest_on_mesh`. Internal nodes have left/right child ids; leaves
    have left == right == -1 and reference `count` triangle ids starting at
    `first` in `order`.
    """
    nt = v0.shape[0]
    tri_min = np.minimum(np.minimum(v0, v1), v2)
    tri_max = np.maximum(np.maximum(v0, v1), v2)
    centroids = (tri_min + tri_max) * 0.5

    bmin, bmax, left, right, first, count = [], [], [], [], [], []
    order = np.arange(nt, dtype=np.int64)

    def new_node(lo, hi):
        idx = len(bmin)
        sel = order[lo:hi]
        bmin.append(tri_min[sel].min(axis=0))
        bmax.append(tri_max[sel].max(axis=0))
        left.append(-1)
        right.append(-1)
        first.append(lo)
        count.append(hi - lo)
        return idx

    # iterative split to avoid recursion limits on skinny meshes
    root = new_node(0, nt)
    pending = [(root, 0, nt)]
    while pending:
        node, lo, hi = pending.pop()
        if hi - lo <= _LEAF_SIZE:
            continue
        sel = order[lo:hi]
        axis = int(np.argmax(bmax[node] - bmin[node]))
        key = centroids[sel, axis]
        mid = (hi - lo) // 2
        part = np.argpartition(key, mid)
        order[lo:hi] = sel[part]
        l = new_node(lo, lo + mid)
        r = new_node(lo + mid, hi)
        left[node] = l
        right[node] = r
        pending.append((l, lo, lo + mid))
        pending.append((r, lo + mid, hi))

    return (
        np.array(bmin),
        np.array(bmax),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(first, dtype=np.int64),
        np.array(count, dtype=np.int64),
        order,
    )
