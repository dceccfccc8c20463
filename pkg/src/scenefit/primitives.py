"""Procedural primitive meshes with outward-facing windings."""

import numpy as np

from .mesh import TriangleMesh

_CUBE_FACES = np.array(
    [
        [0, 2, 1], [0, 3, 2],  # -z
        [4, 5, 6], [4, 6, 7],  # +z
        [0, 1, 5], [0, 5, 4],  # -y
        [2, 3, 7], [2, 7, 6],  # +y
        [0, 4, 7], [0, 7, 3],  # -x
        [1, 2, 6], [1, 6, 5],  # +x
    ]
)


def box_mesh(size=(1.0, 1.0, 1.0), center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    size = np.asarray(size, dtype=np.float64)
    center = np.asarray(center, dtype=np.float64)
    signs = np.array(
        [
            [-1, -1, -1], [1, -1, -1], [1, 1, -1], [-1, 1, -1],
            [-1, -1, 1], [1, -1, 1], [1, 1, 1], [-1, 1, 1],
        ],
        dtype=np.float64,
    )
    return TriangleMesh(center + 0.5 * size * signs, _CUBE_FACES)


def icosphere(radius: float = 1.0, center=(0.0, 0.0, 0.0), subdivisions: int = 2) -> TriangleMesh:
    """Subdivided icosahedron projected onto the sphere."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=np.float64,
    )
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [tuple(v) for v in verts]
    for _ in range(subdivisions):
        cache = {}
        new_faces = []

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = np.array(verts[i]) + np.array(verts[j])
                m /= np.linalg.norm(m)
                cache[key] = len(verts)
                verts.append(tuple(m))
            return cache[key]

        for a, b, c in faces:
            ab = midpoint(a, b)
            bc = midpoint(b, c)
            ca = midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    v = np.array(verts) * radius + np.asarray(center, dtype=np.float64)
    return TriangleMesh(v, np.array(faces))


def plane_mesh(size=(10.0, 10.0), center=(0.0, 0.0, 0.0), cells: int = 4) -> TriangleMesh:
    """Flat z=const grid plane facing +z."""
    sx, sy = size
    xs = np.linspace(-sx / 2, sx / 2, cells + 1)
    ys = np.linspace(-sy / 2, sy / 2, cells + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    verts = np.stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)], axis=1)
    faces = []
    for i in range(cells):
        for j in range(cells):
            a = i * (cells + 1) + j
            b = a + 1
            c = a + cells + 1
            d = c + 1
            faces += [[a, b, d], [a, d, c]]
    return TriangleMesh(verts + np.asarray(center, dtype=np.float64), np.array(faces))


def lshape_mesh(size: float = 1.0) -> TriangleMesh:
    """Asymmetric L-shaped solid used where orientation must matter.

    Two boxes welded into an L; watertight and chirality-bearing, so no
    cube-group rotation maps it onto itself.
    """
    a = box_mesh(size=(size, 0.4 * size, 0.4 * size), center=(0.0, 0.0, 0.0))
    b = box_mesh(
        size=(0.4 * size, 0.4 * size, 0.8 * size),
        center=(0.3 * size, 0.0, 0.6 * size),
    )
    verts = np.concatenate([a.vertices, b.vertices])
    faces = np.concatenate([a.faces, b.faces + a.n_vertices])
    return TriangleMesh(verts, faces)
