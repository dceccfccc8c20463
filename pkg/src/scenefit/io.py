"""File formats: OBJ/PLY meshes, PLY/XYZ clouds, PNG depth/masks, camera JSON.

Depth maps travel as 16-bit grayscale PNGs with a JSON sidecar recording the
scale in scene units per gray level; masks as 8-bit PNGs where any nonzero
value reads as 1. PLY is binary little-endian only.
"""

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .camera import CameraView
from .errors import ScenefitError
from .mesh import PointCloud, TriangleMesh


class FileFormatError(ScenefitError, ValueError):
    """Unparseable or unsupported input file."""


# --------------------------------------------------------------------------
# OBJ

def load_obj(path) -> TriangleMesh:
    vertices = []
    faces = []
    with open(path, "r") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                vertices.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(p.split("/")[0]) for p in parts[1:]]
                idx = [i - 1 if i > 0 else len(vertices) + i for i in idx]
                for k in range(1, len(idx) - 1):  # fan-triangulate n-gons
                    faces.append([idx[0], idx[k], idx[k + 1]])
    if not vertices:
        raise FileFormatError(f"no vertices in OBJ file {path}")
    return TriangleMesh(np.array(vertices), np.array(faces).reshape(-1, 3))


def save_obj(mesh: TriangleMesh, path) -> None:
    with open(path, "w") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


# --------------------------------------------------------------------------
# PLY (binary little-endian)

_PLY_TYPES = {
    "char": "b", "uchar": "B", "int8": "b", "uint8": "B",
    "short": "h", "ushort": "H", "int16": "h", "uint16": "H",
    "int": "i", "uint": "I", "int32": "i", "uint32": "I",
    "float": "f", "float32": "f", "double": "d", "float64": "d",
}


def _parse_ply_header(fh):
    if fh.readline().strip() != b"ply":
        raise FileFormatError("not a PLY file")
    fmt = fh.readline().split()
    if fmt[:2] != [b"format", b"binary_little_endian"]:
        raise FileFormatError("only binary little-endian PLY is supported")
    elements = []  # (name, count, [(prop_kind, codes, name)])
    while True:
        line = fh.readline()
        if not line:
            raise FileFormatError("unterminated PLY header")
        parts = line.split()
        if parts[0] == b"end_header":
            break
        if parts[0] == b"comment":
            continue
        if parts[0] == b"element":
            elements.append((parts[1].decode(), int(parts[2]), []))
        elif parts[0] == b"property":
            if parts[1] == b"list":
                count_t = _PLY_TYPES[parts[2].decode()]
                item_t = _PLY_TYPES[parts[3].decode()]
                elements[-1][2].append(("list", (count_t, item_t), parts[4].decode()))
            else:
                elements[-1][2].append(("scalar", _PLY_TYPES[parts[1].decode()], parts[2].decode()))
    return elements


def _read_ply(path):
    with open(path, "rb") as fh:
        elements = _parse_ply_header(fh)
        data = {}
        for name, count, props in elements:
            if all(kind == "scalar" for kind, _, _ in props):
                fmt = "<" + "".join(code for _, code, _ in props)
                size = struct.calcsize(fmt)
                raw = fh.read(size * count)
                rows = list(struct.iter_unpack(fmt, raw)) if count else []
                cols = {p[2]: np.array([r[i] for r in rows]) for i, p in enumerate(props)}
                data[name] = cols
            else:
                # list properties (faces): parse record by record
                lists = {p[2]: [] for p in props if p[0] == "list"}
                for _ in range(count):
                    for kind, codes, pname in props:
                        if kind == "scalar":
                            struct.unpack(
                                "<" + codes, fh.read(struct.calcsize(codes))
                            )
                        else:
                            count_t, item_t = codes
                            (n,) = struct.unpack("<" + count_t, fh.read(struct.calcsize(count_t)))
                            vals = struct.unpack(
                                "<" + item_t * n, fh.read(struct.calcsize(item_t) * n)
                            )
                            lists[pname].append(vals)
                data[name] = lists
    return data


def load_ply_mesh(path) -> TriangleMesh:
    data = _read_ply(path)
    if "vertex" not in data:
        raise FileFormatError(f"PLY file {path} has no vertex element")
    v = data["vertex"]
    verts = np.stack([v["x"], v["y"], v["z"]], axis=1)
    normals = None
    if {"nx", "ny", "nz"} <= set(v):
        normals = np.stack([v["nx"], v["ny"], v["nz"]], axis=1)
    faces = []
    if "face" in data:
        key = "vertex_indices" if "vertex_indices" in data["face"] else "vertex_index"
        for poly in data["face"][key]:
            for k in range(1, len(poly) - 1):
                faces.append([poly[0], poly[k], poly[k + 1]])
    return TriangleMesh(verts, np.array(faces, dtype=np.int64).reshape(-1, 3), normals)


def save_ply_mesh(mesh: TriangleMesh, path) -> None:
    with open(path, "wb") as fh:
        header = [
            "ply",
            "format binary_little_endian 1.0",
            f"element vertex {mesh.n_vertices}",
            "property double x",
            "property double y",
            "property double z",
            f"element face {mesh.n_faces}",
            "property list uchar int vertex_indices",
            "end_header",
        ]
        fh.write(("\n".join(header) + "\n").encode())
        fh.write(np.ascontiguousarray(mesh.vertices, dtype="<f8").tobytes())
        for f in mesh.faces:
            fh.write(struct.pack("<Biii", 3, int(f[0]), int(f[1]), int(f[2])))


def load_ply_cloud(path) -> PointCloud:
    data = _read_ply(path)
    if "vertex" not in data:
        raise FileFormatError(f"PLY file {path} has no vertex element")
    v = data["vertex"]
    pts = np.stack([v["x"], v["y"], v["z"]], axis=1)
    normals = None
    if {"nx", "ny", "nz"} <= set(v):
        normals = np.stack([v["nx"], v["ny"], v["nz"]], axis=1)
    return PointCloud(pts, normals)


def save_ply_cloud(cloud: PointCloud, path) -> None:
    with open(path, "wb") as fh:
        props = ["property double x", "property double y", "property double z"]
        cols = [cloud.points]
        if cloud.normals is not None:
            props += ["property double nx", "property double ny", "property double nz"]
            cols.append(cloud.normals)
        header = [
            "ply",
            "format binary_little_endian 1.0",
            f"element vertex {len(cloud)}",
            *props,
            "end_header",
        ]
        fh.write(("\n".join(header) + "\n").encode())
        fh.write(np.ascontiguousarray(np.concatenate(cols, axis=1), dtype="<f8").tobytes())


# --------------------------------------------------------------------------
# XYZ text clouds

def load_xyz(path) -> PointCloud:
    pts = np.loadtxt(path, dtype=np.float64, ndmin=2)
    if pts.shape[1] < 3:
        raise FileFormatError(f"XYZ file {path} has fewer than 3 columns")
    normals = pts[:, 3:6] if pts.shape[1] >= 6 else None
    return PointCloud(pts[:, :3], normals)


def save_xyz(cloud: PointCloud, path) -> None:
    cols = cloud.points
    if cloud.normals is not None:
        cols = np.concatenate([cloud.points, cloud.normals], axis=1)
    np.savetxt(path, cols, fmt="%.17g")


def load_point_cloud(path) -> PointCloud:
    """Dispatch on extension: .ply binary or whitespace XYZ text."""
    if str(path).lower().endswith(".ply"):
        return load_ply_cloud(path)
    return load_xyz(path)


def load_mesh(path) -> TriangleMesh:
    if str(path).lower().endswith(".ply"):
        return load_ply_mesh(path)
    return load_obj(path)


# --------------------------------------------------------------------------
# Depth and mask PNGs

def save_depth_png(depth: np.ndarray, path, scale: float | None = None) -> None:
    """16-bit grayscale PNG plus a JSON sidecar with the quantization scale.

    `scale` is scene units per gray level; when omitted it is chosen so the
    depth range fills the 16-bit budget. Zero stays zero (invalid sentinel).
    """
    depth = np.asarray(depth, dtype=np.float64)
    if scale is None:
        peak = float(depth.max())
        scale = peak / 65535.0 if peak > 0 else 1.0
    levels = np.round(depth / scale).astype(np.int64)
    levels = np.clip(levels, 0, 65535).astype(np.uint16)
    # never let a valid depth collapse into the invalid sentinel
    levels[(depth > 0) & (levels == 0)] = 1
    Image.fromarray(levels, mode="I;16").save(path)
    sidecar = Path(str(path) + ".json")
    sidecar.write_text(json.dumps({"scale": scale}))


def load_depth_png(path) -> np.ndarray:
    img = Image.open(path)
    levels = np.asarray(img, dtype=np.uint16).astype(np.float64)
    sidecar = Path(str(path) + ".json")
    if not sidecar.exists():
        raise FileFormatError(f"missing depth sidecar {sidecar}")
    scale = float(json.loads(sidecar.read_text())["scale"])
    return levels * scale


def save_mask_png(mask: np.ndarray, path) -> None:
    mask = (np.asarray(mask) != 0).astype(np.uint8) * 255
    Image.fromarray(mask, mode="L").save(path)


def load_mask_png(path) -> np.ndarray:
    img = Image.open(path).convert("L")
    return (np.asarray(img) != 0).astype(np.uint8)


def save_rgb_png(frame: np.ndarray, path) -> None:
    Image.fromarray(np.asarray(frame, dtype=np.uint8), mode="RGB").save(path)


def load_rgb_png(path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("RGB"), dtype=np.uint8)


# --------------------------------------------------------------------------
# Camera JSON

def load_cameras(path) -> list[CameraView]:
    entries = json.loads(Path(path).read_text())
    if not isinstance(entries, list):
        raise FileFormatError("camera JSON must be an array of camera objects")
    return [CameraView.from_dict(e) for e in entries]


def save_cameras(cams, path) -> None:
    Path(path).write_text(json.dumps([c.to_dict() for c in cams], indent=2))
