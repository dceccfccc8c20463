"""Synthetic ground-truth scenes for end-to-end and ablation testing.

A scene is a ground plane with clutter primitives, an asset mesh placed at
a known similarity transform, a camera ring, and the rendered ground-truth
depth maps and silhouette masks per view. Hard scenes add a partial
occluder in front of the reference view, background floaters, and 20%
multiplicative depth noise, which is what degrades single-view alignment.

Everything is driven by one seeded generator, so regenerating with the same
seed is byte-identical on disk.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .camera import CameraView, look_at, unproject_depth
from .errors import ConfigError
from .mesh import PointCloud, TriangleMesh
from .primitives import box_mesh, icosphere, lshape_mesh, plane_mesh
from .raster import rasterize_silhouette, render_depth
from .transforms import Sim3Transform, quat_from_axis_angle, quat_mul
from .align import cube_group_rotations

DIFFICULTIES = ("easy", "hard")

DEPTH_NOISE_STD = 0.2  # relative, hard scenes only
CLOUD_JITTER_STD = 0.01


@dataclass(frozen=True)
class SyntheticScene:
    seed: int
    difficulty: str
    scene_mesh: TriangleMesh  # plane + clutter, world frame
    asset_mesh: TriangleMesh  # canonical asset at the origin
    gt_transform: Sim3Transform
    cameras: list
    gt_depths: list  # per view, 0 = invalid
    gt_masks: list  # per view, exact asset silhouettes at the GT pose
    scene_cloud: PointCloud  # scene + placed asset surface samples
    reference_index: int = 0

    def view_mask_pairs(self):
        return list(zip(self.cameras, self.gt_masks))

    def monocular_cloud(self) -> PointCloud:
        """Asset-region point cloud unprojected from the reference view."""
        cam = self.cameras[self.reference_index]
        return unproject_depth(
            self.gt_depths[self.reference_index], cam, self.gt_masks[self.reference_index]
        )


def _merge(meshes) -> TriangleMesh:
    verts = []
    faces = []
    offset = 0
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.faces + offset)
        offset += m.n_vertices
    return TriangleMesh(np.concatenate(verts), np.concatenate(faces))


def generate_scene(
    seed: int,
    difficulty: str = "easy",
    n_cameras: int = 8,
    image_size: int = 96,
    focal: float = 110.0,
) -> SyntheticScene:
    """Build one deterministic scene; see the module docstring for layout."""
    if difficulty not in DIFFICULTIES:
        raise ConfigError(f"difficulty must be one of {DIFFICULTIES}")
    rng = np.random.default_rng(seed)

    asset = lshape_mesh(1.0)
    cube_q = cube_group_rotations()[int(rng.integers(0, 24))]
    tilt_axis = rng.normal(size=3)
    tilt = quat_from_axis_angle(tilt_axis, np.deg2rad(rng.uniform(1.0, 4.0)))
    q_gt = quat_mul(tilt, cube_q)
    s_gt = float(rng.uniform(0.9, 1.25))
    # place well away from the asset's canonical frame at the origin, the
    # way a generated asset lands nowhere near its target spot
    angle = rng.uniform(0.0, 2.0 * np.pi)
    radius = rng.uniform(1.2, 2.2)
    xy = radius * np.array([np.cos(angle), np.sin(angle)])
    gt = Sim3Transform(scale=s_gt, rotation=q_gt, translation=np.array([xy[0], xy[1], 0.0]))
    # settle the asset onto the plane: shift so its AABB bottom sits at z=0
    placed_lo, _ = asset.transformed(gt).aabb()
    gt = Sim3Transform(
        scale=s_gt, rotation=q_gt,
        translation=gt.translation - np.array([0.0, 0.0, placed_lo[2]]),
    )
    placed = asset.transformed(gt)
    asset_center = placed.vertices.mean(axis=0)

    parts = [plane_mesh(size=(12.0, 12.0), cells=4)]
    clutter_spots = []
    for _ in range(3):
        # clutter stays clear of the asset footprint
        for _attempt in range(20):
            pos = rng.uniform(-4.0, 4.0, size=2)
            if np.linalg.norm(pos - asset_center[:2]) > 2.2:
                break
        size = rng.uniform(0.4, 0.9)
        if rng.random() < 0.5:
            parts.append(box_mesh(size=(size, size, size), center=(pos[0], pos[1], size / 2)))
        else:
            parts.append(icosphere(size / 2, center=(pos[0], pos[1], size / 2), subdivisions=1))
        clutter_spots.append(pos)

    aim = asset_center + np.array([0.0, 0.0, 0.1])
    ring_radius = 5.0
    cameras = []
    for i in range(n_cameras):
        az = 2.0 * np.pi * i / n_cameras
        elev = np.deg2rad(28.0 if i % 2 == 0 else 40.0)
        eye = aim + ring_radius * np.array(
            [np.cos(az) * np.cos(elev), np.sin(az) * np.cos(elev), np.sin(elev)]
        )
        cameras.append(
            look_at(
                eye, aim,
                fx=focal, fy=focal, cx=image_size / 2, cy=image_size / 2,
                width=image_size, height=image_size,
            )
        )

    if difficulty == "hard":
        # partial occluder between the reference camera and the asset
        toward = cameras[0].center() - asset_center
        toward[2] = 0.0
        toward /= max(np.linalg.norm(toward), 1e-9)
        occ_pos = asset_center[:2] + toward[:2] * 1.4
        parts.append(box_mesh(size=(0.7, 0.7, 1.1), center=(occ_pos[0], occ_pos[1], 0.55)))

    scene_mesh = _merge(parts)

    identity = Sim3Transform.identity()
    gt_depths = []
    gt_masks = []
    for cam in cameras:
        depth = render_depth([(scene_mesh, identity), (asset, gt)], cam)
        if difficulty == "hard":
            noise = 1.0 + DEPTH_NOISE_STD * rng.standard_normal(depth.shape)
            depth = np.where(depth > 0, np.maximum(depth * noise, 1e-3), 0.0)
        gt_depths.append(depth)
        gt_masks.append(rasterize_silhouette(asset, gt, cam))

    pts = [
        plane_mesh(size=(12.0, 12.0), cells=4).sample_surface(2500, seed=seed + 1),
        placed.sample_surface(1500, seed=seed + 2),
    ]
    for j, part in enumerate(parts[1:]):
        pts.append(part.sample_surface(400, seed=seed + 3 + j))
    cloud = np.concatenate(pts)
    cloud += rng.normal(scale=CLOUD_JITTER_STD, size=cloud.shape)
    if difficulty == "hard":
        floaters = rng.uniform(-5.0, 5.0, size=(400, 3))
        floaters[:, 2] = np.abs(floaters[:, 2]) * 0.6
        cloud = np.concatenate([cloud, floaters])

    return SyntheticScene(
        seed=seed,
        difficulty=difficulty,
        scene_mesh=scene_mesh,
        asset_mesh=asset,
        gt_transform=gt,
        cameras=cameras,
        gt_depths=gt_depths,
        gt_masks=gt_masks,
        scene_cloud=PointCloud(cloud),
    )


def shade_depth(depth: np.ndarray) -> np.ndarray:
    """Deterministic grayscale RGB visualization of a depth map.

    Inverse depth on a fixed [0, 1] ramp; invalid pixels render black.
    Serves as the frame content for the mock inpainting stage.
    """
    depth = np.asarray(depth, dtype=np.float64)
    shade = np.zeros(depth.shape)
    valid = depth > 0
    shade[valid] = 1.0 / (1.0 + depth[valid] * 0.25)
    img = np.clip(shade * 255.0, 0, 255).astype(np.uint8)
    return np.stack([img, img, img], axis=2)


def save_scene(scene: SyntheticScene, directory) -> dict:
    """Write every scene artifact under `directory`; returns the manifest."""
    from . import io as sfio

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    sfio.save_ply_mesh(scene.scene_mesh, directory / "scene_mesh.ply")
    sfio.save_obj(scene.asset_mesh, directory / "asset_mesh.obj")
    sfio.save_ply_cloud(scene.scene_cloud, directory / "scene_cloud.ply")
    sfio.save_cameras(scene.cameras, directory / "cameras.json")
    (directory / "gt_transform.json").write_text(json.dumps(scene.gt_transform.to_dict(), indent=2))
    depth_dir = directory / "depth"
    mask_dir = directory / "masks"
    depth_dir.mkdir(exist_ok=True)
    mask_dir.mkdir(exist_ok=True)
    peak = max(float(d.max()) for d in scene.gt_depths)
    for i, (d, m) in enumerate(zip(scene.gt_depths, scene.gt_masks)):
        sfio.save_depth_png(d, depth_dir / f"view_{i:03d}.png", scale=peak / 65535.0)
        sfio.save_mask_png(m, mask_dir / f"view_{i:03d}.png")
    manifest = {
        "version": 1,
        "seed": scene.seed,
        "difficulty": scene.difficulty,
        "n_views": len(scene.cameras),
        "reference_index": scene.reference_index,
        "files": {
            "scene_mesh": "scene_mesh.ply",
            "asset_mesh": "asset_mesh.obj",
            "scene_cloud": "scene_cloud.ply",
            "cameras": "cameras.json",
            "gt_transform": "gt_transform.json",
            "depth_dir": "depth",
            "mask_dir": "masks",
        },
    }
    (directory / "scene.json").write_text(json.dumps(manifest, indent=2))
    return manifest


def load_scene(directory) -> SyntheticScene:
    """Reload a scene saved by save_scene (depths carry PNG quantization)."""
    from . import io as sfio

    directory = Path(directory)
    manifest = json.loads((directory / "scene.json").read_text())
    files = manifest["files"]
    cameras = sfio.load_cameras(directory / files["cameras"])
    gt = Sim3Transform.from_dict(json.loads((directory / files["gt_transform"]).read_text()))
    depths = []
    masks = []
    for i in range(manifest["n_views"]):
        depths.append(sfio.load_depth_png(directory / files["depth_dir"] / f"view_{i:03d}.png"))
        masks.append(sfio.load_mask_png(directory / files["mask_dir"] / f"view_{i:03d}.png"))
    return SyntheticScene(
        seed=manifest["seed"],
        difficulty=manifest["difficulty"],
        scene_mesh=sfio.load_ply_mesh(directory / files["scene_mesh"]),
        asset_mesh=sfio.load_obj(directory / files["asset_mesh"]),
        gt_transform=gt,
        cameras=cameras,
        gt_depths=depths,
        gt_masks=masks,
        scene_cloud=sfio.load_ply_cloud(directory / files["scene_cloud"]),
        reference_index=manifest["reference_index"],
    )
