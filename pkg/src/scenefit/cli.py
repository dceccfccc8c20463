"""Command-line interface.

Exit codes: 0 success, 2 validation/configuration error, 3 stage failure
inside the pipeline. Every subcommand is deterministic given its inputs and
seed.
"""

import functools
import json
import logging
import sys
from pathlib import Path

import click
import numpy as np

from . import io as sfio
from . import schemas
from .align import run_phase1
from .backends import make_backend
from .camera import filter_points_by_masks, unproject_depth
from .config import BACKEND_ENV_VAR, PipelineConfig, config_from_dict, load_config
from .errors import ConfigError, ScenefitError, StageError
from .masking import make_contextual_masks
from .mesh import PointCloud
from .metrics import full_report
from .pipeline import pipeline_run
from .refine import RefineConfig, refine
from .scenes import generate_scene, save_scene
from .scheduling import plan_segments, run_schedule
from .trajectory import (
    SphericalSamplingSpec,
    Trajectory,
    angular_density,
    densify_trajectory,
    sample_sphere,
    select_key_views,
)
from .transforms import Sim3Transform

EXIT_VALIDATION = 2
EXIT_STAGE = 3

logger = logging.getLogger(__name__)


def _guard(fn):
    """Map package errors onto the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except StageError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_STAGE)
        except (ScenefitError, FileNotFoundError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_VALIDATION)

    return wrapper


def _load_masks_dir(path) -> list:
    files = sorted(p for p in Path(path).iterdir() if p.suffix.lower() == ".png")
    if not files:
        raise ConfigError(f"no PNG masks in {path}")
    return [sfio.load_mask_png(p) for p in files]


def _load_transform(path) -> Sim3Transform:
    return Sim3Transform.from_dict(json.loads(Path(path).read_text()))


@click.group()
@click.option("--verbose", is_flag=True, help="Enable info-level logging.")
def main(verbose):
    """Mesh-to-scene registration, trajectory synthesis, and inpainting
    orchestration."""
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )


@main.command()
@click.option("--mesh", "mesh_path", required=True, type=click.Path(exists=True))
@click.option("--cameras", "cameras_path", type=click.Path(exists=True),
              help="Camera JSON array; required unless --cloud is given.")
@click.option("--depth", "depth_path", type=click.Path(exists=True),
              help="16-bit depth PNG (with .json sidecar) of the reference view.")
@click.option("--cloud", "cloud_path", type=click.Path(exists=True),
              help="Point-cloud target (.ply or .xyz) instead of depth+camera.")
@click.option("--masks-dir", type=click.Path(exists=True), required=True,
              help="Directory of reference masks, sorted to match the cameras.")
@click.option("--ref-index", default=0, show_default=True,
              help="Camera index the depth map belongs to.")
@click.option("--max-iters", default=50, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@_guard
def align(mesh_path, cameras_path, depth_path, cloud_path, masks_dir, ref_index, max_iters, out_path):
    """First-phase alignment: orientation resolution plus Sim(3) ICP."""
    mesh = sfio.load_mesh(mesh_path)
    masks = _load_masks_dir(masks_dir)
    if cloud_path:
        target = sfio.load_point_cloud(cloud_path)
        cams = sfio.load_cameras(cameras_path) if cameras_path else []
    else:
        if not (cameras_path and depth_path):
            raise ConfigError("need --cloud, or both --cameras and --depth")
        cams = sfio.load_cameras(cameras_path)
        depth = sfio.load_depth_png(depth_path)
        mask = masks[ref_index] if ref_index < len(masks) else None
        target = unproject_depth(depth, cams[ref_index], mask)
    ref_views = list(zip(cams, masks)) if cams else []
    result = run_phase1(mesh, target, ref_views, max_iters=max_iters)
    doc = {"version": 1, **result.to_dict()}
    schemas.validate("phase1_result", doc)
    Path(out_path).write_text(json.dumps(doc, indent=2))
    click.echo(f"wrote {out_path} (residual {result.residual:.4g})")


@main.command(name="refine")
@click.option("--mesh", "mesh_path", required=True, type=click.Path(exists=True))
@click.option("--scene-cloud", required=True, type=click.Path(exists=True))
@click.option("--cameras", "cameras_path", required=True, type=click.Path(exists=True))
@click.option("--masks-dir", required=True, type=click.Path(exists=True))
@click.option("--phase1", "phase1_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True),
              help="TOML/JSON config; its [refine] section applies.")
@click.option("--crop-to-masks/--no-crop-to-masks", default=True, show_default=True,
              help="Restrict the scene cloud to the multi-view mask hull.")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--trace", "trace_path", type=click.Path())
@_guard
def refine_cmd(mesh_path, scene_cloud, cameras_path, masks_dir, phase1_path,
               config_path, crop_to_masks, out_path, trace_path):
    """Second-phase differentiable refinement of the 7-DoF pose."""
    mesh = sfio.load_mesh(mesh_path)
    cloud = sfio.load_point_cloud(scene_cloud)
    cams = sfio.load_cameras(cameras_path)
    masks = _load_masks_dir(masks_dir)
    if len(masks) != len(cams):
        raise ConfigError(f"{len(cams)} cameras but {len(masks)} masks")
    pairs = list(zip(cams, masks))
    cfg = load_config(config_path).refine if config_path else RefineConfig()
    p1_doc = json.loads(Path(phase1_path).read_text())
    init = Sim3Transform.from_dict(p1_doc)
    if crop_to_masks:
        keep = filter_points_by_masks(cloud.points, pairs, min_views=max(2, len(pairs) - 1))
        if keep.sum() >= 3:
            from .align import seed_transform

            cloud = PointCloud(cloud.points[keep])
            init = seed_transform(mesh, init.rotation, cloud)
    final, trace = refine(mesh, cloud, pairs, init, cfg)
    if trace.aborted:
        raise StageError("refine", trace.abort_reason or "refinement aborted")
    doc = {"version": 1, **final.to_dict()}
    schemas.validate("sim3_transform", doc)
    Path(out_path).write_text(json.dumps(doc, indent=2))
    if trace_path:
        trace.write_csv(trace_path)
    click.echo(f"wrote {out_path}")


@main.command()
@click.option("--cameras", "cameras_path", required=True, type=click.Path(exists=True),
              help="Key views (ordered) or a pool to select keys from.")
@click.option("--rho-max", required=True, type=float,
              help="Angular density bound, radians per step (half-angle convention).")
@click.option("--select-keys", type=int, help="Pick this many key views first.")
@click.option("--scene-center", default="0,0,0", show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@_guard
def trajectory(cameras_path, rho_max, select_keys, scene_center, out_path):
    """Densify key views into a trajectory with bounded angular density."""
    cams = sfio.load_cameras(cameras_path)
    center = np.array([float(x) for x in scene_center.split(",")])
    if select_keys:
        cams = select_key_views(cams, center, select_keys)
    traj = densify_trajectory(cams, rho_max)
    doc = [v.to_dict() for v in traj.views]
    schemas.validate("cameras", doc)
    Path(out_path).write_text(json.dumps(doc, indent=2))
    click.echo(f"wrote {out_path}: {len(traj)} views, rho={traj.rho:.5f}")


@main.command(name="sample-sphere")
@click.option("--radius", required=True, type=float)
@click.option("--theta-count", default=8, show_default=True)
@click.option("--phi-count", default=12, show_default=True)
@click.option("--center", default="0,0,0", show_default=True)
@click.option("--budget", type=int, help="Must equal theta*phi when given.")
@click.option("--out", "out_path", required=True, type=click.Path())
@_guard
def sample_sphere_cmd(radius, theta_count, phi_count, center, budget, out_path):
    """Stratified spherical view sampling aimed at a center point."""
    spec = SphericalSamplingSpec(
        radius=radius,
        theta_count=theta_count,
        phi_count=phi_count,
        center=np.array([float(x) for x in center.split(",")]),
        budget=budget,
    )
    views = sample_sphere(spec)
    doc = [v.to_dict() for v in views]
    schemas.validate("cameras", doc)
    Path(out_path).write_text(json.dumps(doc, indent=2))
    click.echo(f"wrote {out_path}: {len(views)} views")


@main.command()
@click.option("--mesh", "mesh_path", required=True, type=click.Path(exists=True))
@click.option("--transform", "transform_path", required=True, type=click.Path(exists=True))
@click.option("--trajectory", "trajectory_path", required=True, type=click.Path(exists=True))
@click.option("--dilation", default=3, show_default=True)
@click.option("--shadow", default=2, show_default=True)
@click.option("--out-dir", required=True, type=click.Path())
@_guard
def masks(mesh_path, transform_path, trajectory_path, dilation, shadow, out_dir):
    """Contextual masks (silhouette + dilation + shadow) per trajectory frame."""
    mesh = sfio.load_mesh(mesh_path)
    pose = _load_transform(transform_path)
    views = sfio.load_cameras(trajectory_path)
    traj = Trajectory(views=views, rho=angular_density([v.q for v in views]) if len(views) > 1 else 0.0)
    cmasks = make_contextual_masks(mesh, pose, traj, dilation_px=dilation, shadow_px=shadow)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for cm in cmasks:
        sfio.save_mask_png(cm.base, out / f"base_{cm.frame_index:04d}.png")
        sfio.save_mask_png(cm.dilated, out / f"dilated_{cm.frame_index:04d}.png")
    click.echo(f"wrote {2 * len(cmasks)} masks to {out_dir}")


@main.command()
@click.option("--frames-dir", required=True, type=click.Path(exists=True))
@click.option("--masks-dir", required=True, type=click.Path(exists=True),
              help="Dilated contextual masks (dilated_*.png or one PNG per frame).")
@click.option("--length", default=33, show_default=True, help="Segment length L.")
@click.option("--overlap", default=9, show_default=True, help="Anchor overlap k.")
@click.option("--prompt", default="", help="Editing instruction for the backend.")
@click.option("--backend", "backend_spec", default="mock:identity", show_default=True,
              help=f"mock:identity, mock:constant[:R,G,B], or a command line; "
                   f"env {BACKEND_ENV_VAR} overrides.")
@click.option("--retries", default=2, show_default=True)
@click.option("--out-dir", required=True, type=click.Path())
@_guard
def schedule(frames_dir, masks_dir, length, overlap, prompt, backend_spec, retries, out_dir):
    """Run the autoregressive overlapping-segment inpainting schedule."""
    import os

    frame_files = sorted(p for p in Path(frames_dir).iterdir() if p.suffix.lower() == ".png")
    if not frame_files:
        raise ConfigError(f"no PNG frames in {frames_dir}")
    frames = [sfio.load_rgb_png(p) for p in frame_files]
    mask_files = sorted(p for p in Path(masks_dir).iterdir() if p.name.startswith("dilated_"))
    if not mask_files:
        mask_files = sorted(p for p in Path(masks_dir).iterdir() if p.suffix.lower() == ".png")
    if len(mask_files) != len(frames):
        raise ConfigError(f"{len(frames)} frames but {len(mask_files)} masks")
    mask_arrays = [sfio.load_mask_png(p) for p in mask_files]

    n = len(frames)
    length = min(length, n)
    overlap = min(overlap, length - 1) if length > 1 else 0
    plan = plan_segments(n, length, overlap)
    spec = os.environ.get(BACKEND_ENV_VAR, backend_spec)
    backend = make_backend(spec)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    edited = run_schedule(
        frames, mask_arrays, plan, prompt, backend,
        retries=retries, checkpoint_dir=out / "checkpoint",
    )
    import hashlib

    frame_names = []
    hashes = []
    for i, frame in enumerate(edited):
        p = out / f"frame_{i:04d}.png"
        sfio.save_rgb_png(frame, p)
        frame_names.append(p.name)
        hashes.append(hashlib.sha256(np.ascontiguousarray(frame).tobytes()).hexdigest())
    manifest = {
        "version": 1,
        "n_frames": n,
        "length": length,
        "overlap": overlap,
        "prompt": prompt,
        "backend": spec,
        "segments": [list(s) for s in plan.segments],
        "frames": frame_names,
        "frame_hashes": hashes,
    }
    schemas.validate("schedule_manifest", manifest)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    click.echo(f"wrote {n} edited frames to {out_dir}")


@main.command(name="eval")
@click.option("--mesh", "mesh_path", required=True, type=click.Path(exists=True))
@click.option("--transform", "transform_path", required=True, type=click.Path(exists=True))
@click.option("--gt-mesh", "gt_mesh_path", required=True, type=click.Path(exists=True))
@click.option("--gt-transform", "gt_transform_path", required=True, type=click.Path(exists=True))
@click.option("--cameras", "cameras_path", required=True, type=click.Path(exists=True))
@click.option("--gt-masks-dir", required=True, type=click.Path(exists=True))
@click.option("--voxel-res", default=128, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@_guard
def eval_cmd(mesh_path, transform_path, gt_mesh_path, gt_transform_path,
             cameras_path, gt_masks_dir, voxel_res, out_path):
    """Silhouette and volumetric IoU of a candidate placement vs ground truth."""
    mesh = sfio.load_mesh(mesh_path)
    pose = _load_transform(transform_path)
    gt_mesh = sfio.load_mesh(gt_mesh_path)
    gt_pose = _load_transform(gt_transform_path)
    cams = sfio.load_cameras(cameras_path)
    gt_masks = _load_masks_dir(gt_masks_dir)
    if len(gt_masks) != len(cams):
        raise ConfigError(f"{len(cams)} cameras but {len(gt_masks)} masks")
    report = full_report(mesh, pose, gt_mesh, gt_pose, list(zip(cams, gt_masks)), voxel_res)
    doc = report.to_dict()
    schemas.validate("iou_report", doc)
    Path(out_path).write_text(json.dumps(doc, indent=2))
    click.echo(f"mean 2D IoU {report.mean_2d:.4f}, 3D IoU {report.iou_3d:.4f}")


@main.command(name="gen-scene")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--difficulty", type=click.Choice(["easy", "hard"]), default="easy",
              show_default=True)
@click.option("--out-dir", required=True, type=click.Path())
@_guard
def gen_scene(seed, difficulty, out_dir):
    """Generate a deterministic synthetic ground-truth scene."""
    scene = generate_scene(seed, difficulty)
    manifest = save_scene(scene, out_dir)
    schemas.validate("scene_manifest", manifest)
    click.echo(f"wrote scene (seed={seed}, {difficulty}) to {out_dir}")


@main.command(name="run")
@click.option("--config", "config_path", type=click.Path(exists=True),
              help="TOML/JSON pipeline config.")
@click.option("--scene-dir", type=click.Path(), help="Overrides config scene_dir.")
@click.option("--out-dir", type=click.Path(), help="Overrides config out_dir.")
@_guard
def run_cmd(config_path, scene_dir, out_dir):
    """Full pipeline: align, refine, trajectory, masks, schedule, eval."""
    cfg = load_config(config_path) if config_path else config_from_dict({})
    import dataclasses

    if scene_dir:
        cfg = dataclasses.replace(cfg, scene_dir=scene_dir)
    if out_dir:
        cfg = dataclasses.replace(cfg, out_dir=out_dir)
    out = pipeline_run(cfg)
    click.echo(f"pipeline complete: {out / 'summary.json'}")


if __name__ == "__main__":
    main()
