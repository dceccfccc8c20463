"""End-to-end pipeline driver over a generated scene directory.

Stages run in order (align, refine, trajectory, masks, schedule, eval);
every stage persists its artifacts before the next starts and the summary
records a content hash per artifact, so identical configs reproduce
identical summaries. A stage failure stops the run with the stage name and
leaves pipeline_state.json behind for inspection and resumption of the
schedule stage.
"""

import hashlib
import json
import logging
from pathlib import Path

import numpy as np

from . import io as sfio
from . import schemas
from .align import run_phase1, seed_transform
from .backends import make_backend
from .camera import filter_points_by_masks
from .config import PipelineConfig
from .errors import ConfigError, ScenefitError, StageError
from .masking import make_contextual_masks
from .mesh import PointCloud
from .metrics import full_report
from .raster import render_depth
from .refine import refine
from .scenes import load_scene, shade_depth
from .scheduling import plan_segments, run_schedule
from .trajectory import Trajectory, densify_trajectory, select_key_views
from .transforms import Sim3Transform

logger = logging.getLogger(__name__)

STAGES = ("align", "refine", "trajectory", "masks", "schedule", "eval")


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _config_as_dict(cfg: PipelineConfig) -> dict:
    import dataclasses

    return dataclasses.asdict(cfg)


class _Run:
    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.out = Path(cfg.out_dir)
        self.stages = []
        self.metrics = {}

    def record(self, stage: str, paths) -> None:
        artifacts = [
            {"path": str(Path(p).relative_to(self.out)), "sha256": _sha256_file(Path(p))}
            for p in paths
        ]
        artifacts.sort(key=lambda a: a["path"])
        self.stages.append({"name": stage, "artifacts": artifacts})
        state = {
            "completed_stages": [s["name"] for s in self.stages],
            "failed_stage": None,
        }
        (self.out / "pipeline_state.json").write_text(json.dumps(state, indent=2))

    def fail(self, stage: str, error: Exception) -> None:
        state = {
            "completed_stages": [s["name"] for s in self.stages],
            "failed_stage": stage,
            "error": str(error),
        }
        (self.out / "pipeline_state.json").write_text(json.dumps(state, indent=2))


def pipeline_run(cfg: PipelineConfig) -> Path:
    """Execute all stages; returns the artifacts directory.

    Raises:
        ConfigError: invalid inputs, before any stage runs.
        StageError: a stage failed; partial artifacts remain on disk.
    """
    if not cfg.scene_dir:
        raise ConfigError("config must set scene_dir")
    if not cfg.out_dir:
        raise ConfigError("config must set out_dir")
    scene_dir = Path(cfg.scene_dir)
    manifest_path = scene_dir / "scene.json"
    if not manifest_path.exists():
        raise ConfigError(f"scene manifest not found: {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    schemas.validate("scene_manifest", manifest)
    for key in ("asset_mesh", "scene_mesh", "scene_cloud", "cameras"):
        if not (scene_dir / manifest["files"][key]).exists():
            raise ConfigError(f"scene file missing: {manifest['files'][key]}")

    run = _Run(cfg)
    run.out.mkdir(parents=True, exist_ok=True)
    scene = load_scene(scene_dir)
    pairs = scene.view_mask_pairs()

    # --- align ---
    try:
        ref_views = [pairs[i] for i in cfg.align.ref_view_indices if i < len(pairs)]
        mono = scene.monocular_cloud()
        phase1 = run_phase1(
            scene.asset_mesh,
            mono,
            ref_views,
            max_iters=cfg.align.max_iters,
            convergence_eps=cfg.align.convergence_eps,
        )
        p1_path = run.out / "phase1.json"
        p1_doc = {"version": 1, **phase1.to_dict()}
        schemas.validate("phase1_result", p1_doc)
        p1_path.write_text(json.dumps(p1_doc, indent=2))
        run.record("align", [p1_path])
    except ScenefitError as exc:
        run.fail("align", exc)
        raise StageError("align", str(exc)) from exc

    # --- refine ---
    try:
        keep = filter_points_by_masks(
            scene.scene_cloud.points, pairs, min_views=max(2, len(pairs) - 1)
        )
        region = PointCloud(scene.scene_cloud.points[keep])
        init = seed_transform(scene.asset_mesh, phase1.transform.rotation, region)
        final, trace = refine(scene.asset_mesh, region, pairs, init, cfg.refine)
        if trace.aborted:
            raise StageError("refine", trace.abort_reason or "refinement aborted")
        t_path = run.out / "transform.json"
        t_doc = {"version": 1, **final.to_dict()}
        schemas.validate("sim3_transform", t_doc)
        t_path.write_text(json.dumps(t_doc, indent=2))
        trace_path = run.out / "refine_trace.csv"
        trace.write_csv(trace_path)
        run.record("refine", [t_path, trace_path])
    except ScenefitError as exc:
        run.fail("refine", exc)
        raise StageError("refine", str(exc)) from exc

    # --- trajectory ---
    try:
        aim = scene.asset_mesh.transformed(final).vertices.mean(axis=0)
        keys = select_key_views(scene.cameras, aim, min(cfg.trajectory.key_count, len(scene.cameras)))
        traj = densify_trajectory(keys, cfg.trajectory.rho_max)
        traj_path = run.out / "trajectory.json"
        doc = [v.to_dict() for v in traj.views]
        schemas.validate("cameras", doc)
        traj_path.write_text(json.dumps(doc, indent=2))
        run.record("trajectory", [traj_path])
    except ScenefitError as exc:
        run.fail("trajectory", exc)
        raise StageError("trajectory", str(exc)) from exc

    # --- masks ---
    try:
        cmasks = make_contextual_masks(
            scene.asset_mesh, final, traj,
            dilation_px=cfg.masks.dilation_px, shadow_px=cfg.masks.shadow_px,
        )
        mask_dir = run.out / "contextual_masks"
        mask_dir.mkdir(exist_ok=True)
        mask_paths = []
        for cm in cmasks:
            p_base = mask_dir / f"base_{cm.frame_index:04d}.png"
            p_dil = mask_dir / f"dilated_{cm.frame_index:04d}.png"
            sfio.save_mask_png(cm.base, p_base)
            sfio.save_mask_png(cm.dilated, p_dil)
            mask_paths += [p_base, p_dil]
        run.record("masks", mask_paths)
    except ScenefitError as exc:
        run.fail("masks", exc)
        raise StageError("masks", str(exc)) from exc

    # --- schedule ---
    try:
        identity = Sim3Transform.identity()
        frames = []
        frames_dir = run.out / "frames"
        frames_dir.mkdir(exist_ok=True)
        for i, cam in enumerate(traj.views):
            depth = render_depth([(scene.scene_mesh, identity), (scene.asset_mesh, final)], cam)
            frame = shade_depth(depth)
            frames.append(frame)
            sfio.save_rgb_png(frame, frames_dir / f"frame_{i:04d}.png")
        n = len(frames)
        length = min(cfg.schedule.length, n)
        overlap = min(cfg.schedule.overlap, length - 1)
        plan = plan_segments(n, length, overlap)
        backend = make_backend(cfg.backend_spec())
        edited_dir = run.out / "edited"
        edited_dir.mkdir(exist_ok=True)
        edited = run_schedule(
            frames, cmasks, plan, cfg.schedule.prompt, backend,
            retries=cfg.schedule.retries, checkpoint_dir=run.out / "schedule_ckpt",
        )
        frame_files = []
        hashes = []
        for i, frame in enumerate(edited):
            p = edited_dir / f"frame_{i:04d}.png"
            sfio.save_rgb_png(frame, p)
            frame_files.append(str(p.relative_to(run.out)))
            hashes.append(hashlib.sha256(np.ascontiguousarray(frame).tobytes()).hexdigest())
        sched_doc = {
            "version": 1,
            "n_frames": n,
            "length": length,
            "overlap": overlap,
            "prompt": cfg.schedule.prompt,
            "backend": cfg.backend_spec(),
            "segments": [list(s) for s in plan.segments],
            "frames": frame_files,
            "frame_hashes": hashes,
        }
        schemas.validate("schedule_manifest", sched_doc)
        sched_path = run.out / "schedule_manifest.json"
        sched_path.write_text(json.dumps(sched_doc, indent=2))
        run.record("schedule", [sched_path, *sorted(edited_dir.iterdir())])
    except ScenefitError as exc:
        run.fail("schedule", exc)
        raise StageError("schedule", str(exc)) from exc

    # --- eval ---
    try:
        report = full_report(
            scene.asset_mesh, final,
            scene.asset_mesh, scene.gt_transform,
            pairs, voxel_res=cfg.eval.voxel_res,
        )
        doc = report.to_dict()
        schemas.validate("iou_report", doc)
        eval_path = run.out / "iou_report.json"
        eval_path.write_text(json.dumps(doc, indent=2))
        run.record("eval", [eval_path])
        run.metrics = {
            "mean_2d_iou": doc["mean_2d"],
            "iou_3d": doc["iou_3d"],
            "phase1_residual": phase1.residual,
        }
    except ScenefitError as exc:
        run.fail("eval", exc)
        raise StageError("eval", str(exc)) from exc

    summary = {
        "version": 1,
        "config": _config_as_dict(cfg),
        "stages": run.stages,
        "metrics": run.metrics,
    }
    schemas.validate("run_summary", summary)
    (run.out / "summary.json").write_text(json.dumps(summary, indent=2))
    logger.info("pipeline complete: %s", run.out / "summary.json")
    return run.out
