"""Differentiable 7-DoF pose refinement with a two-stage curriculum.

Stage one (coarse docking) moves all seven parameters under geometric and
silhouette terms, with the rotation increment confined to a cone around the
locked first-phase rotation. Stage two (fine anchoring) freezes rotation,
switches on the interpenetration penalty and the drift regularizers
anchored at the stage boundary, and converges translation and log-scale
only.

The optimizer is plain blockwise gradient descent with per-block adaptive
step sizes and step halving whenever a proposal would raise the loss, which
makes the per-stage descent contract structural rather than hoped-for.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigError, EmptyInputError
from .mesh import (
    PointCloud,
    TriangleMesh,
    cloud_aabb_corners,
    corners_from_bounds,
    estimate_normals,
)
from .raster import rasterize_silhouette
from .transforms import (
    Sim3Transform,
    quat_conj,
    quat_from_rotvec,
    quat_log,
    quat_mul,
    quat_to_matrix,
    so3_left_jacobian,
)

logger = logging.getLogger(__name__)

STAGE_COARSE = "coarse"
STAGE_FINE = "fine"

TERM_NAMES = ("l_cd", "l_corner", "l_mask", "l_sdf", "r_q", "r_t", "r_s")


@dataclass(frozen=True)
class RefineConfig:
    """Weights, budgets, and step sizes for the refinement objective."""

    lambda_geo: float = 1.0
    lambda_mask: float = 0.5
    lambda_sdf: float = 10.0
    w_q: float = 1.0
    w_t: float = 1.0
    w_s: float = 1.0
    rotation_cone_deg: float = 10.0
    coarse_iters: int = 200
    fine_iters: int = 200
    step_rot: float = 0.01
    step_t: float = 0.01
    step_s: float = 0.01
    fd_epsilon: float = 1e-5
    # silhouette FD needs steps big enough to move the raster by ~a pixel
    mask_fd_step: float = 0.01
    sample_count: int = 2048
    sample_seed: int = 0
    normal_k: int = 16

    def validate(self) -> "RefineConfig":
        for name in ("lambda_geo", "lambda_mask", "lambda_sdf", "w_q", "w_t", "w_s"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if not 0 <= self.rotation_cone_deg <= 180:
            raise ConfigError("rotation_cone_deg must lie in [0, 180]")
        if self.coarse_iters < 0 or self.fine_iters < 0:
            raise ConfigError("iteration budgets must be non-negative")
        return self


@dataclass(frozen=True)
class PoseParams:
    """Seven optimizable DoF on top of a locked base rotation.

    The effective rotation is R(rot_inc) composed onto base_rotation, so a
    zero increment reproduces the first-phase lock exactly; scale lives in
    log space to stay positive by construction.
    """

    base_rotation: np.ndarray
    rot_inc: np.ndarray = field(default_factory=lambda: np.zeros(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    log_scale: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "rot_inc", np.asarray(self.rot_inc, dtype=np.float64).reshape(3))
        object.__setattr__(
            self, "translation", np.asarray(self.translation, dtype=np.float64).reshape(3)
        )

    @classmethod
    def from_sim3(cls, transform: Sim3Transform) -> "PoseParams":
        return cls(
            base_rotation=transform.rotation,
            translation=transform.translation.copy(),
            log_scale=float(np.log(transform.scale)),
        )

    def rotation_quat(self) -> np.ndarray:
        return quat_mul(quat_from_rotvec(self.rot_inc), self.base_rotation)

    def scale(self) -> float:
        return float(np.exp(self.log_scale))

    def to_sim3(self) -> Sim3Transform:
        return Sim3Transform(
            scale=self.scale(), rotation=self.rotation_quat(), translation=self.translation
        )

    def apply(self, pts) -> np.ndarray:
        m = self.scale() * quat_to_matrix(self.rotation_quat())
        return np.asarray(pts, dtype=np.float64) @ m.T + self.translation

    def vector(self) -> np.ndarray:
        return np.concatenate([self.rot_inc, self.translation, [self.log_scale]])

    def with_vector(self, x) -> "PoseParams":
        x = np.asarray(x, dtype=np.float64)
        return replace(self, rot_inc=x[:3], translation=x[3:6], log_scale=float(x[6]))


def _backprop_to_pose(pose: PoseParams, y: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Chain per-point gradients dL/dy into the 7 pose parameters.

    Uses dy/dt = I, dy/dlog_s = (y - t), and the left-Jacobian relation for
    the rotation increment: dy/dr d = (J_l(r) d) x (y - t).
    """
    ymt = y - pose.translation
    g_t = g.sum(axis=0)
    g_s = float(np.sum(g * ymt))
    g_r = so3_left_jacobian(pose.rot_inc).T @ np.cross(ymt, g).sum(axis=0)
    return np.concatenate([g_r, g_t, [g_s]])


def chamfer_loss(mesh_samples, target: PointCloud, pose: PoseParams, target_tree=None):
    """Symmetric mean-of-squared nearest-neighbor distances, with gradient.

    Correspondences are held fixed per evaluation; the gradient is analytic
    through the similarity transform.

    Returns:
        (loss, grad7)
    """
    samples = mesh_samples.points if isinstance(mesh_samples, PointCloud) else np.asarray(mesh_samples)
    if len(samples) == 0 or len(target) == 0:
        raise EmptyInputError("chamfer needs non-empty point sets")
    tree = target_tree if target_tree is not None else cKDTree(target.points)
    y = pose.apply(samples)
    n = len(y)
    m = len(target)

    d_fwd, nn_fwd = tree.query(y)
    q = target.points[nn_fwd]
    loss_fwd = float(np.mean(d_fwd**2))
    g = 2.0 * (y - q) / n

    _, nn_bwd = cKDTree(y).query(target.points)
    diff = y[nn_bwd] - target.points
    loss_bwd = float(np.mean(np.sum(diff**2, axis=1)))
    np.add.at(g, nn_bwd, 2.0 * diff / m)

    return loss_fwd + loss_bwd, _backprop_to_pose(pose, y, g)


def corner_loss(mesh: TriangleMesh, target_cloud: PointCloud, pose: PoseParams,
                target_corners=None):
    """Mean squared distance between canonically ordered AABB corners.

    The corners of the transformed mesh pair with the corners of the target
    cloud through the shared lexicographic (min/max per axis) order, which
    keeps the term informative even when the volumes are disjoint. The
    gradient flows through the extreme vertices (a subgradient at ties).

    Returns:
        (loss, grad7)
    """
    if mesh.n_vertices == 0:
        raise EmptyInputError("corner loss needs a non-empty mesh")
    tc = target_corners if target_corners is not None else cloud_aabb_corners(target_cloud)
    y = pose.apply(mesh.vertices)
    lo_idx = y.argmin(axis=0)
    hi_idx = y.argmax(axis=0)
    lo = y[lo_idx, np.arange(3)]
    hi = y[hi_idx, np.arange(3)]
    corners = corners_from_bounds(lo, hi)
    diff = corners - tc
    loss = float(np.mean(np.sum(diff**2, axis=1)))

    g = np.zeros_like(y)
    dcorners = 2.0 * diff / 8.0
    for k in range(8):
        for a in range(3):
            vid = hi_idx[a] if (k >> (2 - a)) & 1 else lo_idx[a]
            g[vid, a] += dcorners[k, a]
    return loss, _backprop_to_pose(pose, y, g)


def _mask_term_value(mesh: TriangleMesh, pose: PoseParams, views) -> float:
    total = 0.0
    transform = pose.to_sim3()
    for cam, target in views:
        target = np.asarray(target)
        if not target.any():
            logger.warning("mask view with empty target contributes full loss")
            total += 1.0
            continue
        sil = rasterize_silhouette(mesh, transform, cam)
        inter = np.logical_and(sil, target).sum()
        union = np.logical_or(sil, target).sum()
        iou = inter / union if union > 0 else 0.0
        total += 1.0 - iou
    return total / len(views)


def mask_loss(mesh: TriangleMesh, pose: PoseParams, views, fd_step: float = 0.01):
    """Mean (1 - IoU) against target masks, FD gradient over the 7 DoF.

    The rasterizer is exact and non-differentiable, so the gradient comes
    from central differences; `fd_step` must be large enough to shift the
    silhouette by about a pixel or the quantized loss plateaus.

    Returns:
        (loss, grad7)
    """
    views = list(views)
    if not views:
        raise EmptyInputError("mask loss needs at least one view")
    loss = _mask_term_value(mesh, pose, views)
    x0 = pose.vector()
    grad = np.zeros(7)
    for j in range(7):
        xp = x0.copy()
        xp[j] += fd_step
        xm = x0.copy()
        xm[j] -= fd_step
        fp = _mask_term_value(mesh, pose.with_vector(xp), views)
        fm = _mask_term_value(mesh, pose.with_vector(xm), views)
        grad[j] = (fp - fm) / (2.0 * fd_step)
    return loss, grad


def sdf_penetration_loss(mesh_samples, scene: PointCloud, pose: PoseParams, scene_tree=None):
    """Penalty on samples sitting behind the local scene surface.

    The scene signed distance is approximated point-to-plane against the
    nearest scene point: d = (y - p) . n. Only the penetrating side (d < 0)
    is penalized, as max(0, -d)^2. Points whose nearest neighbor lacks a
    reliable normal fall back to unsigned clearance (distance treated as
    positive, contributing no penalty) and are flagged via a warning.

    Returns:
        (loss, grad7)
    """
    samples = mesh_samples.points if isinstance(mesh_samples, PointCloud) else np.asarray(mesh_samples)
    if len(scene) == 0:
        raise EmptyInputError("scene cloud is empty")
    if scene.normals is None:
        raise ConfigError("scene cloud must carry (estimated) normals")
    tree = scene_tree if scene_tree is not None else cKDTree(scene.points)
    y = pose.apply(samples)
    _, nn = tree.query(y)
    p = scene.points[nn]
    nrm = scene.normals[nn]
    good = np.linalg.norm(nrm, axis=1) > 0.5
    if not good.all():
        logger.warning(
            "%d/%d penetration samples hit degenerate normals; using unsigned clearance",
            int((~good).sum()), len(good),
        )
    d = np.einsum("ij,ij->i", y - p, nrm)
    pen = (d < 0) & good
    n = len(y)
    loss = float(np.sum(d[pen] ** 2) / n)
    g = np.zeros_like(y)
    g[pen] = (2.0 * d[pen, None] * nrm[pen]) / n
    return loss, _backprop_to_pose(pose, y, g)


def reg_terms(pose: PoseParams, anchor: PoseParams):
    """Drift regularizers against the fine-anchoring entry pose.

    R_q is the squared geodesic rotation angle to the anchor, R_t the
    squared translation deviation, R_s the squared log-scale deviation.

    Returns:
        ((r_q, r_t, r_s), (grad_q7, grad_t7, grad_s7))
    """
    q_rel = quat_mul(quat_conj(anchor.rotation_quat()), pose.rotation_quat())
    phi = 2.0 * quat_log(q_rel)
    r_q = float(phi @ phi)
    grad_q = np.zeros(7)
    grad_q[:3] = 2.0 * so3_left_jacobian(pose.rot_inc).T @ (
        quat_to_matrix(anchor.rotation_quat()) @ phi
    )

    dt = pose.translation - anchor.translation
    r_t = float(dt @ dt)
    grad_t = np.zeros(7)
    grad_t[3:6] = 2.0 * dt

    ds = pose.log_scale - anchor.log_scale
    r_s = float(ds * ds)
    grad_s = np.zeros(7)
    grad_s[6] = 2.0 * ds
    return (r_q, r_t, r_s), (grad_q, grad_t, grad_s)


@dataclass
class TraceRow:
    stage: str
    iteration: int
    total: float
    terms: dict

    def as_record(self) -> dict:
        rec = {"stage": self.stage, "iteration": self.iteration, "total": self.total}
        rec.update({k: self.terms.get(k, 0.0) for k in TERM_NAMES})
        return rec


@dataclass
class RefineTrace:
    rows: list = field(default_factory=list)
    aborted: bool = False
    abort_reason: str | None = None

    def append(self, stage, iteration, total, terms):
        self.rows.append(TraceRow(stage, iteration, float(total), dict(terms)))

    def stage_rows(self, stage):
        return [r for r in self.rows if r.stage == stage]

    def write_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["stage", "iteration", "total", *TERM_NAMES])
            writer.writeheader()
            for row in self.rows:
                writer.writerow(row.as_record())


class RefineObjective:
    """Shared precomputation plus per-stage loss evaluation.

    Trees, surface samples, target corners, and scene normals are built once
    and treated read-only; evaluations for different poses are independent
    pure calls.
    """

    def __init__(self, mesh: TriangleMesh, scene: PointCloud, views, cfg: RefineConfig):
        self.mesh = mesh
        self.cfg = cfg
        self.views = list(views)
        self.samples = mesh.sample_surface(cfg.sample_count, seed=cfg.sample_seed)
        if scene.normals is None and cfg.lambda_sdf > 0:
            toward = None
            if self.views:
                toward = np.mean([cam.center() for cam, _ in self.views], axis=0)
            scene = estimate_normals(scene, k=cfg.normal_k, orient_toward=toward)
        self.scene = scene
        self.scene_tree = cKDTree(scene.points)
        self.target_corners = cloud_aabb_corners(scene)

    def evaluate(self, pose: PoseParams, stage: str, anchor: PoseParams | None = None):
        """Total loss, per-term values, and the 7-vector gradient."""
        cfg = self.cfg
        terms = {}
        grad = np.zeros(7)

        l_cd, g_cd = chamfer_loss(self.samples, self.scene, pose, target_tree=self.scene_tree)
        l_co, g_co = corner_loss(self.mesh, self.scene, pose, target_corners=self.target_corners)
        terms["l_cd"] = l_cd
        terms["l_corner"] = l_co
        grad += cfg.lambda_geo * (g_cd + g_co)

        if cfg.lambda_mask > 0 and self.views:
            l_m, g_m = mask_loss(self.mesh, pose, self.views, fd_step=cfg.mask_fd_step)
        else:
            l_m, g_m = 0.0, np.zeros(7)
        terms["l_mask"] = l_m
        grad += cfg.lambda_mask * g_m

        if stage == STAGE_FINE:
            l_sdf, g_sdf = sdf_penetration_loss(
                self.samples, self.scene, pose, scene_tree=self.scene_tree
            )
            (r_q, r_t, r_s), (g_q, g_t, g_s) = reg_terms(pose, anchor)
            terms.update(l_sdf=l_sdf, r_q=r_q, r_t=r_t, r_s=r_s)
            grad += cfg.lambda_sdf * g_sdf + cfg.w_q * g_q + cfg.w_t * g_t + cfg.w_s * g_s
            extra = cfg.lambda_sdf * l_sdf + cfg.w_q * r_q + cfg.w_t * r_t + cfg.w_s * r_s
        else:
            terms.update(l_sdf=0.0, r_q=0.0, r_t=0.0, r_s=0.0)
            extra = 0.0

        total = cfg.lambda_geo * (l_cd + l_co) + cfg.lambda_mask * l_m + extra
        return total, terms, grad


_MAX_HALVINGS = 25
_STEP_GROWTH = 1.2


def _descend(objective, pose, stage, anchor, iters, steps, active, cone_rad, trace):
    """Monotone blockwise descent; returns (pose, ok) where ok=False aborts."""
    total, terms, grad = objective.evaluate(pose, stage, anchor)
    if not np.isfinite(total):
        trace.aborted = True
        trace.abort_reason = f"non-finite loss entering {stage} stage"
        return pose, False
    trace.append(stage, 0, total, terms)
    scales = np.concatenate([np.full(3, steps[0]), np.full(3, steps[1]), [steps[2]]])
    for it in range(1, iters + 1):
        accepted = False
        for _ in range(_MAX_HALVINGS):
            x = pose.vector() - scales * grad * active
            candidate = pose.with_vector(x)
            if cone_rad is not None:
                r = candidate.rot_inc
                norm = np.linalg.norm(r)
                if norm > cone_rad:
                    candidate = replace(candidate, rot_inc=r * (cone_rad / norm))
            new_total, new_terms, new_grad = objective.evaluate(candidate, stage, anchor)
            if not np.isfinite(new_total):
                trace.aborted = True
                trace.abort_reason = f"non-finite loss at {stage} iteration {it}"
                return pose, False
            if new_total <= total:
                pose, total, terms, grad = candidate, new_total, new_terms, new_grad
                scales *= _STEP_GROWTH
                accepted = True
                break
            scales *= 0.5
        trace.append(stage, it, total, terms)
        if not accepted:
            break  # step collapsed: converged for this stage
    return pose, True


def refine(
    mesh: TriangleMesh,
    scene: PointCloud,
    views,
    init,
    cfg: RefineConfig | None = None,
):
    """Run the coarse-docking then fine-anchoring curriculum.

    Args:
        mesh: asset to place.
        scene: target point cloud (the editing region); normals estimated
            here when absent.
        views: (CameraView, target mask) pairs for the silhouette term.
        init: first-phase result (Phase1Result or Sim3Transform); its
            rotation becomes the lock that stage one only bends within the
            configured cone and stage two freezes outright.
        cfg: RefineConfig, defaults used when omitted.

    Returns:
        (Sim3Transform, RefineTrace). On a non-finite loss the last valid
        pose is returned with trace.aborted set instead of raising.
    """
    cfg = (cfg or RefineConfig()).validate()
    transform = init.transform if hasattr(init, "transform") else init
    objective = RefineObjective(mesh, scene, views, cfg)
    pose = PoseParams.from_sim3(transform)

    steps = (cfg.step_rot, cfg.step_t, cfg.step_s)
    trace = RefineTrace()
    cone = float(np.deg2rad(cfg.rotation_cone_deg))
    pose, ok = _descend(
        objective, pose, STAGE_COARSE, None, cfg.coarse_iters,
        steps, np.ones(7), cone, trace,
    )
    if not ok:
        logger.error("refine aborted in coarse stage: %s", trace.abort_reason)
        return pose.to_sim3(), trace

    anchor = pose  # fine-anchoring reference: drift is measured from here
    active = np.concatenate([np.zeros(3), np.ones(3), [1.0]])  # rotation frozen
    pose, ok = _descend(
        objective, pose, STAGE_FINE, anchor, cfg.fine_iters,
        steps, active, None, trace,
    )
    if not ok:
        logger.error("refine aborted in fine stage: %s", trace.abort_reason)
    return pose.to_sim3(), trace
