"""Global orientation resolution and closed-form Sim(3) alignment.

The up-vector ambiguity of generated assets is resolved by scoring all 24
rotations of the cube group against reference silhouettes via normalized
cross-correlation; the finite candidate set keeps the search exhaustive and
testable, with finer orientation left to ICP and the later refinement
stage. The similarity solve itself is the closed-form least-squares fit
with the determinant correction, so reflections can never be returned.
"""

import itertools
import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .camera import CameraView
from .errors import AlignmentDivergedError, DegenerateInputError, EmptyInputError
from .mesh import PointCloud, TriangleMesh
from .raster import rasterize_silhouette
from .transforms import (
    Sim3Transform,
    quat_angle,
    quat_angle_between,
    quat_from_matrix,
    quat_mul,
    quat_rotate,
    quat_slerp,
)

logger = logging.getLogger(__name__)

SCALE_TRUST_RANGE = (1e-3, 1e3)
ICP_SAMPLE_COUNT = 4096
ICP_SAMPLE_SEED = 0


@dataclass(frozen=True)
class OrientationCandidate:
    """One cube-group rotation with its silhouette-correlation score."""

    index: int
    rotation: np.ndarray  # unit quaternion
    score: float


@dataclass(frozen=True)
class Phase1Result:
    transform: Sim3Transform
    residual: float
    iterations: int
    chosen_orientation: OrientationCandidate | None = None

    def to_dict(self) -> dict:
        d = self.transform.to_dict()
        d["residual"] = float(self.residual)
        d["iterations"] = int(self.iterations)
        d["orientation_index"] = (
            int(self.chosen_orientation.index) if self.chosen_orientation else -1
        )
        return d


def cube_group_rotations() -> list[np.ndarray]:
    """The 24 rotations of the cube as unit quaternions.

    Enumerated from signed permutation matrices with determinant +1 and
    ordered by (rotation angle from identity, quaternion lexicographic), so
    index 0 is the identity and ties in correlation scores resolve to the
    smallest rotation.
    """
    mats = []
    for perm in itertools.permutations(range(3)):
        for signs in itertools.product((1.0, -1.0), repeat=3):
            m = np.zeros((3, 3))
            for row, (col, s) in enumerate(zip(perm, signs)):
                m[row, col] = s
            if np.linalg.det(m) > 0:
                mats.append(m)
    quats = [quat_from_matrix(m) for m in mats]
    quats.sort(key=lambda q: (quat_angle(q), tuple(np.round(q, 12))))
    return quats


def _normalized_cross_correlation(a: np.ndarray, b: np.ndarray) -> float:
    a = a.astype(np.float64).ravel()
    b = b.astype(np.float64).ravel()
    za = a - a.mean()
    zb = b - b.mean()
    denom = np.linalg.norm(za) * np.linalg.norm(zb)
    if denom == 0.0:
        return 0.0
    return float(np.dot(za, zb) / denom)


def _candidate_pose(mesh: TriangleMesh, rotation, cam: CameraView, mask: np.ndarray):
    """Pose placing the rotated mesh behind the mask centroid at matched size.

    The mesh is rotated about its own AABB center, scaled so its projected
    bounding box matches the mask's (geometric-mean fit, which keeps aspect
    mismatch visible to the correlation), and translated onto the
    back-projected ray of the mask centroid at a fixed reference depth.
    """
    vs, us = np.nonzero(mask)
    u_c = us.mean() + 0.5
    v_c = vs.mean() + 0.5
    target_w = max(us.max() - us.min() + 1.0, 1.0)
    target_h = max(vs.max() - vs.min() + 1.0, 1.0)

    lo, hi = mesh.aabb()
    center = 0.5 * (lo + hi)
    rotated = quat_rotate(rotation, mesh.vertices - center)
    # extents seen by this camera: rotate into the camera frame
    cam_axes = cam.rotation_matrix()
    in_cam = rotated @ cam_axes.T
    ext = in_cam.max(axis=0) - in_cam.min(axis=0)
    ext = np.maximum(ext, 1e-12)

    depth = 4.0 * float(np.linalg.norm(hi - lo))
    scale = float(
        np.sqrt(
            (target_w * depth / (cam.fx * ext[0])) * (target_h * depth / (cam.fy * ext[1]))
        )
    )
    ray_cam = np.array([(u_c - cam.cx) / cam.fx, (v_c - cam.cy) / cam.fy, 1.0]) * depth
    target_world = cam.camera_to_world(ray_cam[None, :])[0]
    translation = target_world - scale * quat_rotate(rotation, center)
    return Sim3Transform(scale=scale, rotation=rotation, translation=translation)


def _shift_to_centroid(sil: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Integer-shift the silhouette so its centroid lands on the mask's.

    Correlating at the centroid-aligned shift scores shape agreement
    instead of the residual placement error of the candidate pose.
    """
    if not sil.any():
        return sil
    sv, su = np.nonzero(sil)
    mv, mu = np.nonzero(mask)
    dv = int(round(mv.mean() - sv.mean()))
    du = int(round(mu.mean() - su.mean()))
    out = np.zeros_like(sil)
    h, w = sil.shape
    out[max(0, dv) : min(h, h + dv), max(0, du) : min(w, w + du)] = sil[
        max(0, -dv) : min(h, h - dv), max(0, -du) : min(w, w - du)
    ]
    return out


def resolve_up_vector(mesh: TriangleMesh, ref_views) -> OrientationCandidate:
    """Pick the cube-group rotation whose silhouettes best match the masks.

    Args:
        mesh: the asset in its native orientation.
        ref_views: iterable of (CameraView, mask) reference pairs; views
            with empty masks are skipped.

    Returns:
        The best-scoring candidate; score is the mean normalized
        cross-correlation over usable views. Ties go to the smallest
        rotation angle from identity.

    Raises:
        EmptyInputError: mesh empty or every reference mask empty.
    """
    if mesh.n_faces == 0:
        raise EmptyInputError("cannot orient an empty mesh")
    usable = [(cam, np.asarray(mask)) for cam, mask in ref_views if np.any(mask)]
    if not usable:
        raise EmptyInputError("all reference masks are empty")

    best: OrientationCandidate | None = None
    for idx, q in enumerate(cube_group_rotations()):
        scores = []
        for cam, mask in usable:
            pose = _candidate_pose(mesh, q, cam, mask)
            sil = _shift_to_centroid(rasterize_silhouette(mesh, pose, cam), mask)
            scores.append(_normalized_cross_correlation(sil, mask))
        score = float(np.mean(scores))
        # strict > keeps the earlier (smaller-angle) candidate on ties
        if best is None or score > best.score + 1e-12:
            best = OrientationCandidate(index=idx, rotation=q, score=score)
    return best


def umeyama_sim3(source: PointCloud, target: PointCloud) -> Sim3Transform:
    """Closed-form least-squares Sim(3) between corresponded point sets.

    Solves min over (s, R, t) of sum_i ||target_i - (s R source_i + t)||^2
    under index correspondence, enforcing det(R) = +1.

    Raises:
        DegenerateInputError: fewer than 3 points, mismatched counts, or a
            collinear / zero-variance source set.
    """
    src = source.points
    dst = target.points
    if len(src) != len(dst):
        raise DegenerateInputError("source and target must have equal point counts")
    n = len(src)
    if n < 3:
        raise DegenerateInputError(f"need at least 3 corresponded points, got {n}")
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    cs = src - mu_s
    cd = dst - mu_d
    var_s = float((cs**2).sum() / n)
    if var_s < 1e-24:
        raise DegenerateInputError("source has zero variance")
    cov = cd.T @ cs / n
    U, D, Vt = np.linalg.svd(cov)
    # collinear sources leave the rotation about the line unconstrained
    spread = np.linalg.svd(cs, compute_uv=False)
    if spread[1] < 1e-9 * spread[0]:
        raise DegenerateInputError("source points are collinear")
    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2, 2] = -1.0
    R = U @ S @ Vt
    s = float(np.trace(np.diag(D) @ S) / var_s)
    if s <= 0:
        raise DegenerateInputError("recovered non-positive scale")
    t = mu_d - s * (R @ mu_s)
    return Sim3Transform(scale=s, rotation=quat_from_matrix(R), translation=t)


def _fit_scale_translation(src: np.ndarray, dst: np.ndarray, rotation) -> Sim3Transform:
    """Least-squares s, t for corresponded points under a fixed rotation."""
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    ru = quat_rotate(rotation, src - mu_s)
    denom = float((ru**2).sum())
    s = float((ru * (dst - mu_d)).sum() / denom) if denom > 0 else 1.0
    s = float(np.clip(s, *SCALE_TRUST_RANGE))
    return Sim3Transform(
        scale=s, rotation=rotation, translation=mu_d - s * quat_rotate(rotation, mu_s)
    )


def icp_sim3(
    mesh: TriangleMesh,
    target: PointCloud,
    init: Sim3Transform,
    max_iters: int = 50,
    convergence_eps: float = 1e-6,
    sample_count: int = ICP_SAMPLE_COUNT,
    sample_seed: int = ICP_SAMPLE_SEED,
    rotation_cone_deg: float | None = None,
    orientation: OrientationCandidate | None = None,
) -> Phase1Result:
    """Nearest-neighbor ICP with the closed-form Sim(3) solve inside.

    Correspondences pair every target point with its nearest transformed
    mesh surface sample (area-weighted samples, fixed seed). Matching from
    the target side keeps a one-sided partial target, like a monocular
    unprojection, from dragging the scale down through the mesh's invisible
    far side: every observed point must stay explained. The loop alternates
    matching with the closed-form similarity re-fit until the relative
    residual improvement drops below `convergence_eps` or `max_iters` is
    hit. The residual (RMS over correspondences, scene units) is
    non-increasing: an update that would raise it is rejected and the loop
    stops there.

    Args:
        rotation_cone_deg: when set, each re-fit rotation is clamped onto
            the geodesic toward the init rotation at this angle and scale/
            translation are re-fit under the clamped rotation. Protects a
            resolved global orientation from being spun away by noisy or
            heavily partial targets.

    Raises:
        EmptyInputError: empty target.
        AlignmentDivergedError: scale left SCALE_TRUST_RANGE.
    """
    if len(target) == 0:
        raise EmptyInputError("ICP target cloud is empty")
    if not init.scale > 0:
        raise DegenerateInputError("initial scale must be positive")

    samples = mesh.sample_surface(sample_count, seed=sample_seed)
    cone = None if rotation_cone_deg is None else float(np.deg2rad(rotation_cone_deg))

    def match(transform):
        moved = transform.apply(samples)
        dist, nn = cKDTree(moved).query(target.points)
        return nn, float(np.sqrt(np.mean(dist**2)))

    current = init
    nn, residual = match(current)

    iterations = 0
    for _ in range(max_iters):
        candidate = umeyama_sim3(PointCloud(samples[nn]), target)
        if cone is not None:
            deviation = quat_angle_between(init.rotation, candidate.rotation)
            if deviation > cone:
                clamped_q = quat_slerp(init.rotation, candidate.rotation, cone / deviation)
                candidate = _fit_scale_translation(samples[nn], target.points, clamped_q)
        if not (SCALE_TRUST_RANGE[0] <= candidate.scale <= SCALE_TRUST_RANGE[1]):
            raise AlignmentDivergedError(
                f"scale {candidate.scale:.3e} outside trusted range "
                f"{SCALE_TRUST_RANGE} after {iterations} iterations "
                f"(residual {residual:.3e})"
            )
        new_nn, new_residual = match(candidate)
        if new_residual > residual:
            break  # keep the monotone residual contract
        improved = residual - new_residual
        current, nn = candidate, new_nn
        iterations += 1
        stop = improved < convergence_eps * max(residual, 1e-30)
        residual = new_residual
        if stop:
            break
    return Phase1Result(
        transform=current,
        residual=residual,
        iterations=iterations,
        chosen_orientation=orientation,
    )


def seed_transform(mesh: TriangleMesh, rotation, target: PointCloud) -> Sim3Transform:
    """Seed with the given rotation, matching RMS extents and centroids.

    Used both to initialize ICP from a resolved orientation and to re-seed
    scale/translation against the editing-region cloud before refinement;
    the first phase's job is the rotation lock, and a monocular cloud's
    scale estimate is not worth inheriting when a multi-view region cloud
    is available.
    """
    verts = quat_rotate(rotation, mesh.vertices)
    c_mesh = verts.mean(axis=0)
    c_tgt = target.points.mean(axis=0)
    r_mesh = float(np.sqrt(np.mean(np.sum((verts - c_mesh) ** 2, axis=1))))
    r_tgt = float(np.sqrt(np.mean(np.sum((target.points - c_tgt) ** 2, axis=1))))
    s = r_tgt / r_mesh if r_mesh > 0 else 1.0
    s = float(np.clip(s, *SCALE_TRUST_RANGE))
    return Sim3Transform(scale=s, rotation=rotation, translation=c_tgt - s * c_mesh)


ORIENTATION_TRUST_CONE_DEG = 15.0


def run_phase1(
    mesh: TriangleMesh,
    target: PointCloud,
    ref_views=None,
    max_iters: int = 50,
    convergence_eps: float = 1e-6,
) -> Phase1Result:
    """Full first phase: orientation resolution, seeding, then ICP.

    `ref_views` are (CameraView, mask) pairs for the cross-correlation
    orientation search; when omitted the identity orientation is used and
    only the ICP stage runs. ICP rotation is confined to a trust cone
    around the resolved orientation so a noisy monocular cloud cannot spin
    away the lock. The returned rotation is what the refinement stage
    locks onto.
    """
    if ref_views:
        cand = resolve_up_vector(mesh, ref_views)
    else:
        cand = OrientationCandidate(index=0, rotation=cube_group_rotations()[0], score=0.0)
    init = seed_transform(mesh, cand.rotation, target)
    result = icp_sim3(
        mesh,
        target,
        init,
        max_iters=max_iters,
        convergence_eps=convergence_eps,
        rotation_cone_deg=ORIENTATION_TRUST_CONE_DEG,
        orientation=cand,
    )
    logger.info(
        "phase 1: orientation %d (score %.3f), residual %.4g after %d iterations",
        cand.index,
        cand.score,
        result.residual,
        result.iterations,
    )
    return result
