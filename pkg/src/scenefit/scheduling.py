"""Autoregressive scheduling of overlapping inpainting segments.

A long frame sequence is processed in ordered, overlapping windows. Each
window inherits the committed outputs at its first k frame positions as
anchors, so the backend continues from established content instead of
reinventing the overlap; committed (earlier-segment) pixels always win when
windows disagree. The orchestrator enforces the response contract after
every call: anchor frames byte-identical, untouched pixels outside the
dilated masks byte-identical, clamping and logging violations rather than
trusting the backend.
"""

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .backends import BackendError, InpaintRequest, gray_prefill
from .errors import ConfigError, SchedulingError

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = "schedule_checkpoint.json"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class SegmentPlan:
    """Ordered overlapping frame windows covering [0, n)."""

    n: int
    length: int
    overlap: int
    segments: tuple  # ((start, end), ...) half-open, ascending

    def __post_init__(self):
        covered = set()
        prev = None
        for start, end in self.segments:
            if prev is not None:
                if start < prev[0]:
                    raise ConfigError("segments out of order")
                shared = max(0, prev[1] - start)
                if shared < self.overlap:
                    raise ConfigError("consecutive segments overlap less than k")
            covered.update(range(start, end))
            prev = (start, end)
        if covered != set(range(self.n)):
            raise ConfigError("segments do not cover the frame range exactly")


def plan_segments(n: int, length: int, overlap: int) -> SegmentPlan:
    """Window starts advance by (length - overlap); the last is end-aligned.

    The final segment snaps to end at n, so its overlap with its
    predecessor may exceed `overlap`; that is recorded in the plan rather
    than hidden.

    Raises:
        ConfigError: unless 0 <= overlap < length <= n.
    """
    if not (0 <= overlap < length <= n):
        raise ConfigError(
            f"need 0 <= overlap < length <= frames, got overlap={overlap}, "
            f"length={length}, frames={n}"
        )
    stride = length - overlap
    starts = [0]
    while starts[-1] + length < n:
        nxt = starts[-1] + stride
        if nxt + length >= n:
            nxt = n - length
        starts.append(nxt)
    segments = tuple((s, s + length) for s in starts)
    return SegmentPlan(n=n, length=length, overlap=overlap, segments=segments)


def _frame_hash(frame: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(frame).tobytes()).hexdigest()


def _plan_key(plan: SegmentPlan, frames) -> str:
    h = hashlib.sha256()
    h.update(f"{plan.n}:{plan.length}:{plan.overlap}".encode())
    for f in frames:
        h.update(np.ascontiguousarray(f).tobytes())
    return h.hexdigest()


class _Checkpoint:
    """Committed-segment store for resumable schedules."""

    def __init__(self, directory, plan: SegmentPlan, plan_key: str):
        self.dir = Path(directory)
        self.plan = plan
        self.plan_key = plan_key
        self.committed: dict[int, list[str]] = {}

    def path(self) -> Path:
        return self.dir / CHECKPOINT_NAME

    def load_committed(self, outputs) -> int:
        """Restore committed frames into `outputs`; returns #segments restored."""
        path = self.path()
        if not path.exists():
            return 0
        try:
            state = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError):
            logger.warning("unreadable checkpoint at %s; starting fresh", path)
            return 0
        if state.get("version") != CHECKPOINT_VERSION or state.get("plan_key") != self.plan_key:
            logger.info("checkpoint does not match this plan/inputs; starting fresh")
            return 0
        restored = 0
        from .io import load_rgb_png

        for entry in state.get("committed", []):
            seg = int(entry["segment_index"])
            start, end = self.plan.segments[seg]
            frames = []
            ok = True
            for i in range(start, end):
                fp = self.dir / f"committed_{i:06d}.png"
                if not fp.exists():
                    ok = False
                    break
                frames.append(load_rgb_png(fp))
            if not ok:
                break
            for i, frame in zip(range(start, end), frames):
                if outputs[i] is None:
                    outputs[i] = frame
            self.committed[seg] = entry["frame_hashes"]
            restored += 1
        if restored:
            logger.info("resumed %d committed segment(s) from %s", restored, path)
        return restored

    def commit(self, seg_index: int, outputs, start: int, end: int) -> None:
        from .io import save_rgb_png

        self.dir.mkdir(parents=True, exist_ok=True)
        hashes = []
        for i in range(start, end):
            save_rgb_png(outputs[i], self.dir / f"committed_{i:06d}.png")
            hashes.append(_frame_hash(outputs[i]))
        self.committed[seg_index] = hashes
        state = {
            "version": CHECKPOINT_VERSION,
            "plan_key": self.plan_key,
            "plan": {"n": self.plan.n, "length": self.plan.length, "overlap": self.plan.overlap},
            "committed": [
                {"segment_index": s, "frame_hashes": h}
                for s, h in sorted(self.committed.items())
            ],
        }
        self.path().write_text(json.dumps(state, indent=2))


def run_schedule(
    frames,
    masks,
    plan: SegmentPlan,
    prompt: str,
    backend,
    retries: int = 2,
    checkpoint_dir=None,
):
    """Drive the backend over all segments and merge the outputs.

    Args:
        frames: ordered RGB frames, uint8 (H, W, 3) each.
        masks: per-frame ContextualMask (or raw dilated uint8 masks).
        plan: segment plan consistent with len(frames).
        prompt: editing instruction forwarded to the backend.
        backend: object with inpaint(InpaintRequest) -> InpaintResponse.
        retries: extra attempts per segment on BackendError.
        checkpoint_dir: when given, committed segments are persisted there
            and an aborted run can resume from them.

    Returns:
        List of exactly plan.n output frames.

    Raises:
        SchedulingError: after the retry budget is exhausted; the partial
            results are persisted first when a checkpoint directory exists.
    """
    frames = [np.asarray(f, dtype=np.uint8) for f in frames]
    dilated = [np.asarray(getattr(m, "dilated", m)) for m in masks]
    if len(frames) != plan.n or len(dilated) != plan.n:
        raise ConfigError(
            f"plan expects {plan.n} frames, got {len(frames)} frames / {len(dilated)} masks"
        )
    for f, m in zip(frames, dilated):
        if f.shape[:2] != m.shape:
            raise ConfigError("frame and mask dimensions disagree")

    outputs: list = [None] * plan.n
    checkpoint = None
    first_pending = 0
    if checkpoint_dir is not None:
        checkpoint = _Checkpoint(checkpoint_dir, plan, _plan_key(plan, frames))
        first_pending = checkpoint.load_committed(outputs)

    for seg_index, (start, end) in enumerate(plan.segments):
        if seg_index < first_pending:
            continue
        k = plan.overlap if seg_index > 0 else 0
        anchors = [outputs[start + i] for i in range(k)]
        request = InpaintRequest(
            segment_id=seg_index,
            frames=[frames[i] for i in range(start, end)],
            masks=[dilated[i] for i in range(start, end)],
            gray_frames=[gray_prefill(frames[i], dilated[i]) for i in range(start, end)],
            anchor_frames=anchors,
            prompt=prompt,
        )
        response = None
        last_err = None
        for attempt in range(retries + 1):
            try:
                response = backend.inpaint(request)
                break
            except BackendError as exc:
                last_err = exc
                logger.warning(
                    "segment %d attempt %d/%d failed: %s",
                    seg_index, attempt + 1, retries + 1, exc,
                )
        if response is None:
            path = None
            if checkpoint is not None:
                path = str(checkpoint.path())
            raise SchedulingError(
                f"backend failed on segment {seg_index} after {retries + 1} attempts: {last_err}",
                checkpoint_path=path,
            )

        edited = _enforce_response(request, response, k)
        for offset, frame in enumerate(edited):
            idx = start + offset
            if outputs[idx] is None:  # committed earlier-segment frames win
                outputs[idx] = frame
        if checkpoint is not None:
            checkpoint.commit(seg_index, outputs, start, end)

    return outputs


def _enforce_response(request: InpaintRequest, response, k: int):
    """Clamp the backend output onto the orchestration contract."""
    n = len(request.frames)
    if len(response.frames) != n:
        raise SchedulingError(
            f"backend returned {len(response.frames)} frames for a {n}-frame segment"
        )
    edited = []
    for i in range(n):
        out = np.asarray(response.frames[i], dtype=np.uint8)
        if out.shape != request.frames[i].shape:
            raise SchedulingError(
                f"backend changed frame dimensions on segment {request.segment_id}"
            )
        out = out.copy()
        if i < k:
            if not np.array_equal(out, request.anchor_frames[i]):
                logger.warning(
                    "segment %d: backend altered anchor frame %d; restoring",
                    request.segment_id, i,
                )
                out = request.anchor_frames[i].copy()
        keep = np.asarray(request.masks[i]) == 0
        if not np.array_equal(out[keep], request.frames[i][keep]):
            logger.warning(
                "segment %d: backend touched pixels outside the mask on frame %d; clamping",
                request.segment_id, i,
            )
            out[keep] = request.frames[i][keep]
        edited.append(out)
    return edited
