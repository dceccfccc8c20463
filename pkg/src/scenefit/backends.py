"""Inpainting backend protocol: in-process mocks and the byte-stream wire
format for out-of-process models.

A request/response crosses the wire as a 4-byte big-endian header length,
a JSON header, then the concatenated binary payloads (PNG images) whose
names and sizes the header declares. Any runtime able to speak this framing
over stdin/stdout can serve as the generative model; the mocks here keep
the orchestration testable without one.
"""

import io
import json
import struct
import subprocess
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import BackendError

GRAY_FILL = 128  # mid-gray prefill value on all channels

WIRE_VERSION = 1


@dataclass
class InpaintRequest:
    segment_id: int
    frames: list  # original RGB frames, uint8 (H, W, 3)
    masks: list  # dilated editing-region masks, uint8 (H, W)
    gray_frames: list  # frames with the mask region set to mid-gray
    anchor_frames: list  # committed outputs inherited from the previous segment
    prompt: str = ""


@dataclass
class InpaintResponse:
    segment_id: int
    frames: list = field(default_factory=list)


def gray_prefill(frame: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Copy of the frame with the masked region set to mid-gray."""
    out = np.asarray(frame, dtype=np.uint8).copy()
    out[np.asarray(mask) != 0] = GRAY_FILL
    return out


# --------------------------------------------------------------------------
# In-process backends


class IdentityBackend:
    """Returns the gray-prefilled input unchanged except for anchors.

    Deterministic mock: the editing region stays mid-gray, everything else
    is the original pixel values, and inherited anchor frames are passed
    through untouched.
    """

    def inpaint(self, request: InpaintRequest) -> InpaintResponse:
        out = []
        k = len(request.anchor_frames)
        for i, frame in enumerate(request.gray_frames):
            if i < k:
                out.append(request.anchor_frames[i].copy())
            else:
                out.append(frame.copy())
        return InpaintResponse(segment_id=request.segment_id, frames=out)


class ConstantFillBackend:
    """Fills the editing region with one solid color; anchors pass through."""

    def __init__(self, color=(255, 0, 0)):
        self.color = np.asarray(color, dtype=np.uint8)

    def inpaint(self, request: InpaintRequest) -> InpaintResponse:
        out = []
        k = len(request.anchor_frames)
        for i, (frame, mask) in enumerate(zip(request.frames, request.masks)):
            if i < k:
                out.append(request.anchor_frames[i].copy())
                continue
            edited = np.asarray(frame, dtype=np.uint8).copy()
            edited[np.asarray(mask) != 0] = self.color
            out.append(edited)
        return InpaintResponse(segment_id=request.segment_id, frames=out)


class SloppyBackend:
    """Deliberately violates the contract (edits everywhere, breaks anchors).

    Exists to exercise the orchestrator's post-check clamping.
    """

    def inpaint(self, request: InpaintRequest) -> InpaintResponse:
        out = []
        for frame in request.frames:
            edited = np.asarray(frame, dtype=np.uint8).copy()
            edited[:, :, 0] = 255 - edited[:, :, 0]
            out.append(edited)
        return InpaintResponse(segment_id=request.segment_id, frames=out)


class FlakyBackend:
    """Wraps another backend and fails the first `failures` calls."""

    def __init__(self, inner, failures: int = 1):
        self.inner = inner
        self.failures = failures
        self.calls = 0

    def inpaint(self, request: InpaintRequest) -> InpaintResponse:
        self.calls += 1
        if self.calls <= self.failures:
            raise BackendError(f"injected failure on call {self.calls}")
        return self.inner.inpaint(request)


# --------------------------------------------------------------------------
# Wire protocol


def _png_bytes(arr: np.ndarray, mode: str) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(arr, mode=mode).save(buf, format="PNG")
    return buf.getvalue()


def _png_decode(raw: bytes, mode: str) -> np.ndarray:
    return np.asarray(Image.open(io.BytesIO(raw)).convert(mode), dtype=np.uint8)


def encode_request(request: InpaintRequest) -> bytes:
    payloads = []
    names = []
    for group, imgs, mode in (
        ("frame", request.frames, "RGB"),
        ("mask", request.masks, "L"),
        ("gray", request.gray_frames, "RGB"),
        ("anchor", request.anchor_frames, "RGB"),
    ):
        for i, img in enumerate(imgs):
            raw = _png_bytes(np.asarray(img, dtype=np.uint8), mode)
            names.append({"name": f"{group}/{i}", "size": len(raw)})
            payloads.append(raw)
    header = {
        "version": WIRE_VERSION,
        "type": "inpaint_request",
        "segment_id": request.segment_id,
        "prompt": request.prompt,
        "frame_count": len(request.frames),
        "anchor_count": len(request.anchor_frames),
        "payloads": names,
    }
    head = json.dumps(header).encode()
    return struct.pack(">I", len(head)) + head + b"".join(payloads)


def encode_response(response: InpaintResponse) -> bytes:
    payloads = []
    names = []
    for i, img in enumerate(response.frames):
        raw = _png_bytes(np.asarray(img, dtype=np.uint8), "RGB")
        names.append({"name": f"frame/{i}", "size": len(raw)})
        payloads.append(raw)
    header = {
        "version": WIRE_VERSION,
        "type": "inpaint_response",
        "segment_id": response.segment_id,
        "frame_count": len(response.frames),
        "payloads": names,
    }
    head = json.dumps(header).encode()
    return struct.pack(">I", len(head)) + head + b"".join(payloads)


def _read_exact(stream, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining > 0:
        chunk = stream.read(remaining)
        if not chunk:
            raise BackendError("byte stream closed mid-message")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_message(stream):
    """Read one framed message; returns (header dict, {name: bytes})."""
    (head_len,) = struct.unpack(">I", _read_exact(stream, 4))
    header = json.loads(_read_exact(stream, head_len).decode())
    blobs = {}
    for entry in header.get("payloads", []):
        blobs[entry["name"]] = _read_exact(stream, entry["size"])
    return header, blobs


def decode_request(header: dict, blobs: dict) -> InpaintRequest:
    if header.get("type") != "inpaint_request":
        raise BackendError(f"expected inpaint_request, got {header.get('type')!r}")
    n = header["frame_count"]
    k = header["anchor_count"]
    return InpaintRequest(
        segment_id=header["segment_id"],
        prompt=header.get("prompt", ""),
        frames=[_png_decode(blobs[f"frame/{i}"], "RGB") for i in range(n)],
        masks=[_png_decode(blobs[f"mask/{i}"], "L") for i in range(n)],
        gray_frames=[_png_decode(blobs[f"gray/{i}"], "RGB") for i in range(n)],
        anchor_frames=[_png_decode(blobs[f"anchor/{i}"], "RGB") for i in range(k)],
    )


def decode_response(header: dict, blobs: dict) -> InpaintResponse:
    if header.get("type") != "inpaint_response":
        raise BackendError(f"expected inpaint_response, got {header.get('type')!r}")
    n = header["frame_count"]
    return InpaintResponse(
        segment_id=header["segment_id"],
        frames=[_png_decode(blobs[f"frame/{i}"], "RGB") for i in range(n)],
    )


class SubprocessBackend:
    """Speaks the wire protocol to a child process, one request per call.

    The child reads a framed request from stdin and writes a framed
    response to stdout. Spawning per request keeps the failure domain
    small and the child trivially stateless.
    """

    def __init__(self, command, timeout: float = 300.0):
        if isinstance(command, str):
            import shlex

            command = shlex.split(command)
        self.command = list(command)
        self.timeout = timeout

    def inpaint(self, request: InpaintRequest) -> InpaintResponse:
        payload = encode_request(request)
        try:
            proc = subprocess.run(
                self.command,
                input=payload,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                timeout=self.timeout,
            )
        except subprocess.TimeoutExpired as exc:
            raise BackendError(f"backend timed out after {self.timeout}s") from exc
        if proc.returncode != 0:
            raise BackendError(
                f"backend exited with {proc.returncode}: {proc.stderr.decode(errors='replace')[:500]}"
            )
        header, blobs = read_message(io.BytesIO(proc.stdout))
        response = decode_response(header, blobs)
        if response.segment_id != request.segment_id:
            raise BackendError(
                f"backend answered segment {response.segment_id}, expected {request.segment_id}"
            )
        return response


def make_backend(spec: str):
    """Backend factory for CLI/config strings.

    "mock:identity", "mock:constant" and "mock:constant:R,G,B" build the
    in-process mocks; anything else is treated as a subprocess command line.
    """
    if spec == "mock:identity":
        return IdentityBackend()
    if spec == "mock:constant":
        return ConstantFillBackend()
    if spec.startswith("mock:constant:"):
        color = tuple(int(c) for c in spec.split(":", 2)[2].split(","))
        return ConstantFillBackend(color=color)
    return SubprocessBackend(spec)
