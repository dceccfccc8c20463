"""Stdio server exposing the mock backends over the wire protocol.

Run as `python -m scenefit.backend_stdio --mode identity` (or constant).
Reads one framed inpaint request from stdin, writes the framed response to
stdout, and exits; the orchestrator spawns one process per segment.
"""

import argparse
import sys

from .backends import (
    ConstantFillBackend,
    IdentityBackend,
    decode_request,
    encode_response,
    read_message,
)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--mode", choices=["identity", "constant"], default="identity")
    parser.add_argument("--color", default="255,0,0", help="fill color for constant mode")
    args = parser.parse_args(argv)

    if args.mode == "identity":
        backend = IdentityBackend()
    else:
        backend = ConstantFillBackend(color=tuple(int(c) for c in args.color.split(",")))

    header, blobs = read_message(sys.stdin.buffer)
    request = decode_request(header, blobs)
    response = backend.inpaint(request)
    sys.stdout.buffer.write(encode_response(response))
    sys.stdout.buffer.flush()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
