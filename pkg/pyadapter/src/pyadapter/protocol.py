"""Newline-delimited JSON wire format for label queries.

One frame per line, UTF-8, strict request/response pairing on an ordered
stream:

    request   {"id": N, "clouds": [[[x, y, z], ...], ...]}
    response  {"id": N, "labels": [k, ...]}
    failure   {"id": N, "error": "message"}

Serialization is canonical: no spaces, keys exactly in the order shown,
floats via repr. That makes responses from independent implementations
comparable byte for byte. Frames are capped at 64 MiB.

Unlike a certification client, an adapter never tears the stream down on a
bad frame: anything unanswerable becomes an error frame (with id -1 when
the request id itself is unrecoverable) and the stream continues.
"""

from __future__ import annotations

import json

MAX_FRAME_BYTES = 64 * 1024 * 1024
UNKNOWN_ID = -1


class ProtocolError(RuntimeError):
    """A frame could not be parsed into a request."""


def encode_request(request_id: int, clouds: list) -> bytes:
    body = {"id": int(request_id), "clouds": clouds}
    return json.dumps(body, separators=(",", ":")).encode("utf-8") + b"\n"


def encode_response(request_id: int, labels: list[int]) -> bytes:
    body = {"id": int(request_id), "labels": [int(l) for l in labels]}
    return json.dumps(body, separators=(",", ":")).encode("utf-8") + b"\n"


def encode_error(request_id: int, message: str) -> bytes:
    body = {"id": int(request_id), "error": str(message)}
    return json.dumps(body, separators=(",", ":")).encode("utf-8") + b"\n"


def decode_request(line: bytes) -> tuple[int, object]:
    """Parse one request line into (id, raw clouds payload).

    Raises ProtocolError when no frame can be recovered at all; the caller
    then has no id to echo. A parsable frame with a bad or missing clouds
    payload is returned as-is so the caller can answer with an error frame.
    """
    try:
        frame = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"malformed frame: {exc}") from None
    if not isinstance(frame, dict) or not isinstance(frame.get("id"), int):
        raise ProtocolError("frame must be an object with an integer id")
    return frame["id"], frame.get("clouds")


def read_frame_line(rfile, max_frame: int = MAX_FRAME_BYTES) -> bytes | None:
    """One protocol line from a binary stream.

    Returns None on EOF. An oversized frame is drained to its newline and
    reported as ProtocolError so the stream stays aligned.
    """
    line = rfile.readline(max_frame + 1)
    if not line:
        return None
    if len(line) > max_frame:
        while line and not line.endswith(b"\n"):
            line = rfile.readline(max_frame)
        raise ProtocolError(f"frame exceeds {max_frame} bytes")
    return line
