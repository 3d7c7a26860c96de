"""The adapter loop: answer label queries around a wrapped callable.

Handles one stream at a time, strictly in order. Anything that goes wrong
inside a request (bad payload, oversized batch, model exception) becomes
an error frame on the same id; a frame with no recoverable id gets id -1.
EOF ends the stream cleanly.
"""

from __future__ import annotations

import socket
import sys
from dataclasses import dataclass

import numpy as np

from .protocol import (MAX_FRAME_BYTES, UNKNOWN_ID, ProtocolError, encode_error,
                       encode_response, decode_request, read_frame_line)

DEFAULT_MAX_BATCH = 4096


@dataclass(frozen=True)
class AdapterConfig:
    """Transport choice, wrapped model, and the per-request batch cap."""

    transport: str                 # "stdio" or "tcp:HOST:PORT"
    model: object                  # callable: list of (N, 3) arrays -> list of int labels
    max_batch: int = DEFAULT_MAX_BATCH
    max_frame: int = MAX_FRAME_BYTES

    def __post_init__(self) -> None:
        if self.transport != "stdio" and not self.transport.startswith("tcp:"):
            raise ValueError(f"transport must be 'stdio' or 'tcp:HOST:PORT', "
                             f"got {self.transport!r}")
        if not callable(self.model):
            raise ValueError("model must be callable")
        if self.max_batch < 1:
            raise ValueError(f"max_batch must be >= 1, got {self.max_batch}")


def _parse_clouds(payload, max_batch: int) -> list[np.ndarray]:
    if not isinstance(payload, list) or not payload:
        raise ValueError("request needs a nonempty clouds list")
    if len(payload) > max_batch:
        raise ValueError(f"request carries {len(payload)} clouds, cap is {max_batch}")
    arrays = []
    for cloud in payload:
        try:
            pts = np.asarray(cloud, dtype=np.float64)
        except (TypeError, ValueError):
            # ragged or non-numeric nesting never reaches ndarray shape checks
            raise ValueError("each cloud must be (N, 3) with N >= 1") from None
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
            raise ValueError(f"each cloud must be (N, 3) with N >= 1, got shape {pts.shape}")
        if not np.isfinite(pts).all():
            raise ValueError("cloud coordinates must be finite")
        arrays.append(pts)
    return arrays


def answer_line(model, line: bytes, max_batch: int = DEFAULT_MAX_BATCH) -> bytes:
    """One response (or error) frame for one raw request line."""
    try:
        rid, payload = decode_request(line)
    except ProtocolError as exc:
        return encode_error(UNKNOWN_ID, str(exc))
    try:
        arrays = _parse_clouds(payload, max_batch)
        labels = [int(l) for l in model(arrays)]
        if len(labels) != len(arrays):
            raise ValueError(f"model returned {len(labels)} labels for {len(arrays)} clouds")
        return encode_response(rid, labels)
    except Exception as exc:
        return encode_error(rid, str(exc))


def serve_stream(model, rfile, wfile, max_batch: int = DEFAULT_MAX_BATCH,
                 max_frame: int = MAX_FRAME_BYTES) -> None:
    """Answer frames in order until EOF."""
    while True:
        try:
            line = read_frame_line(rfile, max_frame)
        except ProtocolError as exc:
            wfile.write(encode_error(UNKNOWN_ID, str(exc)))
            wfile.flush()
            continue
        if line is None:
            return
        wfile.write(answer_line(model, line, max_batch))
        wfile.flush()


def run_adapter(config: AdapterConfig) -> int:
    """Serve until EOF (stdio) or until the process is stopped (tcp).

    TCP handles a single connection at a time: accept, drain the stream,
    then accept the next. The bound address is announced on stdout so a
    parent process can dial port 0 picks.
    """
    if config.transport == "stdio":
        serve_stream(config.model, sys.stdin.buffer, sys.stdout.buffer,
                     config.max_batch, config.max_frame)
        return 0
    host, sep, port = config.transport[4:].rpartition(":")
    if not sep or not host:
        raise ValueError(f"expected tcp:HOST:PORT, got {config.transport!r}")
    with socket.create_server((host, int(port))) as server:
        bound_host, bound_port = server.getsockname()[:2]
        print(f"pyadapter listening tcp {bound_host} {bound_port}", flush=True)
        while True:
            conn, _ = server.accept()
            with conn:
                rfile = conn.makefile("rb")
                wfile = conn.makefile("wb")
                try:
                    serve_stream(config.model, rfile, wfile,
                                 config.max_batch, config.max_frame)
                except (ConnectionError, BrokenPipeError):
                    pass
    return 0
