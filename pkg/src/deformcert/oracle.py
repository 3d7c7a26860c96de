"""Out-of-process classifiers over a newline-delimited JSON protocol.

One frame per line, UTF-8, strictly request/response on a single ordered
stream:

    request   {"id": N, "clouds": [[[x, y, z], ...], ...]}
    response  {"id": N, "labels": [k, ...]}
    failure   {"id": N, "error": "message"}

The same framing runs over a TCP connection or a child process's
stdin/stdout. Frames are capped at 64 MiB; the client times out per batch.
Serialization is canonical (no spaces, keys in the order shown, floats via
repr) so independent implementations can be compared byte for byte.
"""

from __future__ import annotations

import json
import shlex
import socket
import socketserver
import subprocess
import sys
import threading
from typing import Iterable

import numpy as np

from .cloud import PointCloud

DEFAULT_TIMEOUT = 30.0
MAX_FRAME_BYTES = 64 * 1024 * 1024


class OracleProtocolError(RuntimeError):
    """The peer violated the protocol or reported an error frame."""


class OracleTransportError(RuntimeError):
    """The connection failed: refused, closed early, or timed out."""


def _clouds_payload(clouds) -> list:
    if isinstance(clouds, np.ndarray):
        if clouds.ndim == 2:
            clouds = clouds[None, :, :]
        if clouds.ndim != 3 or clouds.shape[2] != 3:
            raise ValueError(f"expected (B, N, 3), got shape {clouds.shape}")
        return [[[float(v) for v in p] for p in cloud] for cloud in clouds]
    payload = []
    for item in clouds:
        pts = item.points if isinstance(item, PointCloud) else np.asarray(item, dtype=np.float64)
        payload.append([[float(v) for v in p] for p in pts])
    return payload


def encode_request(request_id: int, clouds) -> bytes:
    body = {"id": request_id, "clouds": _clouds_payload(clouds)}
    return json.dumps(body, separators=(",", ":")).encode("utf-8") + b"\n"


def encode_response(request_id: int, labels: Iterable[int]) -> bytes:
    body = {"id": request_id, "labels": [int(l) for l in labels]}
    return json.dumps(body, separators=(",", ":")).encode("utf-8") + b"\n"


def encode_error(request_id: int, message: str) -> bytes:
    body = {"id": request_id, "error": str(message)}
    return json.dumps(body, separators=(",", ":")).encode("utf-8") + b"\n"


def _decode_frame(line: bytes) -> dict:
    try:
        frame = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise OracleProtocolError(f"malformed frame: {exc}") from None
    if not isinstance(frame, dict) or not isinstance(frame.get("id"), int):
        raise OracleProtocolError("frame must be an object with an integer id")
    return frame


def _answer(classifier, frame: dict) -> bytes:
    """Serve one request frame; classifier failures become error frames."""
    rid = frame["id"]
    try:
        clouds = frame.get("clouds")
        if not isinstance(clouds, list) or not clouds:
            raise ValueError("request needs a nonempty clouds list")
        arrays = []
        for cloud in clouds:
            pts = np.asarray(cloud, dtype=np.float64)
            if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
                raise ValueError(f"each cloud must be (N, 3) with N >= 1, got shape {pts.shape}")
            if not np.isfinite(pts).all():
                raise ValueError("cloud coordinates must be finite")
            arrays.append(pts)
        labels = classifier.classify_batch(arrays)
        labels = [int(l) for l in labels]
        if len(labels) != len(arrays):
            raise ValueError(f"classifier returned {len(labels)} labels for {len(arrays)} clouds")
        return encode_response(rid, labels)
    except Exception as exc:
        return encode_error(rid, str(exc))


def _read_frame_line(rfile, max_frame: int) -> bytes | None:
    """One protocol line from a binary stream; None on EOF, error on oversize."""
    line = rfile.readline(max_frame + 1)
    if not line:
        return None
    if len(line) > max_frame:
        raise OracleProtocolError(f"frame exceeds {max_frame} bytes")
    return line


def serve_stream(classifier, rfile, wfile, max_frame: int = MAX_FRAME_BYTES) -> None:
    """Answer frames in order until EOF.

    A frame that is not even parsable (no recoverable id) terminates the
    stream, since request/response pairing is lost at that point.
    """
    while True:
        line = _read_frame_line(rfile, max_frame)
        if line is None:
            return
        frame = _decode_frame(line)
        wfile.write(_answer(classifier, frame))
        wfile.flush()


class OracleServer:
    """Threaded TCP server speaking the oracle protocol.

    Each connection gets its own ordered stream. Use as a context manager
    or call shutdown(); `address` reports the bound (host, port).
    """

    def __init__(self, classifier, host: str = "127.0.0.1", port: int = 0,
                 max_frame: int = MAX_FRAME_BYTES):
        outer = self

        class Handler(socketserver.StreamRequestHandler):
            def handle(self) -> None:
                try:
                    serve_stream(outer.classifier, self.rfile, self.wfile, outer.max_frame)
                except (OracleProtocolError, ConnectionError, BrokenPipeError):
                    pass  # drop the connection; the server keeps running

        class Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        self.classifier = classifier
        self.max_frame = max_frame
        self._server = Server((host, port), Handler)
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        host, port = self._server.server_address[:2]
        return str(host), int(port)

    def start(self) -> "OracleServer":
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._server.serve_forever()

    def shutdown(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5.0)

    def __enter__(self) -> "OracleServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.shutdown()


def serve_stdio(classifier, max_frame: int = MAX_FRAME_BYTES) -> None:
    """Serve the protocol on this process's stdin/stdout."""
    serve_stream(classifier, sys.stdin.buffer, sys.stdout.buffer, max_frame)


class _TcpTransport:
    def __init__(self, host: str, port: int, timeout: float):
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise OracleTransportError(f"cannot connect to {host}:{port}: {exc}") from None
        self._sock.settimeout(timeout)
        self._rfile = self._sock.makefile("rb")

    def round_trip(self, payload: bytes, max_frame: int) -> bytes:
        try:
            self._sock.sendall(payload)
            line = self._rfile.readline(max_frame + 1)
        except socket.timeout:
            raise OracleTransportError("timed out waiting for oracle response") from None
        except OSError as exc:
            raise OracleTransportError(f"connection failed: {exc}") from None
        if not line:
            raise OracleTransportError("connection closed by peer")
        return line

    def close(self) -> None:
        try:
            self._rfile.close()
            self._sock.close()
        except OSError:
            pass


class _StdioTransport:
    """Child process speaking the protocol on its stdin/stdout."""

    def __init__(self, command: str, timeout: float):
        self._timeout = timeout
        try:
            self._proc = subprocess.Popen(
                shlex.split(command), stdin=subprocess.PIPE, stdout=subprocess.PIPE)
        except OSError as exc:
            raise OracleTransportError(f"cannot spawn {command!r}: {exc}") from None

    def round_trip(self, payload: bytes, max_frame: int) -> bytes:
        result: list[bytes | None] = []

        def read():
            result.append(self._proc.stdout.readline(max_frame + 1))

        try:
            self._proc.stdin.write(payload)
            self._proc.stdin.flush()
        except (OSError, ValueError) as exc:
            raise OracleTransportError(f"oracle process rejected input: {exc}") from None
        reader = threading.Thread(target=read, daemon=True)
        reader.start()
        reader.join(self._timeout)
        if reader.is_alive():
            raise OracleTransportError("timed out waiting for oracle response")
        line = result[0] if result else None
        if not line:
            raise OracleTransportError("oracle process closed its stdout")
        return line

    def close(self) -> None:
        try:
            self._proc.stdin.close()
        except OSError:
            pass
        try:
            self._proc.wait(timeout=5.0)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()


class RemoteClassifier:
    """classify_batch over a protocol transport.

    `serial` marks the single in-flight-request constraint; callers that
    fan out across threads must funnel through the internal lock (the
    method already does).
    """

    serial = True

    def __init__(self, transport, timeout: float, max_frame: int = MAX_FRAME_BYTES):
        self._transport = transport
        self._timeout = timeout
        self._max_frame = max_frame
        self._next_id = 1
        self._lock = threading.Lock()

    def classify_batch(self, clouds) -> list[int]:
        sent = _clouds_payload(clouds)
        with self._lock:
            rid = self._next_id
            self._next_id += 1
            body = {"id": rid, "clouds": sent}
            payload = json.dumps(body, separators=(",", ":")).encode("utf-8") + b"\n"
            if len(payload) > self._max_frame:
                raise OracleProtocolError(f"request frame exceeds {self._max_frame} bytes")
            line = self._transport.round_trip(payload, self._max_frame)
        if len(line) > self._max_frame:
            raise OracleProtocolError(f"response frame exceeds {self._max_frame} bytes")
        frame = _decode_frame(line)
        if frame["id"] != rid:
            raise OracleProtocolError(f"response id {frame['id']} does not match request id {rid}")
        if "error" in frame:
            raise OracleProtocolError(f"oracle error: {frame['error']}")
        labels = frame.get("labels")
        if not isinstance(labels, list):
            raise OracleProtocolError("response carries neither labels nor error")
        if len(labels) != len(sent) or not all(isinstance(l, int) for l in labels):
            raise OracleProtocolError(f"expected {len(sent)} integer labels")
        return labels

    def close(self) -> None:
        self._transport.close()

    def __enter__(self) -> "RemoteClassifier":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def connect(spec: str, timeout: float = DEFAULT_TIMEOUT,
            max_frame: int = MAX_FRAME_BYTES) -> RemoteClassifier:
    """Open a classifier connection from a transport spec.

    ``tcp:HOST:PORT`` dials a TCP oracle; ``stdio:COMMAND`` spawns COMMAND
    (shell-style split) and speaks over its stdin/stdout.
    """
    if spec.startswith("tcp:"):
        rest = spec[4:]
        host, sep, port = rest.rpartition(":")
        if not sep or not host:
            raise ValueError(f"expected tcp:HOST:PORT, got {spec!r}")
        try:
            port_num = int(port)
        except ValueError:
            raise ValueError(f"bad port in {spec!r}") from None
        return RemoteClassifier(_TcpTransport(host, port_num, timeout), timeout, max_frame)
    if spec.startswith("stdio:"):
        command = spec[6:].strip()
        if not command:
            raise ValueError("stdio: needs a command")
        return RemoteClassifier(_StdioTransport(command, timeout), timeout, max_frame)
    raise ValueError(f"unknown transport {spec!r} (expected tcp:HOST:PORT or stdio:COMMAND)")
