"""Adapter parity against the certification engine.

A sweep certified through this adapter (loopback tcp and stdio) must
produce the same results table, byte for byte, as the engine running its
own in-process classifier, because the demo centroid model mirrors the
engine's reference classifier and the wire format round-trips floats
exactly. Wall-clock timing is the one column exempted from that claim.

The engine is only ever touched across a process boundary here; these
tests skip when it is not installed.
"""

import csv
import importlib.util
import json
import re
import socket
import subprocess
import sys
import time
from pathlib import Path

import pytest

from pyadapter.protocol import decode_request, encode_response

from conftest import record_verdict

FIXTURES = Path(__file__).parent / "fixtures"

needs_engine = pytest.mark.skipif(
    importlib.util.find_spec("deformcert") is None,
    reason="certification engine not installed")


def _engine(*args: str) -> None:
    subprocess.run([sys.executable, "-m", "deformcert.cli", *args],
                   check=True, capture_output=True, timeout=600)


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("shapes")
    _engine("gen", "--families", "sphere,cube,cylinder,cone", "--per-class", "3",
            "--points", "32", "--jitter", "0.02", "--seed", "11", "--out", str(d))
    return d


def _certify(data_dir: Path, out: Path, source_args: list[str]) -> None:
    _engine("certify", "--kind", "rotz", "--dist", "uniform", "--scales", "0.2,0.4",
            "--n0", "50", "--n", "200", "--alpha", "0.001", "--batch", "100",
            "--seed", "5", "--data", str(data_dir), "--out", str(out), *source_args)


def _rows_without_seconds(path: Path) -> list[list[str]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][11] == "seconds"
    return [row[:11] + row[12:] for row in rows]


class TestGoldenFixtures:
    def test_requests_decode(self):
        lines = (FIXTURES / "requests.ndjson").read_bytes().splitlines(keepends=True)
        assert len(lines) == 50
        for expected_id, line in enumerate(lines, start=1):
            rid, clouds = decode_request(line)
            assert rid == expected_id
            assert isinstance(clouds, list) and clouds

    def test_golden_responses_are_canonical(self):
        # re-encoding the engine's bytes with our encoder must be a no-op
        for line in (FIXTURES / "responses.golden.ndjson").read_bytes().splitlines(keepends=True):
            frame = json.loads(line)
            assert encode_response(frame["id"], frame["labels"]) == line

    def test_adapter_reproduces_golden_bytes(self):
        proc = subprocess.run(
            [sys.executable, "-m", "pyadapter", "--stdio",
             "--model", f"centroid:{FIXTURES / 'dataset'}"],
            input=(FIXTURES / "requests.ndjson").read_bytes(),
            capture_output=True, timeout=120)
        assert proc.returncode == 0
        assert proc.stdout == (FIXTURES / "responses.golden.ndjson").read_bytes()


@needs_engine
class TestCertifyParity:
    def test_tcp_and_stdio_match_in_process(self, data_dir, tmp_path):
        start = time.monotonic()
        in_proc = tmp_path / "in_process.csv"
        _certify(data_dir, in_proc, ["--model", f"centroid:{data_dir}"])

        via_stdio = tmp_path / "stdio.csv"
        stdio_cmd = (f"stdio:{sys.executable} -m pyadapter --stdio "
                     f"--model centroid:{data_dir}")
        _certify(data_dir, via_stdio, ["--oracle", stdio_cmd])

        via_tcp = tmp_path / "tcp.csv"
        adapter = subprocess.Popen(
            [sys.executable, "-m", "pyadapter", "--tcp", "127.0.0.1:0",
             "--model", f"centroid:{data_dir}"],
            stdout=subprocess.PIPE)
        try:
            announce = adapter.stdout.readline().decode()
            m = re.match(r"pyadapter listening tcp (\S+) (\d+)", announce)
            assert m, announce
            _certify(data_dir, via_tcp, ["--oracle", f"tcp:{m.group(1)}:{m.group(2)}"])
        finally:
            adapter.terminate()
            adapter.wait(timeout=30)

        reference = _rows_without_seconds(in_proc)
        stdio_rows = _rows_without_seconds(via_stdio)
        tcp_rows = _rows_without_seconds(via_tcp)
        ok = stdio_rows == reference and tcp_rows == reference
        detail = (f"{len(reference) - 1} rows, stdio {'==' if stdio_rows == reference else '!='} "
                  f"in-process, tcp {'==' if tcp_rows == reference else '!='} in-process, "
                  f"golden fixtures covered separately")
        record_verdict(f"criterion 9 (adapter parity): {'PASS' if ok else 'FAIL'} - {detail} "
                       f"[{time.monotonic() - start:.1f}s]")
        assert stdio_rows == reference
        assert tcp_rows == reference
