import struct

import numpy as np
import pytest

from pyadapter.dataset import (DatasetFormatError, load_dataset, read_cloud,
                               read_pcb, read_xyz)


def _write_pcb(path, points: np.ndarray) -> None:
    blob = b"PCB1" + struct.pack("<I", len(points))
    blob += np.asarray(points, dtype="<f4").tobytes()
    path.write_bytes(blob)


class TestReadXyz:
    def test_comments_and_blank_lines(self, tmp_path):
        p = tmp_path / "c.xyz"
        p.write_text("# header\n1.0 2.0 3.0\n\n 4.5 -1.25 0.0  # trailing\n")
        pts = read_xyz(p)
        assert pts.dtype == np.float64
        np.testing.assert_array_equal(pts, [[1.0, 2.0, 3.0], [4.5, -1.25, 0.0]])

    def test_wrong_field_count(self, tmp_path):
        p = tmp_path / "c.xyz"
        p.write_text("1.0 2.0\n")
        with pytest.raises(DatasetFormatError, match="expected 3 fields, got 2"):
            read_xyz(p)

    def test_non_numeric_field(self, tmp_path):
        p = tmp_path / "c.xyz"
        p.write_text("1.0 two 3.0\n")
        with pytest.raises(DatasetFormatError, match=":1:"):
            read_xyz(p)

    def test_empty_file(self, tmp_path):
        p = tmp_path / "c.xyz"
        p.write_text("# only a comment\n")
        with pytest.raises(DatasetFormatError, match="no points"):
            read_xyz(p)


class TestReadPcb:
    def test_round_trip(self, tmp_path):
        p = tmp_path / "c.pcb"
        pts = np.array([[1.5, -2.0, 0.25], [0.0, 4.0, -8.5]])
        _write_pcb(p, pts)
        out = read_pcb(p)
        assert out.dtype == np.float64
        np.testing.assert_array_equal(out, pts)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "c.pcb"
        p.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(DatasetFormatError, match="bad magic"):
            read_pcb(p)

    def test_truncated_payload(self, tmp_path):
        p = tmp_path / "c.pcb"
        p.write_bytes(b"PCB1" + struct.pack("<I", 3) + b"\x00" * 12)
        with pytest.raises(DatasetFormatError, match="expected 44 bytes for 3 points"):
            read_pcb(p)

    def test_zero_points(self, tmp_path):
        p = tmp_path / "c.pcb"
        p.write_bytes(b"PCB1" + struct.pack("<I", 0))
        with pytest.raises(DatasetFormatError):
            read_pcb(p)


class TestLoadDataset:
    def test_manifest_order(self, tmp_path):
        (tmp_path / "b.xyz").write_text("0.0 0.0 1.0\n")
        _write_pcb(tmp_path / "a.pcb", np.array([[1.0, 0.0, 0.0]]))
        (tmp_path / "labels.csv").write_text("file,label\nb.xyz,2\na.pcb,0\n")
        ds = load_dataset(tmp_path)
        assert [label for _, label in ds] == [2, 0]
        np.testing.assert_array_equal(ds[0][0], [[0.0, 0.0, 1.0]])
        np.testing.assert_array_equal(ds[1][0], [[1.0, 0.0, 0.0]])

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="labels.csv"):
            load_dataset(tmp_path)

    def test_empty_manifest(self, tmp_path):
        (tmp_path / "labels.csv").write_text("file,label\n")
        with pytest.raises(DatasetFormatError, match="empty dataset"):
            load_dataset(tmp_path)

    def test_unknown_suffix(self, tmp_path):
        (tmp_path / "c.ply").write_text("whatever")
        with pytest.raises(DatasetFormatError, match="unknown cloud suffix"):
            read_cloud(tmp_path / "c.ply")
