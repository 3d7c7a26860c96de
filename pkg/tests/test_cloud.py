"""PointCloud construction, normalization, and file formats."""

import struct

import numpy as np
import pytest

from deformcert import CloudFormatError, PointCloud, normalize, read_cloud, write_cloud
from deformcert.cloud import read_pcb, read_xyz, write_pcb, write_xyz


class TestPointCloud:
    def test_copies_and_freezes_points(self):
        src = np.ones((2, 3))
        c = PointCloud(src)
        src[0, 0] = 99.0
        assert c.points[0, 0] == 1.0
        with pytest.raises(ValueError):
            c.points[0, 0] = 5.0

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            PointCloud(np.zeros((0, 3)))
        with pytest.raises(ValueError):
            PointCloud(np.zeros((4, 2)))
        with pytest.raises(ValueError):
            PointCloud(np.zeros(3))

    def test_rejects_non_finite(self):
        pts = np.zeros((2, 3))
        pts[1, 2] = np.inf
        with pytest.raises(ValueError):
            PointCloud(pts)

    def test_normalized_flag_checked(self):
        with pytest.raises(ValueError):
            PointCloud(np.array([[1.0, 0, 0], [3.0, 0, 0]]), normalized=True)
        ok = PointCloud(np.array([[1.0, 0, 0], [-1.0, 0, 0]]), normalized=True)
        assert ok.normalized

    def test_degenerate_cloud_allowed_unnormalized(self):
        c = PointCloud(np.zeros((5, 3)))
        assert c.n_points == 5


class TestNormalize:
    def test_centroid_and_max_norm(self):
        rng = np.random.default_rng(0)
        c = normalize(PointCloud(rng.normal(size=(50, 3)) * 7 + 3))
        assert np.abs(c.points.mean(axis=0)).max() < 1e-9
        assert abs(np.linalg.norm(c.points, axis=1).max() - 1.0) < 1e-9
        assert c.normalized

    def test_degenerate_cloud_rejected(self):
        with pytest.raises(ValueError):
            normalize(PointCloud(np.ones((4, 3))))


class TestXyz:
    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(1)
        c = PointCloud(rng.normal(size=(17, 3)))
        path = tmp_path / "c.xyz"
        write_xyz(c, path, comment="test cloud")
        back = read_xyz(path)
        assert np.array_equal(back.points, c.points)

    def test_comments_and_blanks_skipped(self, tmp_path):
        path = tmp_path / "c.xyz"
        path.write_text("# header\n\n1 2 3\n4 5 6  # trailing note\n")
        c = read_xyz(path)
        assert np.array_equal(c.points, [[1, 2, 3], [4, 5, 6]])

    def test_wrong_field_count(self, tmp_path):
        path = tmp_path / "c.xyz"
        path.write_text("1 2\n")
        with pytest.raises(CloudFormatError, match="expected 3 fields"):
            read_xyz(path)

    def test_bad_float(self, tmp_path):
        path = tmp_path / "c.xyz"
        path.write_text("1 2 zebra\n")
        with pytest.raises(CloudFormatError):
            read_xyz(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "c.xyz"
        path.write_text("# nothing here\n")
        with pytest.raises(CloudFormatError, match="no points"):
            read_xyz(path)


class TestPcb:
    def test_round_trip_float32_exact(self, tmp_path):
        rng = np.random.default_rng(2)
        pts = rng.normal(size=(9, 3)).astype(np.float32).astype(np.float64)
        path = tmp_path / "c.pcb"
        write_pcb(PointCloud(pts), path)
        back = read_pcb(path)
        assert np.array_equal(back.points, pts)

    def test_header_layout(self, tmp_path):
        path = tmp_path / "c.pcb"
        write_pcb(PointCloud([[1.0, 2.0, 3.0]]), path)
        blob = path.read_bytes()
        assert blob[:4] == b"PCB1"
        assert struct.unpack_from("<I", blob, 4)[0] == 1
        assert np.frombuffer(blob, dtype="<f4", offset=8).tolist() == [1.0, 2.0, 3.0]

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "c.pcb"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(CloudFormatError, match="magic"):
            read_pcb(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "c.pcb"
        path.write_bytes(b"PCB1" + struct.pack("<I", 2) + b"\x00" * 12)
        with pytest.raises(CloudFormatError, match="expected"):
            read_pcb(path)

    def test_zero_points(self, tmp_path):
        path = tmp_path / "c.pcb"
        path.write_bytes(b"PCB1" + struct.pack("<I", 0))
        with pytest.raises(CloudFormatError):
            read_pcb(path)


class TestDispatch:
    def test_by_suffix(self, tmp_path):
        c = PointCloud([[1.0, 2.0, 3.0]])
        for name in ("a.xyz", "a.pcb"):
            write_cloud(c, tmp_path / name)
            assert read_cloud(tmp_path / name).n_points == 1

    def test_unknown_suffix(self, tmp_path):
        with pytest.raises(CloudFormatError):
            write_cloud(PointCloud([[0.0, 0, 0]]), tmp_path / "a.ply")
        with pytest.raises(CloudFormatError):
            read_cloud(tmp_path / "a.ply")
