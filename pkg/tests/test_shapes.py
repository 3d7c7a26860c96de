"""Shape generation and dataset IO."""

import numpy as np
import pytest

from deformcert import FAMILIES, ShapeSpec, generate_shape, load_dataset, make_dataset, save_dataset


class TestGenerate:
    @pytest.mark.parametrize("family", FAMILIES)
    @pytest.mark.parametrize("n", [16, 65, 256])
    def test_normalized_invariants(self, family, n):
        cloud = generate_shape(ShapeSpec(family, n, jitter=0.02, seed=5))
        assert cloud.n_points == n
        assert cloud.normalized
        assert np.abs(cloud.points.mean(axis=0)).max() <= 1e-6
        assert abs(np.linalg.norm(cloud.points, axis=1).max() - 1.0) <= 1e-6

    def test_unit_sphere_all_points_on_surface(self):
        # no jitter: every point must sit on the sphere, not only the farthest
        for n in (16, 17):
            cloud = generate_shape(ShapeSpec("sphere", n, jitter=0.0, seed=1))
            norms = np.linalg.norm(cloud.points, axis=1)
            assert np.abs(norms - 1.0).max() <= 1e-6

    def test_deterministic(self):
        spec = ShapeSpec("cone", 40, 0.01, seed=9)
        a = generate_shape(spec)
        b = generate_shape(spec)
        assert np.array_equal(a.points, b.points)

    def test_families_distinct(self):
        clouds = {f: generate_shape(ShapeSpec(f, 128, 0.0, seed=3)) for f in FAMILIES}
        # per-axis stds differ across families; cylinder is long in x, cone in y
        stds = {f: c.points.std(axis=0) for f, c in clouds.items()}
        assert stds["cylinder"][0] > stds["cylinder"][1] * 1.5
        assert stds["cone"][1] > stds["cone"][0] * 1.2
        assert abs(stds["sphere"][0] - stds["sphere"][2]) < 0.1

    def test_validation(self):
        with pytest.raises(ValueError):
            ShapeSpec("torus", 10)
        with pytest.raises(ValueError):
            ShapeSpec("cube", 2)
        with pytest.raises(ValueError):
            ShapeSpec("cube", 10, jitter=-0.1)


class TestDataset:
    def test_make_labels_by_family(self):
        data = make_dataset(("cube", "sphere"), 3, 16, 0.0, seed=0)
        assert [y for _, y in data] == [0, 0, 0, 1, 1, 1]

    def test_round_trip_xyz_and_pcb(self, tmp_path):
        data = make_dataset(FAMILIES, 2, 16, 0.01, seed=1)
        for fmt in ("xyz", "pcb"):
            directory = tmp_path / fmt
            save_dataset(data, directory, fmt=fmt)
            back = load_dataset(directory)
            assert [y for _, y in back] == [y for _, y in data]
            for (a, _), (b, _) in zip(data, back):
                tol = 0.0 if fmt == "xyz" else 1e-6  # pcb stores float32
                assert np.allclose(a.points, b.points, atol=tol)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_dataset(tmp_path)
