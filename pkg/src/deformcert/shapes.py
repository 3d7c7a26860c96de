"""Synthetic shape families for experiments.

Four families, each sampled on the surface of a canonical solid and then
normalized (centroid at the origin, farthest point at norm 1):

* sphere    -- unit sphere
* cube      -- faces of an axis-aligned cube
* cylinder  -- axis along x, so z-rotations move it
* cone      -- axis along y, likewise

Optional Gaussian jitter roughens the surface before normalization. All
sampling is driven by a single Generator, so a (family, n_points, jitter,
seed) tuple pins the cloud bitwise.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .cloud import PointCloud, normalize, read_cloud, write_cloud

FAMILIES = ("sphere", "cube", "cylinder", "cone")


@dataclass(frozen=True)
class ShapeSpec:
    family: str
    n_points: int
    jitter: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r} (expected one of {FAMILIES})")
        if self.n_points < 4:
            raise ValueError(f"need at least 4 points, got {self.n_points}")
        if self.jitter < 0:
            raise ValueError(f"jitter must be >= 0, got {self.jitter}")


def _sphere(n: int, rng: np.random.Generator) -> np.ndarray:
    # Antipodal pairs sum to zero, so the centroid stays exactly at the
    # origin and normalization cannot pull any unit vector off norm 1. An
    # odd count gets one great-circle equilateral triple (also zero-sum).
    pts = []
    remaining = n
    if remaining % 2 == 1:
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        helper = rng.normal(size=3)
        u = np.cross(axis, helper)
        u /= np.linalg.norm(u)
        v = np.cross(axis, u)
        for angle in (0.0, 2.0 * np.pi / 3.0, 4.0 * np.pi / 3.0):
            pts.append(np.cos(angle) * u + np.sin(angle) * v)
        remaining -= 3
    for _ in range(remaining // 2):
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        pts.append(d)
        pts.append(-d)
    return np.stack(pts)


def _cube(n: int, rng: np.random.Generator) -> np.ndarray:
    faces = rng.integers(0, 6, n)
    uv = rng.uniform(-1.0, 1.0, (n, 2))
    pts = np.empty((n, 3))
    axis = faces // 2
    sign = np.where(faces % 2 == 0, 1.0, -1.0)
    for i in range(n):
        others = [a for a in range(3) if a != axis[i]]
        pts[i, axis[i]] = sign[i]
        pts[i, others[0]] = uv[i, 0]
        pts[i, others[1]] = uv[i, 1]
    return pts


def _cylinder(n: int, rng: np.random.Generator) -> np.ndarray:
    # Axis along x: half-length 1, radius 0.45; area-weighted lateral/caps.
    radius, half = 0.45, 1.0
    lateral = 2.0 * np.pi * radius * (2.0 * half)
    caps = 2.0 * np.pi * radius**2
    on_side = rng.uniform(0.0, 1.0, n) < lateral / (lateral + caps)
    theta = rng.uniform(0.0, 2.0 * np.pi, n)
    pts = np.empty((n, 3))
    for i in range(n):
        if on_side[i]:
            x = rng.uniform(-half, half)
            r = radius
        else:
            x = half if rng.uniform() < 0.5 else -half
            r = radius * np.sqrt(rng.uniform())
        pts[i] = (x, r * np.cos(theta[i]), r * np.sin(theta[i]))
    return pts


def _cone(n: int, rng: np.random.Generator) -> np.ndarray:
    # Axis along y: apex at y=1, base disk of radius 0.8 at y=-1.
    radius, height = 0.8, 2.0
    slant = np.pi * radius * np.sqrt(radius**2 + height**2)
    base = np.pi * radius**2
    on_side = rng.uniform(0.0, 1.0, n) < slant / (slant + base)
    theta = rng.uniform(0.0, 2.0 * np.pi, n)
    pts = np.empty((n, 3))
    for i in range(n):
        if on_side[i]:
            t = np.sqrt(rng.uniform())  # area grows with distance from apex
            y = 1.0 - height * t
            r = radius * t
        else:
            y = -1.0
            r = radius * np.sqrt(rng.uniform())
        pts[i] = (r * np.cos(theta[i]), y, r * np.sin(theta[i]))
    return pts


_SAMPLERS = {"sphere": _sphere, "cube": _cube, "cylinder": _cylinder, "cone": _cone}


def generate_shape(spec: ShapeSpec) -> PointCloud:
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, FAMILIES.index(spec.family)]))
    pts = _SAMPLERS[spec.family](spec.n_points, rng)
    if spec.jitter > 0:
        pts = pts + rng.normal(0.0, spec.jitter, pts.shape)
    if spec.family == "sphere" and spec.jitter == 0.0:
        # Already centered with max norm exactly 1; normalize() would divide
        # by a max-norm float and can nudge points past the 1e-6 gate.
        return PointCloud(pts, normalized=True)
    return normalize(PointCloud(pts))


def make_dataset(families: Sequence[str], per_class: int, n_points: int,
                 jitter: float, seed: int) -> list[tuple[PointCloud, int]]:
    """per_class clouds per family, labeled by family index; per-cloud seeds
    are substreams of `seed` so any single cloud can be regenerated alone."""
    dataset = []
    for label, family in enumerate(families):
        for i in range(per_class):
            sub = int(np.random.SeedSequence([seed, label, i]).generate_state(1)[0])
            cloud = generate_shape(ShapeSpec(family, n_points, jitter, sub))
            dataset.append((cloud, label))
    return dataset


def save_dataset(dataset: Sequence[tuple[PointCloud, int]], directory,
                 fmt: str = "xyz") -> None:
    """Write clouds plus a labels.csv manifest into `directory`."""
    if fmt not in ("xyz", "pcb"):
        raise ValueError(f"unknown format {fmt!r}")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "labels.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["file", "label"])
        for i, (cloud, label) in enumerate(dataset):
            name = f"cloud_{i:05d}.{fmt}"
            write_cloud(cloud, directory / name)
            writer.writerow([name, label])


def load_dataset(directory) -> list[tuple[PointCloud, int]]:
    directory = Path(directory)
    manifest = directory / "labels.csv"
    if not manifest.exists():
        raise FileNotFoundError(f"{manifest}: dataset manifest not found")
    dataset = []
    with open(manifest, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            dataset.append((read_cloud(directory / row["file"]), int(row["label"])))
    if not dataset:
        raise ValueError(f"{manifest}: empty dataset")
    return dataset
