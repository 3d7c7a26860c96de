"""Point clouds and their on-disk formats.

Two interchange formats are supported:

* ``.xyz``  -- text, one point per line as three float fields, ``#`` starts
  a comment, blank lines ignored.
* ``.pcb``  -- binary, magic ``PCB1``, u32 little-endian point count, then
  3N float32 little-endian coordinates in x,y,z point order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CENTROID_TOL = 1e-6
NORM_TOL = 1e-6

PCB_MAGIC = b"PCB1"


class CloudFormatError(ValueError):
    """A point-cloud file could not be parsed."""


@dataclass(frozen=True)
class PointCloud:
    """An ordered set of N >= 1 points in R^3 as an (N, 3) float64 array.

    A cloud flagged ``normalized`` promises centroid at the origin (within
    1e-6 per axis) and maximum point norm within 1e-6 of 1; the promise is
    checked at construction. Point order is meaningful and preserved by
    every operation in this package.
    """

    points: np.ndarray
    normalized: bool = False

    def __post_init__(self) -> None:
        pts = np.array(self.points, dtype=np.float64, copy=True, order="C")
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
            raise ValueError(f"expected an (N, 3) array with N >= 1, got shape {pts.shape}")
        if not np.isfinite(pts).all():
            raise ValueError("point coordinates must be finite")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)
        if self.normalized:
            centroid = pts.mean(axis=0)
            if np.abs(centroid).max() > CENTROID_TOL:
                raise ValueError(f"cloud flagged normalized but centroid is {centroid}")
            top = float(np.linalg.norm(pts, axis=1).max())
            if abs(top - 1.0) > NORM_TOL:
                raise ValueError(f"cloud flagged normalized but max point norm is {top}")

    @property
    def n_points(self) -> int:
        return self.points.shape[0]


def normalize(cloud: PointCloud) -> PointCloud:
    """Center the cloud at the origin and scale the farthest point to norm 1."""
    pts = cloud.points - cloud.points.mean(axis=0)
    top = float(np.linalg.norm(pts, axis=1).max())
    if top <= 0.0:
        raise ValueError("cannot normalize a cloud whose points are all identical")
    return PointCloud(pts / top, normalized=True)


def read_xyz(path) -> PointCloud:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            fields = text.split()
            if len(fields) != 3:
                raise CloudFormatError(f"{path}:{lineno}: expected 3 fields, got {len(fields)}")
            try:
                rows.append([float(f) for f in fields])
            except ValueError as exc:
                raise CloudFormatError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise CloudFormatError(f"{path}: no points")
    return PointCloud(np.asarray(rows, dtype=np.float64))


def write_xyz(cloud: PointCloud, path, comment: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        for x, y, z in cloud.points.tolist():
            fh.write(f"{x!r} {y!r} {z!r}\n")


def read_pcb(path) -> PointCloud:
    blob = Path(path).read_bytes()
    if len(blob) < 8 or blob[:4] != PCB_MAGIC:
        raise CloudFormatError(f"{path}: bad magic, not a PCB1 file")
    (count,) = struct.unpack_from("<I", blob, 4)
    if count < 1:
        raise CloudFormatError(f"{path}: point count must be >= 1, got {count}")
    expected = 8 + 12 * count
    if len(blob) != expected:
        raise CloudFormatError(f"{path}: expected {expected} bytes for {count} points, got {len(blob)}")
    coords = np.frombuffer(blob, dtype="<f4", offset=8).reshape(count, 3)
    if not np.isfinite(coords).all():
        raise CloudFormatError(f"{path}: non-finite coordinates")
    return PointCloud(coords.astype(np.float64))


def write_pcb(cloud: PointCloud, path) -> None:
    coords = np.ascontiguousarray(cloud.points, dtype="<f4")
    if not np.isfinite(coords).all():
        raise CloudFormatError("coordinates overflow float32")
    with open(path, "wb") as fh:
        fh.write(PCB_MAGIC)
        fh.write(struct.pack("<I", cloud.n_points))
        fh.write(coords.tobytes())


def read_cloud(path) -> PointCloud:
    suffix = Path(path).suffix.lower()
    if suffix == ".xyz":
        return read_xyz(path)
    if suffix == ".pcb":
        return read_pcb(path)
    raise CloudFormatError(f"{path}: unknown cloud format {suffix!r} (expected .xyz or .pcb)")


def write_cloud(cloud: PointCloud, path) -> None:
    suffix = Path(path).suffix.lower()
    if suffix == ".xyz":
        write_xyz(cloud, path)
    elif suffix == ".pcb":
        write_pcb(cloud, path)
    else:
        raise CloudFormatError(f"{path}: unknown cloud format {suffix!r} (expected .xyz or .pcb)")
