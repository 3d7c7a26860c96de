"""Readers for the on-disk dataset layout: labels.csv plus XYZ/PCB clouds.

XYZ is whitespace-separated text, three floats per line, '#' starts a
comment. PCB is the little binary layout: magic "PCB1", u32le point count,
then 3N f32le coordinates. Both match the certification engine's files
byte for byte, so either side can read the other's datasets.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

PCB_MAGIC = b"PCB1"


class DatasetFormatError(ValueError):
    """A cloud file or manifest could not be parsed."""


def read_xyz(path) -> np.ndarray:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            fields = text.split()
            if len(fields) != 3:
                raise DatasetFormatError(f"{path}:{lineno}: expected 3 fields, got {len(fields)}")
            try:
                rows.append([float(f) for f in fields])
            except ValueError as exc:
                raise DatasetFormatError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise DatasetFormatError(f"{path}: no points")
    return np.asarray(rows, dtype=np.float64)


def read_pcb(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if len(blob) < 8 or blob[:4] != PCB_MAGIC:
        raise DatasetFormatError(f"{path}: bad magic, not a PCB1 file")
    (count,) = struct.unpack_from("<I", blob, 4)
    expected = 8 + 12 * count
    if count < 1 or len(blob) != expected:
        raise DatasetFormatError(f"{path}: expected {expected} bytes for {count} points, "
                                 f"got {len(blob)}")
    flat = np.frombuffer(blob, dtype="<f4", offset=8)
    return flat.reshape(count, 3).astype(np.float64)


def read_cloud(path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".xyz":
        return read_xyz(path)
    if path.suffix == ".pcb":
        return read_pcb(path)
    raise DatasetFormatError(f"{path}: unknown cloud suffix {path.suffix!r}")


def load_dataset(directory) -> list[tuple[np.ndarray, int]]:
    """(points, label) pairs in manifest order."""
    directory = Path(directory)
    manifest = directory / "labels.csv"
    if not manifest.exists():
        raise FileNotFoundError(f"{manifest}: dataset manifest not found")
    dataset = []
    with open(manifest, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            dataset.append((read_cloud(directory / row["file"]), int(row["label"])))
    if not dataset:
        raise DatasetFormatError(f"{manifest}: empty dataset")
    return dataset
