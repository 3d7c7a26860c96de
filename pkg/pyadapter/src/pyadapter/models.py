"""Demo label functions and the model-spec resolver.

A model is any callable taking a list of (N, 3) float arrays and
returning one integer label per cloud. Two demo models ship so the
adapter can be exercised (and compared against an in-process run) with no
ML framework behind it:

* ``constant:K`` answers K for everything.
* ``centroid:DATADIR`` fits class-mean feature centroids on the dataset
  in DATADIR. The statistics and their reduction order mirror the
  certification engine's reference classifier exactly, so both sides of
  the wire produce identical float64 features and identical labels.

``callable:MODULE:ATTR`` loads any user-supplied function instead.
"""

from __future__ import annotations

import importlib

import numpy as np

from .dataset import load_dataset

FEATURE_DIM = 7


def cloud_features(batch: np.ndarray) -> np.ndarray:
    """Order-invariant statistics of a (B, N, 3) batch, shape (B, 7).

    Per axis: coordinate mean and population standard deviation; plus the
    mean point norm.
    """
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 3 or batch.shape[2] != 3:
        raise ValueError(f"expected (B, N, 3), got shape {batch.shape}")
    means = batch.mean(axis=1)
    stds = batch.std(axis=1)
    norm_mean = np.linalg.norm(batch, axis=2).mean(axis=1)
    return np.concatenate([means, stds, norm_mean[:, None]], axis=1)


class ConstantModel:
    def __init__(self, label: int):
        self.label = int(label)

    def __call__(self, clouds) -> list[int]:
        return [self.label] * len(clouds)


class CentroidModel:
    """Nearest class centroid in feature space; ties go to the lowest label."""

    def __init__(self, centroids: np.ndarray):
        centroids = np.asarray(centroids, dtype=np.float64)
        if centroids.ndim != 2 or centroids.shape[1] != FEATURE_DIM or centroids.shape[0] < 1:
            raise ValueError(f"expected (classes, {FEATURE_DIM}) centroids, got {centroids.shape}")
        if not np.isfinite(centroids).all():
            raise ValueError("centroids must be finite")
        self.centroids = centroids

    def __call__(self, clouds) -> list[int]:
        labels: list[int] = []
        for pts in clouds:
            feats = cloud_features(np.asarray(pts, dtype=np.float64)[None, :, :])
            dists = ((feats[:, None, :] - self.centroids[None, :, :]) ** 2).sum(axis=2)
            labels.extend(int(i) for i in dists.argmin(axis=1))
        return labels


def fit_centroid_model(dataset) -> CentroidModel:
    """Average the features of each class; labels must cover 0..C-1."""
    per_class: dict[int, list[np.ndarray]] = {}
    for points, label in dataset:
        if label < 0:
            raise ValueError(f"labels must be >= 0, got {label}")
        per_class.setdefault(int(label), []).append(cloud_features(points[None])[0])
    if not per_class:
        raise ValueError("empty dataset")
    n_classes = max(per_class) + 1
    missing = [c for c in range(n_classes) if c not in per_class]
    if missing:
        raise ValueError(f"no examples for classes {missing}")
    return CentroidModel(np.stack([np.mean(per_class[c], axis=0) for c in range(n_classes)]))


def resolve_model(spec: str):
    """Build the callable named by a model spec string."""
    if spec.startswith("constant:"):
        return ConstantModel(int(spec[9:]))
    if spec.startswith("centroid:"):
        return fit_centroid_model(load_dataset(spec[9:]))
    if spec.startswith("callable:"):
        target = spec[9:]
        module_name, sep, attr = target.rpartition(":")
        if not sep or not module_name or not attr:
            raise ValueError(f"callable spec needs MODULE:ATTR, got {target!r}")
        fn = getattr(importlib.import_module(module_name), attr)
        if not callable(fn):
            raise ValueError(f"{target} is not callable")
        return fn
    raise ValueError(f"unknown model {spec!r} "
                     "(expected constant:K, centroid:DATADIR, or callable:MODULE:ATTR)")
