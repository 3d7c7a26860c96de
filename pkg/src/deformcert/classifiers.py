"""Built-in point-cloud classifiers.

Two bases are provided for the certification engine: an analytic
nearest-centroid classifier over simple order-invariant cloud statistics,
and a small point-wise MLP with global max pooling trained by plain SGD.
Both expose ``classify_batch`` and deterministic tie-breaking (lowest label
wins), which is all the smoothing layer requires of a classifier.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .cloud import PointCloud
from .flows import DeformationKind, Distribution, flow_many, param_dim

FEATURE_DIM = 7

WEIGHT_MAGIC = b"MLPW"
WEIGHT_VERSION = 1

# Point-wise feature widths: 3 -> 32 -> 64, max pool, then 64 -> 32 -> classes.
HIDDEN_POINT = (32, 64)
HIDDEN_HEAD = 32


class WeightFormatError(ValueError):
    """A weight file could not be parsed or has inconsistent shapes."""


class TrainingDivergedError(RuntimeError):
    """Training produced a non-finite loss."""


def cloud_features(batch: np.ndarray) -> np.ndarray:
    """Order-invariant statistics of a (B, N, 3) batch, shape (B, 7).

    Per axis: coordinate mean and population standard deviation; plus the
    mean point norm. Permuting points leaves the features unchanged.
    """
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 3 or batch.shape[2] != 3:
        raise ValueError(f"expected (B, N, 3), got shape {batch.shape}")
    means = batch.mean(axis=1)
    stds = batch.std(axis=1)
    norm_mean = np.linalg.norm(batch, axis=2).mean(axis=1)
    return np.concatenate([means, stds, norm_mean[:, None]], axis=1)


def _stacked(clouds) -> list[np.ndarray]:
    """Normalize a classify_batch argument to a list of (B, N, 3) stacks.

    Accepts a single (B, N, 3) array, a single (N, 3) array, or a sequence
    of PointCloud/(N, 3) arrays of possibly different cardinalities.
    """
    if isinstance(clouds, np.ndarray):
        if clouds.ndim == 3:
            return [clouds]
        if clouds.ndim == 2:
            return [clouds[None, :, :]]
        raise ValueError(f"expected (B, N, 3) or (N, 3), got shape {clouds.shape}")
    stacks = []
    for item in clouds:
        pts = item.points if isinstance(item, PointCloud) else np.asarray(item, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"expected (N, 3) per cloud, got shape {pts.shape}")
        stacks.append(pts[None, :, :])
    if not stacks:
        raise ValueError("empty batch")
    return stacks


@dataclass(frozen=True)
class CentroidClassifier:
    """Nearest class centroid in feature space; ties go to the lowest label."""

    centroids: np.ndarray  # (classes, FEATURE_DIM)
    serial = False

    def __post_init__(self) -> None:
        cents = np.array(self.centroids, dtype=np.float64, copy=True)
        if cents.ndim != 2 or cents.shape[1] != FEATURE_DIM or cents.shape[0] < 1:
            raise ValueError(f"expected (classes, {FEATURE_DIM}) centroids, got {cents.shape}")
        if not np.isfinite(cents).all():
            raise ValueError("centroids must be finite")
        cents.flags.writeable = False
        object.__setattr__(self, "centroids", cents)

    @property
    def n_classes(self) -> int:
        return self.centroids.shape[0]

    def classify_batch(self, clouds) -> list[int]:
        labels: list[int] = []
        for stack in _stacked(clouds):
            feats = cloud_features(stack)
            dists = ((feats[:, None, :] - self.centroids[None, :, :]) ** 2).sum(axis=2)
            labels.extend(int(i) for i in dists.argmin(axis=1))
        return labels


def fit_centroids(dataset: Iterable[tuple[PointCloud, int]]) -> CentroidClassifier:
    """Average the features of each class; labels must cover 0..C-1."""
    per_class: dict[int, list[np.ndarray]] = {}
    for cloud, label in dataset:
        if label < 0:
            raise ValueError(f"labels must be >= 0, got {label}")
        per_class.setdefault(int(label), []).append(cloud_features(cloud.points[None])[0])
    if not per_class:
        raise ValueError("empty dataset")
    n_classes = max(per_class) + 1
    missing = [c for c in range(n_classes) if c not in per_class]
    if missing:
        raise ValueError(f"no examples for classes {missing}")
    cents = np.stack([np.mean(per_class[c], axis=0) for c in range(n_classes)])
    return CentroidClassifier(cents)


@dataclass(frozen=True)
class ConstantClassifier:
    """Always answers `label`; handy for protocol and calibration tests."""

    label: int
    serial = False

    def classify_batch(self, clouds) -> list[int]:
        return [self.label] * sum(stack.shape[0] for stack in _stacked(clouds))


# --- max-pool MLP -----------------------------------------------------------

# Weights are stored float32 (matching the file format bit-for-bit); all
# arithmetic runs in float64 for deterministic, gradient-check-friendly math.


@dataclass(frozen=True)
class MlpClassifier:
    """Point-wise MLP with global max pooling.

    Architecture: per point 3 -> 32 -> 64 with ReLU, coordinate-wise max
    over points, then 64 -> 32 -> classes with ReLU between. Layer weights
    are (rows=out, cols=in) float32; biases per row.
    """

    weights: tuple[np.ndarray, ...]  # (W1, b1, W2, b2, W3, b3, W4, b4)
    serial = False

    def __post_init__(self) -> None:
        if len(self.weights) != 8:
            raise ValueError(f"expected 4 weight/bias pairs, got {len(self.weights)} arrays")
        frozen = []
        for arr in self.weights:
            arr = np.array(arr, dtype=np.float32, copy=True)
            if not np.isfinite(arr).all():
                raise ValueError("weights must be finite")
            arr.flags.writeable = False
            frozen.append(arr)
        w1, b1, w2, b2, w3, b3, w4, b4 = frozen
        shapes = [w.shape for w in (w1, w2, w3, w4)]
        expect = [(HIDDEN_POINT[0], 3), (HIDDEN_POINT[1], HIDDEN_POINT[0]),
                  (HIDDEN_HEAD, HIDDEN_POINT[1]), (w4.shape[0], HIDDEN_HEAD)]
        if shapes != expect or w4.shape[0] < 1:
            raise ValueError(f"unexpected layer shapes {shapes}")
        for w, b in ((w1, b1), (w2, b2), (w3, b3), (w4, b4)):
            if b.shape != (w.shape[0],):
                raise ValueError(f"bias shape {b.shape} does not match weight rows {w.shape[0]}")
        object.__setattr__(self, "weights", tuple(frozen))

    @property
    def n_classes(self) -> int:
        return self.weights[6].shape[0]

    def score_batch(self, batch: np.ndarray) -> np.ndarray:
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim != 3 or batch.shape[2] != 3:
            raise ValueError(f"expected (B, N, 3), got shape {batch.shape}")
        params = [w.astype(np.float64) for w in self.weights]
        scores, _ = _forward(params, batch)
        return scores

    def classify_batch(self, clouds) -> list[int]:
        labels: list[int] = []
        for stack in _stacked(clouds):
            labels.extend(int(i) for i in self.score_batch(stack).argmax(axis=1))
        return labels


def mlp_scores(model: MlpClassifier, cloud: PointCloud) -> np.ndarray:
    """Class scores (C,) for a single cloud."""
    return model.score_batch(cloud.points[None])[0]


def _forward(params: list[np.ndarray], batch: np.ndarray):
    """Scores (B, C) plus the intermediates the backward pass needs."""
    w1, b1, w2, b2, w3, b3, w4, b4 = params
    z1 = batch @ w1.T + b1            # (B, N, 32)
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ w2.T + b2               # (B, N, 64)
    a2 = np.maximum(z2, 0.0)
    pool_idx = a2.argmax(axis=1)      # (B, 64)
    pooled = np.take_along_axis(a2, pool_idx[:, None, :], axis=1)[:, 0, :]
    z3 = pooled @ w3.T + b3           # (B, 32)
    a3 = np.maximum(z3, 0.0)
    scores = a3 @ w4.T + b4           # (B, C)
    return scores, (batch, z1, a1, z2, a2, pool_idx, pooled, z3, a3)


def _loss_and_grads(params: list[np.ndarray], batch: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy and gradients for every weight and bias."""
    w1, b1, w2, b2, w3, b3, w4, b4 = params
    scores, ctx = _forward(params, batch)
    batch_pts, z1, a1, z2, a2, pool_idx, pooled, z3, a3 = ctx
    b = scores.shape[0]

    shifted = scores - scores.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    loss = float(-np.mean(np.log(probs[np.arange(b), labels] + 1e-300)))

    d_scores = probs.copy()
    d_scores[np.arange(b), labels] -= 1.0
    d_scores /= b

    g_w4 = d_scores.T @ a3
    g_b4 = d_scores.sum(axis=0)
    d_a3 = d_scores @ w4
    d_z3 = d_a3 * (z3 > 0.0)
    g_w3 = d_z3.T @ pooled
    g_b3 = d_z3.sum(axis=0)
    d_pool = d_z3 @ w3                # (B, 64)

    # Max pool routes each channel's gradient to its argmax point alone.
    d_a2 = np.zeros_like(a2)
    np.put_along_axis(d_a2, pool_idx[:, None, :], d_pool[:, None, :], axis=1)
    d_z2 = d_a2 * (z2 > 0.0)
    g_w2 = np.einsum("bnj,bni->ji", d_z2, a1)
    g_b2 = d_z2.sum(axis=(0, 1))
    d_a1 = d_z2 @ w2
    d_z1 = d_a1 * (z1 > 0.0)
    g_w1 = np.einsum("bnj,bni->ji", d_z1, batch_pts)
    g_b1 = d_z1.sum(axis=(0, 1))

    return loss, [g_w1, g_b1, g_w2, g_b2, g_w3, g_b3, g_w4, g_b4]


def init_mlp(n_classes: int, seed: int) -> MlpClassifier:
    """Scaled-Gaussian (fan-in) initialization; biases start at zero."""
    if n_classes < 1:
        raise ValueError(f"n_classes must be >= 1, got {n_classes}")
    rng = np.random.default_rng(seed)
    dims = [3, HIDDEN_POINT[0], HIDDEN_POINT[1], HIDDEN_HEAD, n_classes]
    arrays = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        std = np.sqrt(2.0 / fan_in)
        arrays.append(rng.normal(0.0, std, (fan_out, fan_in)).astype(np.float32))
        arrays.append(np.zeros(fan_out, dtype=np.float32))
    return MlpClassifier(tuple(arrays))


@dataclass(frozen=True)
class Augmentation:
    """Deform each training cloud with a fresh parameter draw every epoch."""

    kind: DeformationKind
    distribution: Distribution

    def __post_init__(self) -> None:
        if self.distribution.scale <= 0.0:
            raise ValueError("augmentation needs a positive distribution scale")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    lr: float = 0.05
    momentum: float = 0.9
    batch_size: int = 16
    seed: int = 0
    augment: Augmentation | None = None

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.lr < 0.0 or not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"need lr >= 0 and 0 <= momentum < 1, got lr={self.lr} momentum={self.momentum}")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    loss: float
    accuracy: float


@dataclass(frozen=True)
class TrainResult:
    model: MlpClassifier
    log: tuple[EpochStats, ...]


def train_mlp(dataset: Sequence[tuple[PointCloud, int]], config: TrainConfig) -> TrainResult:
    """SGD with momentum on mean cross-entropy.

    Clouds must share a cardinality (they are stacked per mini-batch). With
    augmentation enabled, every cloud is deformed by a freshly sampled
    parameter before each forward pass; the clean cloud is never revisited.
    Deterministic for a fixed (dataset, config). Raises TrainingDivergedError
    on a non-finite loss rather than clamping.
    """
    data = list(dataset)
    if not data:
        raise ValueError("empty dataset")
    n_pts = data[0][0].n_points
    if any(c.n_points != n_pts for c, _ in data):
        raise ValueError("training clouds must share one cardinality")
    labels_all = np.array([label for _, label in data], dtype=np.int64)
    if labels_all.min() < 0:
        raise ValueError("labels must be >= 0")
    n_classes = int(labels_all.max()) + 1
    points_all = np.stack([c.points for c, _ in data])

    rng = np.random.default_rng(config.seed)
    init_seed = int(rng.integers(0, 2**63 - 1))
    model = init_mlp(n_classes, init_seed)
    params = [w.astype(np.float64) for w in model.weights]
    velocity = [np.zeros_like(p) for p in params]

    aug = config.augment
    aug_dim = param_dim(aug.kind, n_pts) if aug is not None else 0

    log = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(data))
        epoch_loss = 0.0
        for start in range(0, len(data), config.batch_size):
            idx = order[start:start + config.batch_size]
            batch = points_all[idx]
            if aug is not None:
                eps = aug.distribution.sample((len(idx), aug_dim), rng)
                batch = batch + _aug_fields(aug.kind, eps, batch)
            loss, grads = _loss_and_grads(params, batch, labels_all[idx])
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch}")
            epoch_loss += loss * len(idx)
            for p, v, g in zip(params, velocity, grads):
                v *= config.momentum
                v -= config.lr * g
                p += v
        top = max(float(np.abs(p).max()) for p in params)
        if not np.isfinite(top) or top > float(np.finfo(np.float32).max):
            raise TrainingDivergedError(f"weights blew up to {top:.3e} at epoch {epoch}")
        snapshot = MlpClassifier(tuple(p.astype(np.float32) for p in params))
        predicted = np.asarray(snapshot.classify_batch(points_all))
        acc = float((predicted == labels_all).mean())
        log.append(EpochStats(epoch, epoch_loss / len(data), acc))
    return TrainResult(snapshot, tuple(log))


def _aug_fields(kind: DeformationKind, eps: np.ndarray, batch: np.ndarray) -> np.ndarray:
    """Per-cloud displacement fields: cloud i moves by its own draw eps[i]."""
    fields = np.empty_like(batch)
    for i in range(batch.shape[0]):
        fields[i] = flow_many(kind, eps[i:i + 1], batch[i])[0]
    return fields


def save_weights(model: MlpClassifier, path) -> None:
    """MLPW v1: magic, u16 version, u16 layers, per layer u32 rows, u32 cols,
    row-major float32 weights, then float32 biases. Little-endian throughout."""
    chunks = [WEIGHT_MAGIC, struct.pack("<HH", WEIGHT_VERSION, 4)]
    for w, b in zip(model.weights[::2], model.weights[1::2]):
        rows, cols = w.shape
        chunks.append(struct.pack("<II", rows, cols))
        chunks.append(np.ascontiguousarray(w, dtype="<f4").tobytes())
        chunks.append(np.ascontiguousarray(b, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_weights(path) -> MlpClassifier:
    blob = Path(path).read_bytes()
    if len(blob) < 8 or blob[:4] != WEIGHT_MAGIC:
        raise WeightFormatError(f"{path}: bad magic, not an MLPW file")
    version, n_layers = struct.unpack_from("<HH", blob, 4)
    if version != WEIGHT_VERSION:
        raise WeightFormatError(f"{path}: unsupported version {version}")
    if n_layers != 4:
        raise WeightFormatError(f"{path}: expected 4 layers, got {n_layers}")
    offset = 8
    arrays = []
    for _ in range(n_layers):
        if offset + 8 > len(blob):
            raise WeightFormatError(f"{path}: truncated layer header")
        rows, cols = struct.unpack_from("<II", blob, offset)
        offset += 8
        need = 4 * rows * (cols + 1)
        if offset + need > len(blob):
            raise WeightFormatError(f"{path}: truncated layer payload")
        w = np.frombuffer(blob, dtype="<f4", count=rows * cols, offset=offset).reshape(rows, cols)
        offset += 4 * rows * cols
        b = np.frombuffer(blob, dtype="<f4", count=rows, offset=offset)
        offset += 4 * rows
        arrays.extend([w, b])
    if offset != len(blob):
        raise WeightFormatError(f"{path}: {len(blob) - offset} trailing bytes")
    try:
        return MlpClassifier(tuple(arrays))
    except ValueError as exc:
        raise WeightFormatError(f"{path}: {exc}") from None


def write_train_log(log: Sequence[EpochStats], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,loss,accuracy\n")
        for row in log:
            fh.write(f"{row.epoch},{row.loss!r},{row.accuracy!r}\n")
