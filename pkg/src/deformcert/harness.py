"""Experiment harness: certification sweeps and their reports.

A sweep certifies every (cloud, scale) cell of a dataset x scale grid for
one deformation kind, records one CSV row per cell, and is reproducible
from a base seed: cell (i, j) always uses the substream derived from
(base_seed, i, j) no matter the execution order or worker count. Wall-clock
columns are the one exception to byte-stable reruns.

On top of sweeps sit certified-accuracy curves, their pointwise-max
envelope across scales, average certified radius (wrong or abstaining
samples count as radius 0), throughput benchmarks, a confidence-level
ablation, and an empirical soundness check that replays certified claims
at random in-ball parameter offsets.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .cloud import PointCloud
from .flows import DeformationKind, DeformationParams, Gaussian, Uniform, make_distribution, param_dim
from .smoothing import ABSTAIN, SmoothingConfig, certify, vote

CURVE_POINTS = 64

# Scale ladders are geometric so one sweep spans useful radii at every
# magnitude. Angle-valued kinds smooth uniformly (l1 certificates over
# radians); everything else smooths with Gaussian noise (l2).
_UNIFORM_ANGLES = (0.05, 0.1, 0.2, 0.4, 0.8, 1.6, 3.2)
_GAUSSIAN_SMALL = (0.0125, 0.025, 0.05, 0.1, 0.2, 0.4)
_GAUSSIAN_TWIST = (0.05, 0.1, 0.2, 0.4, 0.8, 1.6)

SCALE_PRESETS: dict[DeformationKind, tuple[str, tuple[float, ...]]] = {
    DeformationKind.TRANSLATION: ("gaussian", _GAUSSIAN_SMALL),
    DeformationKind.ROT_X: ("uniform", _UNIFORM_ANGLES),
    DeformationKind.ROT_Y: ("uniform", _UNIFORM_ANGLES),
    DeformationKind.ROT_Z: ("uniform", _UNIFORM_ANGLES),
    DeformationKind.ROT_XZ: ("uniform", _UNIFORM_ANGLES),
    DeformationKind.ROT_XYZ: ("uniform", _UNIFORM_ANGLES),
    DeformationKind.SHEAR_Z: ("gaussian", _GAUSSIAN_SMALL),
    DeformationKind.TWIST_Z: ("gaussian", _GAUSSIAN_TWIST),
    DeformationKind.TAPER_Z: ("gaussian", _GAUSSIAN_SMALL),
    DeformationKind.AFFINE: ("gaussian", _GAUSSIAN_SMALL),
    DeformationKind.AFFINE_NT: ("gaussian", _GAUSSIAN_SMALL),
    DeformationKind.GAUSSIAN_NOISE: ("gaussian", _GAUSSIAN_SMALL),
}

CSV_COLUMNS = ("index", "label_true", "predicted", "pa_lower", "radius", "abstain",
               "sigma_or_lambda", "kind", "n0", "n", "alpha", "seconds", "error")


def derive_seed(*parts: int) -> int:
    """A 64-bit substream seed hashed from integer coordinates."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class SweepSpec:
    """One deformation kind, one scale grid, shared sampling plan."""

    kind: DeformationKind
    family: str
    scales: tuple[float, ...]
    n0: int = 100
    n: int = 1000
    alpha: float = 1e-3
    batch: int = 200
    base_seed: int = 0
    workers: int = 1

    def __post_init__(self) -> None:
        if self.family not in ("uniform", "gaussian"):
            raise ValueError(f"unknown distribution family {self.family!r}")
        scales = tuple(float(s) for s in self.scales)
        if not scales:
            raise ValueError("scale grid must be nonempty")
        if any(s <= 0 for s in scales) or any(b <= a for a, b in zip(scales, scales[1:])):
            raise ValueError(f"scales must be positive and strictly increasing, got {scales}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")
        object.__setattr__(self, "scales", scales)
        # Validate the sampling plan once, not per cell.
        SmoothingConfig(make_distribution(self.family, scales[0]),
                        self.n0, self.n, self.alpha, self.batch)

    def config_for(self, scale: float) -> SmoothingConfig:
        return SmoothingConfig(make_distribution(self.family, scale),
                               self.n0, self.n, self.alpha, self.batch)


def preset_spec(kind: DeformationKind, **overrides) -> SweepSpec:
    family, scales = SCALE_PRESETS[kind]
    fields = dict(kind=kind, family=family, scales=scales)
    fields.update(overrides)
    return SweepSpec(**fields)


@dataclass(frozen=True)
class SweepRow:
    """One CSV row: a certification of sample `index` at one scale."""

    index: int
    label_true: int
    predicted: int
    pa_lower: float
    radius: float
    abstain: bool
    scale: float
    kind: str
    n0: int
    n: int
    alpha: float
    seconds: float
    error: str | None = None

    @property
    def ok(self) -> bool:
        """Holds a non-abstaining, error-free, correct certificate."""
        return self.error is None and not self.abstain and self.predicted == self.label_true


@dataclass(frozen=True)
class SweepResult:
    spec: SweepSpec
    rows: tuple[SweepRow, ...]

    def at_scale(self, scale: float) -> list[SweepRow]:
        return [r for r in self.rows if r.scale == scale]


def run_sweep(classifier, dataset: Sequence[tuple[PointCloud, int]], spec: SweepSpec) -> SweepResult:
    """Certify every (sample, scale) cell; failures land in the row's error
    column instead of aborting the sweep."""
    if not dataset:
        raise ValueError("empty dataset")
    cells = [(i, j) for i in range(len(dataset)) for j in range(len(spec.scales))]

    def run_cell(cell: tuple[int, int]) -> SweepRow:
        i, j = cell
        cloud, label = dataset[i]
        scale = spec.scales[j]
        seed = derive_seed(spec.base_seed, i, j)
        base = dict(index=i, label_true=int(label), scale=scale, kind=spec.kind.value,
                    n0=spec.n0, n=spec.n, alpha=spec.alpha)
        try:
            res = certify(classifier, cloud, spec.kind, spec.config_for(scale), seed)
        except Exception as exc:  # recorded, sweep continues
            return SweepRow(predicted=ABSTAIN, pa_lower=0.0, radius=0.0, abstain=True,
                            seconds=0.0, error=f"{type(exc).__name__}: {exc}", **base)
        return SweepRow(predicted=res.predicted, pa_lower=res.pa_lower, radius=res.radius,
                        abstain=res.abstain, seconds=res.elapsed, error=None, **base)

    if spec.workers == 1:
        rows = [run_cell(c) for c in cells]
    else:
        with ThreadPoolExecutor(max_workers=spec.workers) as pool:
            rows = list(pool.map(run_cell, cells))
    rows.sort(key=lambda r: (r.index, r.scale))
    return SweepResult(spec, tuple(rows))


def write_rows_csv(rows: Sequence[SweepRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in rows:
            writer.writerow([r.index, r.label_true, r.predicted, repr(r.pa_lower),
                             repr(r.radius), "true" if r.abstain else "false",
                             repr(r.scale), r.kind, r.n0, r.n, repr(r.alpha),
                             repr(r.seconds), r.error or ""])


def read_rows_csv(path) -> list[SweepRow]:
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        for rec in reader:
            rows.append(SweepRow(
                index=int(rec["index"]), label_true=int(rec["label_true"]),
                predicted=int(rec["predicted"]), pa_lower=float(rec["pa_lower"]),
                radius=float(rec["radius"]), abstain=rec["abstain"] == "true",
                scale=float(rec["sigma_or_lambda"]), kind=rec["kind"],
                n0=int(rec["n0"]), n=int(rec["n"]), alpha=float(rec["alpha"]),
                seconds=float(rec["seconds"]), error=rec["error"] or None))
    if not rows:
        raise ValueError(f"{path}: no rows")
    return rows


def _scales_of(rows: Sequence[SweepRow]) -> list[float]:
    return sorted({r.scale for r in rows})


def _ok_radii(rows: Sequence[SweepRow]) -> np.ndarray:
    """Certified radius per row, -inf when the row holds no valid certificate."""
    return np.array([r.radius if r.ok else -np.inf for r in rows])


def certified_accuracy_at(rows: Sequence[SweepRow], scale: float, radius: float) -> float:
    """Fraction of samples at `scale` certified correct out to `radius`.

    Errors and abstentions count against the denominator, never toward it.
    """
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    at = [r for r in rows if r.scale == scale]
    if not at:
        raise ValueError(f"no rows at scale {scale}")
    return float((_ok_radii(at) >= radius).mean())


def acr(rows: Sequence[SweepRow], scale: float | None = None) -> float:
    """Average certified radius; wrong or abstaining samples contribute 0."""
    at = rows if scale is None else [r for r in rows if r.scale == scale]
    if not at:
        raise ValueError("no rows selected")
    return float(np.maximum(_ok_radii(at), 0.0).mean())


def envelope_radii(rows: Sequence[SweepRow]) -> np.ndarray:
    """Best valid certified radius per sample across scales (-inf if none)."""
    per_sample: dict[int, float] = {}
    for r in rows:
        best = per_sample.get(r.index, -np.inf)
        candidate = r.radius if r.ok else -np.inf
        per_sample[r.index] = max(best, candidate)
    return np.array([per_sample[i] for i in sorted(per_sample)])


@dataclass(frozen=True)
class EnvelopeReport:
    """Certified-accuracy curves sampled on a shared radius grid.

    The envelope is the pointwise maximum over the per-scale curves, i.e.
    the accuracy achievable when each sample may pick its best scale.
    """

    radii: np.ndarray                      # (CURVE_POINTS,)
    per_scale: dict[float, np.ndarray]     # scale -> (CURVE_POINTS,) accuracies
    envelope: np.ndarray                   # (CURVE_POINTS,)
    acr_per_scale: dict[float, float]
    acr_envelope: float

    def to_json_dict(self) -> dict:
        return {
            "radii": [float(r) for r in self.radii],
            "per_scale": {repr(s): [float(a) for a in curve]
                          for s, curve in self.per_scale.items()},
            "envelope": [float(a) for a in self.envelope],
            "acr_per_scale": {repr(s): float(v) for s, v in self.acr_per_scale.items()},
            "acr_envelope": float(self.acr_envelope),
        }


def envelope(rows: Sequence[SweepRow]) -> EnvelopeReport:
    scales = _scales_of(rows)
    if not scales:
        raise ValueError("no rows")
    top = max((r.radius for r in rows if r.ok), default=0.0)
    radii = np.linspace(0.0, top if top > 0 else 1.0, CURVE_POINTS)
    per_scale = {}
    acr_per_scale = {}
    for s in scales:
        at = [r for r in rows if r.scale == s]
        ok_r = _ok_radii(at)
        per_scale[s] = (ok_r[:, None] >= radii[None, :]).mean(axis=0)
        acr_per_scale[s] = float(np.maximum(ok_r, 0.0).mean())
    env_r = envelope_radii(rows)
    env_curve = (env_r[:, None] >= radii[None, :]).mean(axis=0)
    return EnvelopeReport(radii, per_scale, env_curve, acr_per_scale,
                          float(np.maximum(env_r, 0.0).mean()))


def summary_json(rows: Sequence[SweepRow]) -> dict:
    """The JSON side of a sweep report: counts, per-scale stats, curves."""
    env = envelope(rows)
    scales = _scales_of(rows)
    per_scale = []
    for s in scales:
        at = [r for r in rows if r.scale == s]
        per_scale.append({
            "scale": s,
            "samples": len(at),
            "abstain_rate": float(np.mean([r.abstain for r in at])),
            "error_rate": float(np.mean([r.error is not None for r in at])),
            "certified_accuracy_at_zero": certified_accuracy_at(rows, s, 0.0),
            "acr": env.acr_per_scale[s],
        })
    first = rows[0]
    return {
        "kind": first.kind,
        "n0": first.n0,
        "n": first.n,
        "alpha": first.alpha,
        "scales": scales,
        "samples": len({r.index for r in rows}),
        "per_scale": per_scale,
        "acr_envelope": env.acr_envelope,
        "curve": env.to_json_dict(),
    }


def write_summary_json(rows: Sequence[SweepRow], path) -> None:
    Path(path).write_text(json.dumps(summary_json(rows), indent=2) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class BenchRow:
    scale: float
    samples: int
    repeats: int
    seconds_total: float
    seconds_per_sample: float


@dataclass(frozen=True)
class BenchReport:
    rows: tuple[BenchRow, ...]
    device_note: str

    def spread(self) -> float:
        """max/min - 1 over per-scale times; the sampling cost should not
        depend on the smoothing scale."""
        times = [r.seconds_per_sample for r in self.rows]
        return max(times) / min(times) - 1.0

    def to_json_dict(self) -> dict:
        return {"device_note": self.device_note,
                "spread": self.spread(),
                "rows": [vars(r) for r in self.rows]}


def bench(classifier, dataset: Sequence[tuple[PointCloud, int]], spec: SweepSpec,
          repeats: int = 3, device_note: str = "", warmup: bool = True) -> BenchReport:
    """Wall-clock cost of certification per scale (best of `repeats`)."""
    if repeats < 1:
        raise ValueError(f"repeats must be >= 1, got {repeats}")
    if warmup:
        cloud, _ = dataset[0]
        certify(classifier, cloud, spec.kind, spec.config_for(spec.scales[0]),
                derive_seed(spec.base_seed, 0, 0))
    out = []
    for j, scale in enumerate(spec.scales):
        config = spec.config_for(scale)
        best = np.inf
        for _ in range(repeats):
            start = time.perf_counter()
            for i, (cloud, _) in enumerate(dataset):
                certify(classifier, cloud, spec.kind, config, derive_seed(spec.base_seed, i, j))
            best = min(best, time.perf_counter() - start)
        out.append(BenchRow(scale, len(dataset), repeats, best, best / len(dataset)))
    return BenchReport(tuple(out), device_note)


def alpha_ablation(classifier, dataset, spec: SweepSpec,
                   alphas: Sequence[float]) -> list[tuple[float, float]]:
    """Envelope ACR per confidence level, same substreams throughout.

    Only the Clopper-Pearson bound moves with alpha; the sampled labels are
    identical across levels, which isolates the confidence effect.
    """
    if not alphas:
        raise ValueError("need at least one alpha")
    out = []
    for a in alphas:
        result = run_sweep(classifier, dataset, replace(spec, alpha=float(a)))
        out.append((float(a), envelope(result.rows).acr_envelope))
    return out


def _uniform_l1_ball(dim: int, radius: float, rng: np.random.Generator) -> np.ndarray:
    # Normalized exponentials land uniformly on the simplex; the spare
    # coordinate keeps the sum strictly below 1, i.e. strictly inside.
    g = rng.exponential(1.0, dim + 1)
    signs = rng.choice((-1.0, 1.0), dim)
    return radius * signs * g[:dim] / g.sum()


def _uniform_l2_ball(dim: int, radius: float, rng: np.random.Generator) -> np.ndarray:
    d = rng.normal(size=dim)
    d /= np.linalg.norm(d)
    return radius * d * rng.uniform() ** (1.0 / dim)


@dataclass(frozen=True)
class SoundnessFailure:
    index: int
    scale: float
    offset_norm: float
    certified: int
    voted: int


@dataclass(frozen=True)
class SoundnessReport:
    checks: int
    failures: tuple[SoundnessFailure, ...]

    @property
    def failure_fraction(self) -> float:
        return len(self.failures) / self.checks if self.checks else 0.0

    def to_json_dict(self) -> dict:
        return {"checks": self.checks,
                "failures": [vars(f) for f in self.failures],
                "failure_fraction": self.failure_fraction}


def soundness_check(classifier, dataset, result: SweepResult, offsets: int = 20,
                    vote_samples: int = 1000, seed: int = 0) -> SoundnessReport:
    """Replay every non-abstaining certificate at random in-ball offsets.

    For each certified row, `offsets` parameter offsets are drawn uniformly
    inside the certified ball (l1 for uniform smoothing, l2 for Gaussian)
    and the smooth classifier is re-voted at each offset. A certificate
    whose label loses any vote is a failure. Small failure fractions are
    expected: the bound itself may fail with probability alpha, and a
    finite vote misreads near-boundary points occasionally.
    """
    if offsets < 1 or vote_samples < 1:
        raise ValueError("offsets and vote_samples must be >= 1")
    spec = result.spec
    scale_index = {s: j for j, s in enumerate(spec.scales)}
    ball = _uniform_l1_ball if spec.family == "uniform" else _uniform_l2_ball
    checks = 0
    failures = []
    for row in result.rows:
        if row.error is not None or row.abstain:
            continue
        cloud, _ = dataset[row.index]
        dim = param_dim(spec.kind, cloud.n_points)
        config = spec.config_for(row.scale)
        j = scale_index[row.scale]
        for t in range(offsets):
            rng = np.random.default_rng(derive_seed(seed, row.index, j, t))
            delta = ball(dim, row.radius, rng)
            voted = vote(classifier, cloud, DeformationParams(spec.kind, delta), config,
                         seed=derive_seed(seed, row.index, j, t, 1), m=vote_samples)
            checks += 1
            if voted != row.predicted:
                failures.append(SoundnessFailure(row.index, row.scale,
                                                 float(np.abs(delta).sum() if spec.family == "uniform"
                                                       else np.linalg.norm(delta)),
                                                 row.predicted, voted))
    return SoundnessReport(checks, tuple(failures))
