"""Randomized smoothing over deformation parameters.

The smooth classifier g(x) returns the base classifier's most frequent label
over deformations of the input cloud drawn from the smoothing distribution.
With a one-sided Clopper-Pearson lower bound pa on the top-class probability
(and the runner-up bounded by 1 - pa), g is constant within a parameter-space
ball around the identity deformation:

* uniform U[-lam, lam] per coordinate: l1 radius 2 * lam * (pa - 1/2)
* gaussian N(0, sigma^2) per coordinate: l2 radius sigma * quantile(pa)

Both radii are zero when pa <= 1/2, in which case the procedure abstains.
Certification follows the usual two-round recipe: a selection round of n0
samples picks the candidate label, an independent estimation round of n
samples bounds its probability.
"""

from __future__ import annotations

import math
import time
from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy.stats import beta, binomtest

from .cloud import PointCloud
from .flows import DeformationKind, DeformationParams, Distribution, Gaussian, Uniform, flow_many, param_dim

ABSTAIN = -1


@dataclass(frozen=True)
class SmoothingConfig:
    """Sampling plan for one certification: distribution, rounds, confidence."""

    distribution: Distribution
    n0: int = 100
    n: int = 1000
    alpha: float = 1e-3
    batch: int = 200

    def __post_init__(self) -> None:
        if self.distribution.scale <= 0.0:
            raise ValueError("smoothing needs a positive distribution scale")
        if self.n0 < 1:
            raise ValueError(f"n0 must be >= 1, got {self.n0}")
        if self.n < self.n0:
            raise ValueError(f"n must be >= n0, got n={self.n} n0={self.n0}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.batch < 1:
            raise ValueError(f"batch must be >= 1, got {self.batch}")


@dataclass(frozen=True)
class CertificationResult:
    """Outcome of one certification; predicted is ABSTAIN when pa_lower <= 1/2."""

    predicted: int
    pa_lower: float
    radius: float
    count_selection: int
    count_estimation: int
    tie_broken: bool
    elapsed: float

    @property
    def abstain(self) -> bool:
        return self.predicted == ABSTAIN


@dataclass(frozen=True)
class PredictionResult:
    """Outcome of smooth prediction; abstains when the top two labels are too close."""

    predicted: int
    pvalue: float

    @property
    def abstain(self) -> bool:
        return self.predicted == ABSTAIN


def clopper_pearson_lower(k: int, n: int, alpha: float) -> float:
    """One-sided lower confidence bound for a binomial proportion.

    Returns the largest p such that observing >= k successes out of n has
    probability <= alpha under Binomial(n, p); equivalently the alpha
    quantile of Beta(k, n - k + 1). k = 0 gives 0 and k = n gives
    alpha ** (1/n).
    """
    if not 0 <= k <= n or n < 1:
        raise ValueError(f"need 0 <= k <= n with n >= 1, got k={k} n={n}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if k == 0:
        return 0.0
    return float(beta.ppf(alpha, k, n - k + 1))


# Acklam's rational approximation to the standard normal quantile: three
# pieces (two tails plus center), each a degree-(5,5) rational in either
# sqrt(-2 log p) or (p - 1/2). Raw accuracy is about 1.15e-9 relative; one
# Halley refinement against erfc pushes it to ~1e-13 absolute, well inside
# the 1e-8 contract. The refinement only has full resolution on p <= 1/2
# (near 1 the residual drowns in the spacing of doubles), so the upper half
# is mirrored onto the lower, where 1 - p is exact. No tables, no SciPy.
_QA = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
       1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_QB = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
       6.680131188771972e+01, -1.328068155288572e+01)
_QC = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
       -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_QD = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
       3.754408661907416e+00)
_Q_LOW = 0.02425

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)


def _acklam(p: float) -> float:
    if p < _Q_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        return ((((((_QC[0] * q + _QC[1]) * q + _QC[2]) * q + _QC[3]) * q + _QC[4]) * q + _QC[5]) /
                ((((_QD[0] * q + _QD[1]) * q + _QD[2]) * q + _QD[3]) * q + 1.0))
    if p > 1.0 - _Q_LOW:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        return -((((((_QC[0] * q + _QC[1]) * q + _QC[2]) * q + _QC[3]) * q + _QC[4]) * q + _QC[5]) /
                 ((((_QD[0] * q + _QD[1]) * q + _QD[2]) * q + _QD[3]) * q + 1.0))
    q = p - 0.5
    r = q * q
    return ((((((_QA[0] * r + _QA[1]) * r + _QA[2]) * r + _QA[3]) * r + _QA[4]) * r + _QA[5]) * q /
            (((((_QB[0] * r + _QB[1]) * r + _QB[2]) * r + _QB[3]) * r + _QB[4]) * r + 1.0))


def std_normal_quantile(p: float) -> float:
    """Inverse standard normal CDF on (0, 1); see the note above `_acklam`."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must be in (0, 1), got {p}")
    if p > 0.5:
        return -std_normal_quantile(1.0 - p)
    x = _acklam(p)
    # One Halley step on f(x) = Phi(x) - p with Phi via erfc for tail accuracy.
    err = 0.5 * math.erfc(-x / _SQRT2) - p
    u = err * _SQRT2PI * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


def certified_radius(pa_lower: float, distribution: Distribution) -> float:
    """Certified parameter-space radius for a top-class lower bound.

    Uniform smoothing certifies an l1 ball, Gaussian an l2 ball; both
    collapse to 0 at pa_lower <= 1/2.
    """
    if not 0.0 <= pa_lower <= 1.0:
        raise ValueError(f"pa_lower must be in [0, 1], got {pa_lower}")
    if pa_lower <= 0.5:
        return 0.0
    if isinstance(distribution, Uniform):
        return 2.0 * distribution.scale * (pa_lower - 0.5)
    if pa_lower == 1.0:
        return math.inf
    return distribution.scale * std_normal_quantile(pa_lower)


def _counts(classifier, cloud: PointCloud, kind: DeformationKind, distribution: Distribution,
            num: int, batch: int, rng: np.random.Generator,
            offset: np.ndarray | None = None) -> Counter:
    """Label histogram of `num` perturbed copies of `cloud`.

    Draws are consumed from `rng` in a fixed order independent of `batch`,
    so the histogram is a function of (classifier, cloud, kind,
    distribution, num, rng state) alone.
    """
    dim = param_dim(kind, cloud.n_points)
    counts: Counter = Counter()
    done = 0
    while done < num:
        size = min(batch, num - done)
        done += size
        eps = distribution.sample((size, dim), rng)
        if offset is not None:
            eps = eps + offset
        fields = flow_many(kind, eps, cloud.points)
        labels = np.asarray(classifier.classify_batch(cloud.points[None, :, :] + fields))
        if labels.shape != (size,):
            raise RuntimeError(f"classifier returned {labels.shape} labels for {size} clouds")
        if not np.issubdtype(labels.dtype, np.integer):
            raise RuntimeError(f"classifier returned non-integer labels ({labels.dtype})")
        if labels.min() < 0:
            raise RuntimeError(f"classifier returned a negative label ({labels.min()})")
        for label, count in zip(*np.unique(labels, return_counts=True)):
            counts[int(label)] += int(count)
    return counts


def _top_label(counts: Counter) -> tuple[int, bool]:
    """Most frequent label; ties break to the lowest index and are flagged."""
    if not counts:
        raise ValueError("no labels observed")
    top = max(counts.values())
    tied = sorted(label for label, c in counts.items() if c == top)
    return tied[0], len(tied) > 1


def certify(classifier, cloud: PointCloud, kind: DeformationKind,
            config: SmoothingConfig, seed: int) -> CertificationResult:
    """Two-round certification of `classifier` at `cloud` under `kind`.

    The selection round (n0 draws) picks the candidate label, the estimation
    round (n fresh draws from the same stream) lower-bounds its probability.
    Results are bitwise reproducible for fixed inputs and seed, `elapsed`
    excepted.
    """
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    selection = _counts(classifier, cloud, kind, config.distribution, config.n0, config.batch, rng)
    candidate, tie_broken = _top_label(selection)
    estimation = _counts(classifier, cloud, kind, config.distribution, config.n, config.batch, rng)
    hits = estimation.get(candidate, 0)
    pa_lower = clopper_pearson_lower(hits, config.n, config.alpha)
    if pa_lower > 0.5:
        predicted = candidate
        radius = certified_radius(pa_lower, config.distribution)
    else:
        predicted, radius = ABSTAIN, 0.0
    return CertificationResult(
        predicted=predicted,
        pa_lower=pa_lower,
        radius=radius,
        count_selection=selection[candidate],
        count_estimation=hits,
        tie_broken=tie_broken,
        elapsed=time.perf_counter() - start,
    )


def predict(classifier, cloud: PointCloud, kind: DeformationKind,
            config: SmoothingConfig, seed: int) -> PredictionResult:
    """Smooth prediction without a radius.

    Abstains unless a two-sided exact binomial test rejects the hypothesis
    that the top two labels are equally likely at level alpha.
    """
    rng = np.random.default_rng(seed)
    counts = _counts(classifier, cloud, kind, config.distribution, config.n, config.batch, rng)
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    top_label, top_count = ranked[0]
    second_count = ranked[1][1] if len(ranked) > 1 else 0
    pvalue = float(binomtest(top_count, top_count + second_count, 0.5).pvalue)
    return PredictionResult(top_label if pvalue <= config.alpha else ABSTAIN, pvalue)


def vote(classifier, cloud: PointCloud, base_offset: DeformationParams,
         config: SmoothingConfig, seed: int, m: int | None = None) -> int:
    """Majority label under the smoothing distribution shifted by `base_offset`.

    This evaluates the smooth classifier at a nonzero parameter point, which
    is what a certificate makes claims about; soundness checks compare this
    against certified predictions. Ties break to the lowest label.
    """
    if m is None:
        m = config.n
    if m < 1:
        raise ValueError(f"vote needs m >= 1, got {m}")
    dim = param_dim(base_offset.kind, cloud.n_points)
    if base_offset.values.size != dim:
        raise ValueError(f"offset has {base_offset.values.size} parameters, kind needs {dim}")
    rng = np.random.default_rng(seed)
    counts = _counts(classifier, cloud, base_offset.kind, config.distribution, m,
                     config.batch, rng, offset=base_offset.values)
    label, _ = _top_label(counts)
    return label
