"""Distribution drift tests over sketch summaries.

The two-sample tests here are shifted by a tolerance ``epsilon``: the
null hypothesis is "the distributions differ by at most epsilon", not
"the distributions are equal".  With production sample sizes a plain
test rejects on trivially small differences; the shift makes the alarm
fire only when the difference is material.  Tests are one-sided (upper
tail): only exceeding the tolerance counts as drift.

All tests consume summaries (moments, quantile sketches, categorical
counts), never raw data, so they run on merged cross-worker state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats as _scipy_stats

from .errors import InsufficientDataError
from .kll import KllSketch
from .sketches import CategoricalSketch, MomentsSketch

__all__ = [
    "SampleStats",
    "DriftTestConfig",
    "DriftResult",
    "t_test_eps",
    "ks_test_eps",
    "linf_categorical",
    "anomaly_flags",
    "embedding_drift",
    "kolmogorov_sf",
]


@dataclass(frozen=True)
class SampleStats:
    """Count, mean, and population standard deviation of one sample."""

    n: int
    mean: float
    std: float

    def __post_init__(self) -> None:
        if self.n < 1:
            raise InsufficientDataError(f"sample size must be positive, got {self.n}")
        if self.std < 0:
            raise ValueError(f"std must be non-negative, got {self.std}")

    @classmethod
    def from_moments(cls, sketch: MomentsSketch) -> SampleStats:
        count, mean, std = sketch.finalize()
        if count == 0:
            raise InsufficientDataError("empty moments sketch")
        return cls(n=count, mean=mean, std=std)


@dataclass(frozen=True)
class DriftTestConfig:
    epsilon: float = 0.1
    alpha: float = 0.05

    def __post_init__(self) -> None:
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be non-negative, got {self.epsilon}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")


@dataclass(frozen=True)
class DriftResult:
    statistic: float
    p_value: float | None
    drift_detected: bool
    distance: float


def t_test_eps(a: SampleStats, b: SampleStats, config: DriftTestConfig) -> DriftResult:
    """Two-sample t test of |mean(a) - mean(b)| > epsilon (Welch form).

    The statistic is (|mean difference| - epsilon) / SE with unequal
    variances and Welch-Satterthwaite degrees of freedom; the p-value is
    the upper tail.  Population variances from the moments summary are
    rescaled by n/(n-1) to the unbiased sample form.
    """
    if a.n < 2 or b.n < 2:
        raise InsufficientDataError("t test needs at least 2 observations per side")
    var_a = a.std * a.std * a.n / (a.n - 1)
    var_b = b.std * b.std * b.n / (b.n - 1)
    distance = abs(a.mean - b.mean)
    se_sq = var_a / a.n + var_b / b.n
    if se_sq == 0.0:
        # degenerate constant samples: the excess over epsilon is certain
        if distance > config.epsilon:
            return DriftResult(math.inf, 0.0, True, distance)
        return DriftResult(-math.inf if distance < config.epsilon else 0.0, 1.0, False, distance)
    se = math.sqrt(se_sq)
    statistic = (distance - config.epsilon) / se
    df_num = se_sq * se_sq
    df_den = (var_a / a.n) ** 2 / (a.n - 1) + (var_b / b.n) ** 2 / (b.n - 1)
    df = df_num / df_den
    p_value = float(_scipy_stats.t.sf(statistic, df))
    return DriftResult(statistic, p_value, p_value < config.alpha, distance)


def kolmogorov_sf(lam: float) -> float:
    """Kolmogorov distribution survival function Q(lam).

    Q(lam) = 2 * sum_{j>=1} (-1)**(j-1) * exp(-2 j**2 lam**2); the series
    terms vanish fast for lam above ~0.3 and Q is 1 to double precision
    below that, so a plain partial sum converges quickly everywhere.
    """
    if lam <= 0.0:
        return 1.0
    total = 0.0
    sign = 1.0
    for j in range(1, 100_000):
        term = math.exp(-2.0 * j * j * lam * lam)
        if term < 1e-18:
            break
        total += sign * term
        sign = -sign
    return min(1.0, max(0.0, 2.0 * total))


def ks_test_eps(a: KllSketch, b: KllSketch, config: DriftTestConfig) -> DriftResult:
    """Two-sample Kolmogorov-Smirnov test with tolerance epsilon.

    The empirical CDF distance D is estimated from the two quantile
    sketches at every stored cut point; the statistic is
    max(0, D - epsilon) * sqrt(na*nb/(na+nb)) and the p-value comes from
    the asymptotic Kolmogorov distribution.
    """
    if a.n == 0 or b.n == 0:
        raise InsufficientDataError("KS test needs two non-empty sketches")
    cuts = {value for value, _ in a.items()}
    cuts.update(value for value, _ in b.items())
    cuts.update((a.min, a.max, b.min, b.max))
    distance = max(abs(a.rank(x) - b.rank(x)) for x in cuts)
    scale = math.sqrt(a.n * b.n / (a.n + b.n))
    statistic = max(0.0, distance - config.epsilon) * scale
    p_value = kolmogorov_sf(statistic)
    return DriftResult(statistic, p_value, p_value < config.alpha, distance)


def linf_categorical(
    a: CategoricalSketch, b: CategoricalSketch, config: DriftTestConfig
) -> DriftResult:
    """Largest per-label frequency difference, flagged against epsilon.

    Threshold-only: no p-value is defined for this check.
    """
    if a.total == 0 or b.total == 0:
        raise InsufficientDataError("categorical comparison needs two non-empty sketches")
    freq_a = a.frequencies()
    freq_b = b.frequencies()
    labels = set(freq_a) | set(freq_b)
    distance = max(abs(freq_a.get(label, 0.0) - freq_b.get(label, 0.0)) for label in labels)
    return DriftResult(distance, None, distance > config.epsilon, distance)


def anomaly_flags(
    values: Sequence[float], baseline: SampleStats, k: float = 3.0
) -> list[bool]:
    """Flag values more than ``k`` baseline standard deviations from the mean.

    With a zero-variance baseline any value different from the mean is
    flagged; that is the same rule, not a special case.
    """
    if k < 0:
        raise ValueError(f"k must be non-negative, got {k}")
    bound = k * baseline.std
    return [abs(float(v) - baseline.mean) > bound for v in values]


def embedding_drift(
    window: Sequence[Sequence[float]],
    baseline: Sequence[Sequence[float]],
    threshold: float,
) -> DriftResult:
    """Mean pairwise cosine similarity between window and baseline embeddings.

    The score is the average over window rows of each row's mean cosine
    similarity to the baseline rows; drift fires when the score drops
    below ``threshold``.
    """
    win = np.asarray(window, dtype=float)
    base = np.asarray(baseline, dtype=float)
    if win.size == 0 or base.size == 0:
        raise InsufficientDataError("embedding drift needs non-empty window and baseline")
    if win.ndim != 2 or base.ndim != 2:
        raise ValueError("embeddings must be 2-dimensional arrays")
    if win.shape[1] != base.shape[1]:
        raise ValueError(
            f"dimension mismatch: window {win.shape[1]}, baseline {base.shape[1]}"
        )
    win_norms = np.linalg.norm(win, axis=1)
    base_norms = np.linalg.norm(base, axis=1)
    if np.any(win_norms == 0) or np.any(base_norms == 0):
        raise ValueError("zero-norm embedding vector")
    cosines = (win / win_norms[:, None]) @ (base / base_norms[:, None]).T
    score = float(cosines.mean())
    return DriftResult(score, None, score < threshold, score)
