"""Feature-attribution drift via NDCG against a baseline ranking.

The baseline fixes a per-feature attribution score (absolute values,
averaged over a reference set).  A live window produces its own feature
ranking; NDCG measures how much that ranking still agrees with the
baseline scores.  Identical rankings give exactly 1.0; an alert fires
when NDCG falls below the configured threshold.
"""

from __future__ import annotations

import math
from typing import Mapping, NamedTuple, Sequence

from .errors import UndefinedMetricError

__all__ = ["ndcg", "optimal_ranking", "attribution_drift_check", "AttributionCheckResult"]

DEFAULT_NDCG_THRESHOLD = 0.9


def _validate_scores(scores: Mapping[str, float]) -> None:
    if not scores:
        raise ValueError("baseline scores must be non-empty")
    for feature, score in scores.items():
        if not math.isfinite(score):
            raise ValueError(f"non-finite score for feature {feature!r}")
        if score < 0:
            raise ValueError(
                f"negative attribution score for feature {feature!r}; "
                "convert attributions to absolute values first"
            )


def optimal_ranking(scores: Mapping[str, float]) -> list[str]:
    """Features by descending score; ties break lexicographically."""
    _validate_scores(scores)
    return sorted(scores, key=lambda feature: (-scores[feature], feature))


def _dcg(scores: Mapping[str, float], ranking: Sequence[str]) -> float:
    return sum(
        scores[feature] / math.log2(position + 1)
        for position, feature in enumerate(ranking, start=1)
    )


def ndcg(baseline_scores: Mapping[str, float], observed_ranking: Sequence[str]) -> float:
    """Agreement of the observed ranking with the baseline scores, in [0, 1].

    The observed ranking must be a permutation of the baseline features;
    a renamed, added, or dropped feature is an error, not drift.
    """
    _validate_scores(baseline_scores)
    observed = list(observed_ranking)
    if len(observed) != len(set(observed)):
        raise ValueError("observed ranking contains duplicate features")
    unknown = sorted(set(observed) - set(baseline_scores))
    missing = sorted(set(baseline_scores) - set(observed))
    if unknown or missing:
        raise ValueError(
            f"observed ranking does not match baseline features: "
            f"unknown {unknown}, missing {missing}"
        )
    ideal = _dcg(baseline_scores, optimal_ranking(baseline_scores))
    if ideal == 0.0:
        raise UndefinedMetricError("all baseline attribution scores are zero")
    return _dcg(baseline_scores, observed) / ideal


class AttributionCheckResult(NamedTuple):
    ndcg: float
    alert: bool


def attribution_drift_check(
    baseline_scores: Mapping[str, float],
    observed_ranking: Sequence[str],
    threshold: float = DEFAULT_NDCG_THRESHOLD,
) -> AttributionCheckResult:
    """Alert when NDCG drops strictly below ``threshold``."""
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    value = ndcg(baseline_scores, observed_ranking)
    return AttributionCheckResult(ndcg=value, alert=value < threshold)
