"""NDCG ranking agreement, including a full-permutation brute-force check."""

from __future__ import annotations

import itertools
import math
import random

import pytest

from driftmon.attribution import (
    DEFAULT_NDCG_THRESHOLD,
    attribution_drift_check,
    ndcg,
    optimal_ranking,
)
from driftmon.errors import UndefinedMetricError

EXAMPLE_SCORES = {"f1": 0.6, "f2": 0.3, "f3": 0.1}


def _ndcg_oracle(scores, ranking) -> float:
    # independent recompute with a different log form
    def dcg(order):
        return sum(
            scores[f] / (math.log(i + 1) / math.log(2))
            for i, f in enumerate(order, start=1)
        )

    ideal = sorted(scores, key=lambda f: (-scores[f], f))
    return dcg(ranking) / dcg(ideal)


class TestNdcg:
    def test_identical_ranking_is_exactly_one(self):
        ranking = optimal_ranking(EXAMPLE_SCORES)
        assert ndcg(EXAMPLE_SCORES, ranking) == 1.0

    def test_three_feature_example(self):
        value = ndcg(EXAMPLE_SCORES, ["f2", "f1", "f3"])
        assert value == pytest.approx(0.868075, abs=1e-6)
        assert value == pytest.approx(_ndcg_oracle(EXAMPLE_SCORES, ["f2", "f1", "f3"]))

    def test_single_feature_is_always_one(self):
        assert ndcg({"only": 3.0}, ["only"]) == 1.0

    def test_all_permutations_match_brute_force(self):
        rng = random.Random(4)
        for m in range(2, 7):
            features = [f"f{i}" for i in range(m)]
            scores = {f: rng.random() for f in features}
            for permutation in itertools.permutations(features):
                value = ndcg(scores, permutation)
                assert value == pytest.approx(
                    _ndcg_oracle(scores, permutation), rel=1e-12
                )
                assert 0.0 < value <= 1.0

    def test_scale_invariance(self):
        ranking = ["f3", "f1", "f2"]
        base = ndcg(EXAMPLE_SCORES, ranking)
        scaled = ndcg({f: 37.5 * s for f, s in EXAMPLE_SCORES.items()}, ranking)
        assert scaled == pytest.approx(base, rel=1e-12)

    def test_more_sensitive_to_high_attribution_swaps(self):
        scores = {"a": 0.5, "b": 0.3, "c": 0.15, "d": 0.05}
        top_swap = ndcg(scores, ["b", "a", "c", "d"])
        bottom_swap = ndcg(scores, ["a", "b", "d", "c"])
        assert top_swap < bottom_swap < 1.0

    def test_tied_scores_give_one_in_either_order(self):
        scores = {"x": 0.5, "y": 0.5}
        assert ndcg(scores, ["x", "y"]) == 1.0
        assert ndcg(scores, ["y", "x"]) == 1.0

    def test_optimal_ranking_tie_break_is_lexicographic(self):
        assert optimal_ranking({"b": 1.0, "a": 1.0, "c": 2.0}) == ["c", "a", "b"]


class TestValidation:
    def test_duplicate_features_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            ndcg(EXAMPLE_SCORES, ["f1", "f1", "f3"])

    def test_feature_set_mismatch_rejected(self):
        with pytest.raises(ValueError, match="unknown \\['f9'\\]"):
            ndcg(EXAMPLE_SCORES, ["f1", "f2", "f9"])
        with pytest.raises(ValueError, match="missing \\['f3'\\]"):
            ndcg(EXAMPLE_SCORES, ["f1", "f2"])

    def test_negative_scores_rejected_with_hint(self):
        with pytest.raises(ValueError, match="absolute values"):
            ndcg({"f1": -0.2, "f2": 0.5}, ["f1", "f2"])

    def test_non_finite_scores_rejected(self):
        with pytest.raises(ValueError):
            ndcg({"f1": math.inf}, ["f1"])

    def test_empty_scores_rejected(self):
        with pytest.raises(ValueError):
            ndcg({}, [])

    def test_all_zero_scores_undefined(self):
        with pytest.raises(UndefinedMetricError):
            ndcg({"f1": 0.0, "f2": 0.0}, ["f1", "f2"])


class TestDriftCheck:
    def test_example_alerts_at_default_threshold(self):
        result = attribution_drift_check(EXAMPLE_SCORES, ["f2", "f1", "f3"])
        assert result.alert
        assert result.ndcg == pytest.approx(0.868075, abs=1e-6)
        assert DEFAULT_NDCG_THRESHOLD == 0.9

    def test_identical_ranking_never_alerts(self):
        result = attribution_drift_check(EXAMPLE_SCORES, ["f1", "f2", "f3"], threshold=1.0)
        assert result == (1.0, False)

    def test_threshold_is_strict(self):
        value = ndcg(EXAMPLE_SCORES, ["f2", "f1", "f3"])
        at_value = attribution_drift_check(
            EXAMPLE_SCORES, ["f2", "f1", "f3"], threshold=value
        )
        assert not at_value.alert
        just_above = attribution_drift_check(
            EXAMPLE_SCORES, ["f2", "f1", "f3"], threshold=math.nextafter(value, 1.0)
        )
        assert just_above.alert

    def test_threshold_validation(self):
        with pytest.raises(ValueError):
            attribution_drift_check(EXAMPLE_SCORES, ["f1", "f2", "f3"], threshold=0.0)
        with pytest.raises(ValueError):
            attribution_drift_check(EXAMPLE_SCORES, ["f1", "f2", "f3"], threshold=1.1)
