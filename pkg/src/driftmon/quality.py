"""Model quality metrics, bootstrap uncertainty, and constraint checks.

Reports serialize metric values exactly as computed, double for double;
downstream systems diff report files textually, so the arithmetic here
is part of the contract and is pinned by tests.  In particular mae and
mse accumulate plain left-to-right sums (their bootstrap replicates must
agree bit-for-bit whenever |e| = e^2 row-wise), while R^2 routes its
error term through the residual L2 norm
(``ss_err = pow(sqrt(sum(e^2)), 2)``) against the exact two-pass total
sum of squares.  Do not "simplify" these expressions: equivalent algebra
produces different last-bit doubles and breaks report diffing.

Undefined values (empty denominators, single-class batches, degenerate
bootstrap replicates) serialize as the string ``"NaN"``, never as JSON
NaN, which is not valid JSON.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Callable, Mapping, Sequence

import numpy as np
from scipy import stats as _scipy_stats

from .errors import InsufficientDataError
from .timeutil import format_timestamp, format_timestamp_millis, utc_now

__all__ = [
    "LabeledBatch",
    "regression_metrics",
    "classification_metrics",
    "fbeta_score",
    "bootstrap_stddev",
    "BootstrapConfig",
    "quality_report",
    "suggest_quality_constraints",
    "evaluate_quality_constraints",
    "QualityViolation",
    "REGRESSION_METRICS_KEY",
    "BINARY_METRICS_KEY",
    "REGRESSION_CONSTRAINTS_KEY",
    "BINARY_CONSTRAINTS_KEY",
]

REGRESSION_METRICS_KEY = "regression_metrics"
BINARY_METRICS_KEY = "binary_classification_metrics"
REGRESSION_CONSTRAINTS_KEY = "regression_constraints"
BINARY_CONSTRAINTS_KEY = "binary_classification_constraints"

GREATER = "GreaterThanThreshold"
LESS = "LessThanThreshold"


@dataclass
class LabeledBatch:
    """Parallel prediction/label arrays for one evaluation window."""

    predictions: list[float]
    labels: list[float]
    scores: list[float] | None = None
    start_time: datetime | None = None
    end_time: datetime | None = None

    def __post_init__(self) -> None:
        if len(self.predictions) != len(self.labels):
            raise ValueError(
                f"{len(self.predictions)} predictions vs {len(self.labels)} labels"
            )
        if self.scores is not None and len(self.scores) != len(self.labels):
            raise ValueError(f"{len(self.scores)} scores vs {len(self.labels)} labels")

    def __len__(self) -> int:
        return len(self.labels)

    def head(self, m: int) -> LabeledBatch:
        return LabeledBatch(
            predictions=self.predictions[:m],
            labels=self.labels[:m],
            scores=self.scores[:m] if self.scores is not None else None,
        )

    def take(self, indexes: Sequence[int]) -> LabeledBatch:
        return LabeledBatch(
            predictions=[self.predictions[i] for i in indexes],
            labels=[self.labels[i] for i in indexes],
            scores=[self.scores[i] for i in indexes] if self.scores is not None else None,
        )


def _require_rows(batch: LabeledBatch) -> None:
    if len(batch) == 0:
        raise InsufficientDataError("empty batch")


def regression_metrics(batch: LabeledBatch) -> dict[str, float | None]:
    """mae, mse, rmse, r2.  r2 is None when the labels are constant."""
    _require_rows(batch)
    n = len(batch)
    residuals = [p - y for p, y in zip(batch.predictions, batch.labels)]
    mae = sum(abs(e) for e in residuals) / n
    mse = sum(e * e for e in residuals) / n
    rmse = math.sqrt(mse)
    # pinned arithmetic: r2's error term takes the L2-norm round trip, see module docstring
    ss_err = math.pow(math.sqrt(sum(e * e for e in residuals)), 2)
    label_mean = sum(batch.labels) / n
    ss_tot = sum((y - label_mean) ** 2 for y in batch.labels)
    r2 = None if ss_tot == 0.0 else 1.0 - ss_err / ss_tot
    return {"mae": mae, "mse": mse, "rmse": rmse, "r2": r2}


def fbeta_score(precision: float | None, recall: float | None, beta: float) -> float | None:
    if beta < 0:
        raise ValueError(f"beta must be non-negative, got {beta}")
    if precision is None or recall is None:
        return None
    denominator = beta * beta * precision + recall
    if denominator == 0.0:
        return 0.0
    return (1.0 + beta * beta) * precision * recall / denominator


def _auc_midrank(scores: Sequence[float], labels: Sequence[float]) -> float | None:
    """Mann-Whitney AUC with midranks for ties; None when one class is absent."""
    positives = sum(1 for y in labels if y == 1)
    negatives = len(labels) - positives
    if positives == 0 or negatives == 0:
        return None
    ranks = _scipy_stats.rankdata(scores, method="average")
    rank_sum = float(sum(r for r, y in zip(ranks, labels) if y == 1))
    u = rank_sum - positives * (positives + 1) / 2.0
    return u / (positives * negatives)


def _beta_key(beta: float) -> str:
    return "f" + format(beta, "g").replace(".", "_")


def classification_metrics(
    batch: LabeledBatch, betas: Sequence[float] = (0.5, 1.0, 2.0)
) -> dict[str, float | None]:
    """Binary confusion counts, accuracy, precision, recall, F-beta, AUC.

    Labels and predictions must be 0/1.  AUC ranks by ``scores`` when
    present, otherwise by the hard predictions.
    """
    _require_rows(batch)
    for name, column in (("label", batch.labels), ("prediction", batch.predictions)):
        for value in column:
            if value not in (0, 1):
                raise ValueError(f"binary {name} must be 0 or 1, got {value!r}")
    tp = sum(1 for p, y in zip(batch.predictions, batch.labels) if p == 1 and y == 1)
    fp = sum(1 for p, y in zip(batch.predictions, batch.labels) if p == 1 and y == 0)
    tn = sum(1 for p, y in zip(batch.predictions, batch.labels) if p == 0 and y == 0)
    fn = sum(1 for p, y in zip(batch.predictions, batch.labels) if p == 0 and y == 1)
    n = len(batch)
    precision = tp / (tp + fp) if tp + fp else None
    recall = tp / (tp + fn) if tp + fn else None
    out: dict[str, float | None] = {
        "accuracy": (tp + tn) / n,
        "true_positives": float(tp),
        "false_positives": float(fp),
        "true_negatives": float(tn),
        "false_negatives": float(fn),
        "precision": precision,
        "recall": recall,
    }
    for beta in betas:
        out[_beta_key(beta)] = fbeta_score(precision, recall, beta)
    ranking = batch.scores if batch.scores is not None else batch.predictions
    out["auc"] = _auc_midrank(ranking, batch.labels)
    return out


@dataclass(frozen=True)
class BootstrapConfig:
    n_boot: int = 5
    resample_frac: float = 0.8
    sample_cap: int = 200
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_boot < 2:
            raise ValueError(f"n_boot must be at least 2, got {self.n_boot}")
        if not 0.0 < self.resample_frac <= 1.0:
            raise ValueError(f"resample_frac must be in (0, 1], got {self.resample_frac}")
        if self.sample_cap < 1:
            raise ValueError(f"sample_cap must be positive, got {self.sample_cap}")


def bootstrap_stddev(
    batch: LabeledBatch,
    metric: Callable[[LabeledBatch], float | None],
    config: BootstrapConfig = BootstrapConfig(),
) -> float | None:
    """Sample standard deviation of ``metric`` over bootstrap replicates.

    The batch is capped to its first ``sample_cap`` rows, then each
    replicate draws ``ceil(resample_frac * m)`` rows with replacement.
    Replicate index draws depend only on (seed, replicate), never on the
    metric, so two metrics under one seed see identical resamples.
    Returns None (serialized "NaN") when any replicate is undefined.
    """
    _require_rows(batch)
    m = min(len(batch), config.sample_cap)
    head = batch.head(m)
    draw = math.ceil(config.resample_frac * m)
    values: list[float] = []
    for replicate in range(config.n_boot):
        rng = np.random.default_rng((config.seed, replicate))
        indexes = rng.integers(0, m, size=draw)
        value = metric(head.take(indexes))
        if value is None or (isinstance(value, float) and math.isnan(value)):
            return None
        values.append(value)
    return float(np.std(values, ddof=1))


def _metric_functions(
    problem_type: str,
) -> dict[str, Callable[[LabeledBatch], float | None]]:
    if problem_type == "regression":
        return {name: _single_metric(regression_metrics, name) for name in ("mae", "mse", "rmse", "r2")}
    if problem_type == "binary":
        names = (
            "accuracy",
            "true_positives",
            "false_positives",
            "true_negatives",
            "false_negatives",
            "precision",
            "recall",
            "f0_5",
            "f1",
            "f2",
            "auc",
        )
        return {name: _single_metric(classification_metrics, name) for name in names}
    raise ValueError(f"unknown problem type: {problem_type!r}")


def _single_metric(
    family: Callable[[LabeledBatch], dict[str, float | None]], name: str
) -> Callable[[LabeledBatch], float | None]:
    def metric(batch: LabeledBatch) -> float | None:
        return family(batch)[name]

    return metric


def _nan_or(value: float | None) -> float | str:
    return "NaN" if value is None else value


def metrics_key(problem_type: str) -> str:
    if problem_type == "regression":
        return REGRESSION_METRICS_KEY
    if problem_type == "binary":
        return BINARY_METRICS_KEY
    raise ValueError(f"unknown problem type: {problem_type!r}")


def constraints_key(problem_type: str) -> str:
    return (
        REGRESSION_CONSTRAINTS_KEY if problem_type == "regression" else BINARY_CONSTRAINTS_KEY
    )


def quality_report(
    batch: LabeledBatch,
    problem_type: str = "regression",
    bootstrap: BootstrapConfig = BootstrapConfig(),
    evaluation_time: datetime | None = None,
) -> dict[str, Any]:
    """Build the quality report document for one window."""
    _require_rows(batch)
    functions = _metric_functions(problem_type)
    block: dict[str, Any] = {}
    for name, function in functions.items():
        value = function(batch)
        stddev = bootstrap_stddev(batch, function, bootstrap)
        block[name] = {
            "value": _nan_or(value),
            "standard_deviation": _nan_or(stddev),
        }
    dataset: dict[str, Any] = {"item_count": len(batch)}
    if batch.start_time is not None:
        dataset["start_time"] = format_timestamp(batch.start_time)
    if batch.end_time is not None:
        dataset["end_time"] = format_timestamp(batch.end_time)
    dataset["evaluation_time"] = format_timestamp_millis(evaluation_time or utc_now())
    return {"version": 0.0, "dataset": dataset, metrics_key(problem_type): block}


# metrics where a larger value means worse quality; everything else
# suggested below is larger-is-better
_HIGHER_IS_WORSE = {"mae", "mse", "rmse"}
_SUGGESTED = {
    "regression": ("mae", "mse", "rmse", "r2"),
    "binary": ("accuracy", "precision", "recall", "f0_5", "f1", "f2", "auc"),
}


def suggest_quality_constraints(report: dict[str, Any]) -> dict[str, Any]:
    """Turn a baseline-window report into a constraints document.

    Each suggested threshold is the observed baseline value; direction
    follows the metric (error metrics bound above, score metrics below).
    Confusion counts scale with the batch and get no constraint.
    """
    for problem_type in ("regression", "binary"):
        block = report.get(metrics_key(problem_type))
        if block is not None:
            break
    else:
        raise ValueError("report contains no metrics block")
    constraints: dict[str, Any] = {}
    for name in _SUGGESTED[problem_type]:
        entry = block.get(name)
        if entry is None or entry["value"] == "NaN":
            continue
        operator = GREATER if name in _HIGHER_IS_WORSE else LESS
        constraints[name] = {
            "threshold": entry["value"],
            "comparison_operator": operator,
        }
    return {"version": 0.0, constraints_key(problem_type): constraints}


@dataclass
class QualityViolation:
    metric_name: str
    operator: str
    threshold: float
    value: float | None
    stddev: float
    description: str = field(default="")

    def to_dict(self) -> dict[str, Any]:
        return {
            "check": "quality_constraint_check",
            "column": self.metric_name,
            "description": self.description,
            "details": {
                "metric": self.metric_name,
                "operator": self.operator,
                "threshold": self.threshold,
                "value": _nan_or(self.value),
                "stddev": self.stddev,
            },
        }


def evaluate_quality_constraints(
    report: dict[str, Any], constraints: dict[str, Any]
) -> list[QualityViolation]:
    """Check a report against constraints, widened by the metric's stddev.

    A constraint violates only when the value exceeds its threshold by
    more than the report's bootstrap standard deviation for that metric;
    an undefined stddev widens by nothing.  A constraint naming a metric
    the report lacks (or whose value is undefined) is itself a violation.
    """
    metric_blocks = [
        report.get(REGRESSION_METRICS_KEY) or {},
        report.get(BINARY_METRICS_KEY) or {},
    ]
    constraint_blocks: dict[str, Any] = {}
    for key in (REGRESSION_CONSTRAINTS_KEY, BINARY_CONSTRAINTS_KEY):
        constraint_blocks.update(constraints.get(key) or {})
    violations: list[QualityViolation] = []
    for name, constraint in constraint_blocks.items():
        operator = constraint["comparison_operator"]
        if operator not in (GREATER, LESS):
            raise ValueError(f"unknown comparison operator: {operator!r}")
        threshold = float(constraint["threshold"])
        entry = None
        for block in metric_blocks:
            if name in block:
                entry = block[name]
                break
        if entry is None or entry["value"] == "NaN":
            violations.append(
                QualityViolation(
                    metric_name=name,
                    operator=operator,
                    threshold=threshold,
                    value=None,
                    stddev=0.0,
                    description=f"metric {name} missing from report",
                )
            )
            continue
        value = float(entry["value"])
        raw_sd = entry.get("standard_deviation", "NaN")
        stddev = 0.0 if raw_sd == "NaN" or raw_sd is None else float(raw_sd)
        if operator == GREATER:
            violated = value > threshold + stddev
            direction = "above"
        else:
            violated = value < threshold - stddev
            direction = "below"
        if violated:
            violations.append(
                QualityViolation(
                    metric_name=name,
                    operator=operator,
                    threshold=threshold,
                    value=value,
                    stddev=stddev,
                    description=(
                        f"metric {name} = {value} is {direction} the baseline "
                        f"threshold {threshold} beyond the uncertainty band {stddev}"
                    ),
                )
            )
    return violations
