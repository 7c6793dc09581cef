"""Post-training bias metrics and drift alarms over a sensitive facet.

The alarm compares a bias metric computed on the full live batch against
an acceptable range fixed at baseline time, widened by a bootstrap
estimate of the metric's sampling noise on that batch.  The bootstrap
caps its input at ``sample_cap`` rows to bound cost; the headline metric
value itself is never capped.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import InsufficientDataError

__all__ = [
    "FacetedBatch",
    "dpl",
    "accuracy_difference",
    "BiasAlarmConfig",
    "BiasAlarmResult",
    "bias_alarm",
    "CaseStudyCell",
    "bias_case_study",
    "write_case_study_csv",
    "build_pool",
]


@dataclass
class FacetedBatch:
    """Binary outcomes split by a sensitive attribute.

    ``advantaged[i]`` is True when row i belongs to the advantaged
    group.  ``predictions`` may be None for label-only metrics.
    """

    labels: list[int]
    advantaged: list[bool]
    predictions: list[int] | None = None

    def __post_init__(self) -> None:
        if len(self.labels) != len(self.advantaged):
            raise ValueError(
                f"{len(self.labels)} labels vs {len(self.advantaged)} facet values"
            )
        if self.predictions is not None and len(self.predictions) != len(self.labels):
            raise ValueError(
                f"{len(self.predictions)} predictions vs {len(self.labels)} labels"
            )
        for column in (self.labels, self.predictions or []):
            for value in column:
                if value not in (0, 1):
                    raise ValueError(f"binary outcome must be 0 or 1, got {value!r}")

    def __len__(self) -> int:
        return len(self.labels)

    def take(self, indexes: Sequence[int]) -> FacetedBatch:
        return FacetedBatch(
            labels=[self.labels[i] for i in indexes],
            advantaged=[self.advantaged[i] for i in indexes],
            predictions=(
                [self.predictions[i] for i in indexes] if self.predictions is not None else None
            ),
        )

    def head(self, m: int) -> FacetedBatch:
        return FacetedBatch(
            labels=self.labels[:m],
            advantaged=self.advantaged[:m],
            predictions=self.predictions[:m] if self.predictions is not None else None,
        )


def _group_split(batch: FacetedBatch) -> tuple[list[int], list[int]]:
    adv = [i for i, flag in enumerate(batch.advantaged) if flag]
    dis = [i for i, flag in enumerate(batch.advantaged) if not flag]
    if not adv or not dis:
        raise InsufficientDataError("both facet groups must be non-empty")
    return adv, dis


def dpl(batch: FacetedBatch) -> float:
    """Difference in positive proportions of observed labels.

    Positive-label rate of the advantaged group minus that of the
    disadvantaged group; negative values mean the advantaged group
    receives fewer positive labels.
    """
    adv, dis = _group_split(batch)
    rate_adv = sum(batch.labels[i] for i in adv) / len(adv)
    rate_dis = sum(batch.labels[i] for i in dis) / len(dis)
    return rate_adv - rate_dis


def accuracy_difference(batch: FacetedBatch) -> float:
    """Prediction accuracy of the advantaged group minus the disadvantaged."""
    if batch.predictions is None:
        raise ValueError("accuracy_difference needs predictions")
    adv, dis = _group_split(batch)
    acc_adv = sum(batch.predictions[i] == batch.labels[i] for i in adv) / len(adv)
    acc_dis = sum(batch.predictions[i] == batch.labels[i] for i in dis) / len(dis)
    return acc_adv - acc_dis


@dataclass(frozen=True)
class BiasAlarmConfig:
    low: float
    high: float
    n_boot: int = 5
    resample_frac: float = 0.8
    sample_cap: int = 200
    seed: int = 0

    def __post_init__(self) -> None:
        if self.low > self.high:
            raise ValueError(f"empty acceptable range: [{self.low}, {self.high}]")
        if self.n_boot < 2:
            raise ValueError(f"n_boot must be at least 2, got {self.n_boot}")
        if not 0.0 < self.resample_frac <= 1.0:
            raise ValueError(f"resample_frac must be in (0, 1], got {self.resample_frac}")
        if self.sample_cap < 1:
            raise ValueError(f"sample_cap must be positive, got {self.sample_cap}")


@dataclass(frozen=True)
class BiasAlarmResult:
    metric_value: float
    bootstrap_stddev: float | None
    alarm: bool


def bias_alarm(
    batch: FacetedBatch,
    metric: Callable[[FacetedBatch], float],
    config: BiasAlarmConfig,
) -> BiasAlarmResult:
    """Alarm when the metric leaves [low, high] by more than one bootstrap sd.

    The metric value is computed on the whole batch.  The bootstrap
    resamples the first min(n, sample_cap) rows, drawing
    ceil(resample_frac * m) rows with replacement per replicate; a
    replicate with an undefined metric (one facet resampled away) makes
    the stddev undefined, which widens the band by nothing.
    """
    if len(batch) == 0:
        raise InsufficientDataError("empty batch")
    value = metric(batch)
    m = min(len(batch), config.sample_cap)
    head = batch.head(m)
    draw = math.ceil(config.resample_frac * m)
    replicates: list[float] = []
    stddev: float | None
    for replicate in range(config.n_boot):
        rng = np.random.default_rng((config.seed, replicate))
        indexes = rng.integers(0, m, size=draw)
        try:
            replicates.append(metric(head.take(indexes)))
        except InsufficientDataError:
            replicates = []
            break
    stddev = float(np.std(replicates, ddof=1)) if replicates else None
    band = stddev if stddev is not None else 0.0
    alarm = value > config.high + band or value < config.low - band
    return BiasAlarmResult(metric_value=value, bootstrap_stddev=stddev, alarm=alarm)


@dataclass(frozen=True)
class CaseStudyCell:
    config_label: str
    range_low: float
    range_high: float
    sample_size: int
    repeats: int
    alarms: int

    @property
    def alarm_fraction(self) -> float:
        return self.alarms / self.repeats


def bias_case_study(
    pool: FacetedBatch,
    ranges: Sequence[tuple[str, float, float]],
    sample_sizes: Sequence[int],
    repeats: int = 100,
    metric: Callable[[FacetedBatch], float] = dpl,
    seed: int = 0,
    n_boot: int = 5,
    resample_frac: float = 0.8,
    sample_cap: int = 200,
) -> list[CaseStudyCell]:
    """Alarm-rate sweep: acceptable ranges x sample sizes over a fixed pool.

    Each repeat draws ``sample_size`` rows from the pool without
    replacement and runs the alarm with a bootstrap seed derived from
    the master seed, so the whole table is reproducible.
    """
    master = np.random.default_rng(seed)
    cells: list[CaseStudyCell] = []
    for label, low, high in ranges:
        for size in sample_sizes:
            if size > len(pool):
                raise ValueError(f"sample size {size} exceeds pool size {len(pool)}")
            alarms = 0
            for _ in range(repeats):
                indexes = master.choice(len(pool), size=size, replace=False)
                config = BiasAlarmConfig(
                    low=low,
                    high=high,
                    n_boot=n_boot,
                    resample_frac=resample_frac,
                    sample_cap=sample_cap,
                    seed=int(master.integers(2**32)),
                )
                if bias_alarm(pool.take(indexes), metric, config).alarm:
                    alarms += 1
            cells.append(
                CaseStudyCell(
                    config_label=label,
                    range_low=low,
                    range_high=high,
                    sample_size=size,
                    repeats=repeats,
                    alarms=alarms,
                )
            )
    return cells


def write_case_study_csv(path: str | Path, cells: Sequence[CaseStudyCell]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            [
                "config_label",
                "range_low",
                "range_high",
                "sample_size",
                "repeats",
                "alarms",
                "alarm_fraction",
            ]
        )
        for cell in cells:
            writer.writerow(
                [
                    cell.config_label,
                    repr(cell.range_low),
                    repr(cell.range_high),
                    cell.sample_size,
                    cell.repeats,
                    cell.alarms,
                    repr(cell.alarm_fraction),
                ]
            )


def build_pool(
    n_advantaged: int,
    n_disadvantaged: int,
    positive_rate_advantaged: float,
    positive_rate_disadvantaged: float,
    seed: int = 0,
) -> FacetedBatch:
    """Synthetic label-only pool with exact per-group positive counts.

    Positive counts are rounded from the requested rates, so the pool's
    DPL is exactly round(r_adv*n_adv)/n_adv - round(r_dis*n_dis)/n_dis.
    Rows are shuffled so prefix subsets stay representative.
    """
    if n_advantaged < 1 or n_disadvantaged < 1:
        raise ValueError("both groups need at least one row")
    rows: list[tuple[int, bool]] = []
    for group_size, rate, flag in (
        (n_advantaged, positive_rate_advantaged, True),
        (n_disadvantaged, positive_rate_disadvantaged, False),
    ):
        positives = round(rate * group_size)
        if not 0 <= positives <= group_size:
            raise ValueError(f"positive rate {rate} out of range")
        rows.extend((1, flag) for _ in range(positives))
        rows.extend((0, flag) for _ in range(group_size - positives))
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(rows))
    return FacetedBatch(
        labels=[rows[i][0] for i in order],
        advantaged=[rows[i][1] for i in order],
    )
