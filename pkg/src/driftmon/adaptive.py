"""Cost/accuracy simulation of calendar vs drift-triggered retraining.

The world is a linear data generator y = a*x + b with x ~ N(0, 1) whose
parameters random-walk (each gains an N(1, 1) increment) every
``drift_interval`` examples.  A deployed model is a stale copy of the
generator; retraining replaces it with the current generator at unit
cost.  The nonadaptive policy retrains every ``interval`` examples; the
adaptive policy watches the RMSE of the trailing ``window`` prediction
errors and retrains when it crosses ``threshold``.

Per step the order is: predict and accumulate error, then the retrain
decision, then (on interval boundaries) the drift step.  The policy
consumes no randomness, so two policies under one seed face an
identical drift path; experiments pair techniques that way.  Each round
yields (technique, parameter, cost, rmse), where cost counts retrains
over the horizon.
"""

from __future__ import annotations

import csv
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

__all__ = [
    "LinearModel",
    "Policy",
    "RoundResult",
    "drift_step",
    "simulate",
    "run_experiment",
    "summarize",
    "write_triplets_csv",
    "write_summary_csv",
    "DEFAULT_INTERVALS",
    "DEFAULT_THRESHOLD_RANGE",
]

ADAPTIVE = "adaptive"
NONADAPTIVE = "nonadaptive"

DEFAULT_HORIZON = 10_000
DEFAULT_DRIFT_INTERVAL = 100
DEFAULT_WINDOW = 100
DEFAULT_INTERVALS: tuple[int, ...] = (50, 100, 200, 400, 800, 1600, 3200)
DEFAULT_THRESHOLD_RANGE: tuple[float, float] = (0.5, 20.0)


@dataclass(frozen=True)
class LinearModel:
    a: float
    b: float

    def predict(self, x: float) -> float:
        return self.a * x + self.b


@dataclass(frozen=True)
class Policy:
    technique: str
    parameter: float  # retrain interval (nonadaptive) or RMSE threshold (adaptive)

    def __post_init__(self) -> None:
        if self.technique not in (ADAPTIVE, NONADAPTIVE):
            raise ValueError(f"unknown technique: {self.technique!r}")
        if self.technique == NONADAPTIVE:
            if self.parameter < 1 or self.parameter != int(self.parameter):
                raise ValueError(
                    f"nonadaptive interval must be a positive integer, got {self.parameter}"
                )
        elif self.parameter <= 0:
            raise ValueError(f"adaptive threshold must be positive, got {self.parameter}")


@dataclass(frozen=True)
class RoundResult:
    technique: str
    parameter: float
    cost: int
    rmse: float


def drift_step(model: LinearModel, rng: random.Random) -> LinearModel:
    return LinearModel(a=model.a + rng.gauss(1.0, 1.0), b=model.b + rng.gauss(1.0, 1.0))


def simulate(
    policy: Policy,
    horizon: int = DEFAULT_HORIZON,
    seed: int = 0,
    drift_interval: int = DEFAULT_DRIFT_INTERVAL,
    window: int = DEFAULT_WINDOW,
) -> RoundResult:
    """Run one policy over one drifting stream."""
    if horizon < 1:
        raise ValueError(f"horizon must be positive, got {horizon}")
    rng = random.Random(seed)
    generator = LinearModel(a=1.0, b=0.0)
    deployed = generator
    interval = int(policy.parameter)
    threshold_sq = policy.parameter * policy.parameter
    # trailing squared errors as a ring buffer; cleared on retrain so a
    # fresh model is judged only on its own errors
    ring = [0.0] * window
    filled = 0
    cursor = 0
    window_sum = 0.0
    total_sq = 0.0
    cost = 0
    for step in range(1, horizon + 1):
        x = rng.gauss(0.0, 1.0)
        error = deployed.predict(x) - generator.predict(x)
        squared = error * error
        total_sq += squared
        if policy.technique == ADAPTIVE:
            if filled == window:
                window_sum -= ring[cursor]
            else:
                filled += 1
            ring[cursor] = squared
            window_sum += squared
            cursor = (cursor + 1) % window
            # fire only on a full window: a half-filled mean is noisy
            if filled == window and window_sum / window > threshold_sq:
                deployed = generator
                cost += 1
                filled = 0
                cursor = 0
                window_sum = 0.0
        else:
            if step % interval == 0:
                deployed = generator
                cost += 1
        if step % drift_interval == 0:
            generator = drift_step(generator, rng)
    return RoundResult(
        technique=policy.technique,
        parameter=policy.parameter,
        cost=cost,
        rmse=math.sqrt(total_sq / horizon),
    )


def run_experiment(
    rounds: int = 400,
    horizon: int = DEFAULT_HORIZON,
    seed: int = 0,
    intervals: Sequence[int] = DEFAULT_INTERVALS,
    threshold_range: tuple[float, float] = DEFAULT_THRESHOLD_RANGE,
    drift_interval: int = DEFAULT_DRIFT_INTERVAL,
    window: int = DEFAULT_WINDOW,
) -> list[RoundResult]:
    """Paired sweep: each round runs both techniques on one drift path.

    Per round the master seed yields a simulation seed, a nonadaptive
    interval from the grid, and an adaptive threshold drawn log-uniform
    from ``threshold_range``.
    """
    if rounds < 1:
        raise ValueError(f"rounds must be positive, got {rounds}")
    low, high = threshold_range
    if not 0 < low <= high:
        raise ValueError(f"bad threshold range: {threshold_range}")
    master = random.Random(seed)
    results: list[RoundResult] = []
    for _ in range(rounds):
        sim_seed = master.randrange(2**63)
        interval = master.choice(list(intervals))
        threshold = math.exp(master.uniform(math.log(low), math.log(high)))
        for policy in (
            Policy(NONADAPTIVE, float(interval)),
            Policy(ADAPTIVE, threshold),
        ):
            results.append(
                simulate(
                    policy,
                    horizon=horizon,
                    seed=sim_seed,
                    drift_interval=drift_interval,
                    window=window,
                )
            )
    return results


def summarize(results: Sequence[RoundResult]) -> list[tuple[str, int, float, int]]:
    """Mean RMSE grouped by (technique, cost), sorted."""
    groups: dict[tuple[str, int], list[float]] = {}
    for result in results:
        groups.setdefault((result.technique, result.cost), []).append(result.rmse)
    return [
        (technique, cost, sum(values) / len(values), len(values))
        for (technique, cost), values in sorted(groups.items())
    ]


def write_triplets_csv(path: str | Path, results: Sequence[RoundResult]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["technique", "parameter", "cost", "rmse"])
        for result in results:
            writer.writerow(
                [result.technique, repr(result.parameter), result.cost, repr(result.rmse)]
            )


def write_summary_csv(path: str | Path, results: Sequence[RoundResult]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["technique", "cost", "mean_rmse", "rounds"])
        for technique, cost, mean_rmse, count in summarize(results):
            writer.writerow([technique, cost, repr(mean_rmse), count])
