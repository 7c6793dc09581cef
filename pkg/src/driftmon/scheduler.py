"""Hourly monitoring schedules: jittered runs, join-then-analyze pipeline.

Each run covers one closed hour window.  The next run lands at the top
of the next hour plus a uniform random delay of up to ``jitter_minutes``
(drawn per job), which spreads fleet load instead of thundering at
minute zero.  A window is only processed after it closes.

Pipeline order inside a run is fixed: ground-truth join first (when a
labels root is configured), then profiling and constraint validation,
then quality metrics on the joined rows.  Outputs land in the window's
output partition: ``statistics.json``, ``model_quality.json`` (when
labels exist), and ``constraint_violations.json``.  One line per metric
goes to the metrics sink in the form ``metric <name> <value> <window>``.

Job records append to a JSON-lines store; re-runs of the same
(schedule, window) pair supersede older records on read.
"""

from __future__ import annotations

import json
import random
import time
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Any, Callable

from . import quality
from .baseline import Baseline, Violation, profile_records, validate_batch, violations_document
from .capture import iter_partitions, read_json_lines, join_ground_truth
from .errors import ParseError
from .timeutil import as_utc, format_timestamp, parse_timestamp, utc_now

__all__ = [
    "ScheduleConfig",
    "next_run",
    "floor_hour",
    "JobRecord",
    "JobStore",
    "run_window",
    "run_loop",
    "DEFAULT_JITTER_MINUTES",
]

DEFAULT_JITTER_MINUTES = 20.0

STATUS_COMPLETED = "completed"
STATUS_VIOLATIONS = "completed_with_violations"
STATUS_FAILED = "failed"


@dataclass
class ScheduleConfig:
    name: str
    baseline_path: str
    capture_root: str
    output_root: str
    labels_root: str | None = None
    cadence: str = "hourly"
    jitter_minutes: float = DEFAULT_JITTER_MINUTES
    problem_type: str | None = None  # regression | binary; enables the quality step
    seed: int = 0

    def __post_init__(self) -> None:
        if self.cadence != "hourly":
            raise ValueError(f"only hourly cadence is supported, got {self.cadence!r}")
        if not 0.0 <= self.jitter_minutes <= 59.0:
            raise ValueError(f"jitter_minutes must be in [0, 59], got {self.jitter_minutes}")
        if self.problem_type not in (None, "regression", "binary"):
            raise ValueError(f"unknown problem type: {self.problem_type!r}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "cadence": self.cadence,
            "jitter_minutes": self.jitter_minutes,
            "baseline": self.baseline_path,
            "capture_root": self.capture_root,
            "labels_root": self.labels_root,
            "output_root": self.output_root,
            "problem_type": self.problem_type,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> ScheduleConfig:
        return cls(
            name=doc["name"],
            baseline_path=doc["baseline"],
            capture_root=doc["capture_root"],
            output_root=doc["output_root"],
            labels_root=doc.get("labels_root"),
            cadence=doc.get("cadence", "hourly"),
            jitter_minutes=float(doc.get("jitter_minutes", DEFAULT_JITTER_MINUTES)),
            problem_type=doc.get("problem_type"),
            seed=int(doc.get("seed", 0)),
        )

    @classmethod
    def load(cls, path: str | Path) -> ScheduleConfig:
        return cls.from_dict(json.loads(Path(path).read_text()))


def floor_hour(ts: datetime) -> datetime:
    ts = as_utc(ts)
    return ts.replace(minute=0, second=0, microsecond=0)


def next_run(config: ScheduleConfig, now: datetime, rng: random.Random) -> datetime:
    """Top of the next hour plus a fresh uniform jitter draw."""
    top = floor_hour(now) + timedelta(hours=1)
    return top + timedelta(seconds=rng.uniform(0.0, config.jitter_minutes * 60.0))


@dataclass
class JobRecord:
    schedule: str
    window_start: datetime
    window_end: datetime
    started_at: datetime
    finished_at: datetime | None = None
    status: str = STATUS_COMPLETED
    violation_count: int = 0
    item_count: int = 0
    steps: list[str] = field(default_factory=list)
    outputs: dict[str, str] = field(default_factory=dict)
    join_counts: dict[str, int] | None = None
    error: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "schedule": self.schedule,
            "window_start": format_timestamp(self.window_start),
            "window_end": format_timestamp(self.window_end),
            "started_at": format_timestamp(self.started_at),
            "finished_at": (
                format_timestamp(self.finished_at) if self.finished_at else None
            ),
            "status": self.status,
            "violation_count": self.violation_count,
            "item_count": self.item_count,
            "steps": list(self.steps),
            "outputs": dict(self.outputs),
            "join_counts": self.join_counts,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> JobRecord:
        return cls(
            schedule=doc["schedule"],
            window_start=parse_timestamp(doc["window_start"]),
            window_end=parse_timestamp(doc["window_end"]),
            started_at=parse_timestamp(doc["started_at"]),
            finished_at=(
                parse_timestamp(doc["finished_at"]) if doc.get("finished_at") else None
            ),
            status=doc["status"],
            violation_count=int(doc.get("violation_count", 0)),
            item_count=int(doc.get("item_count", 0)),
            steps=list(doc.get("steps", [])),
            outputs=dict(doc.get("outputs", {})),
            join_counts=doc.get("join_counts"),
            error=doc.get("error"),
        )


class JobStore:
    """Append-only JSON-lines job history; last write wins per (schedule, window)."""

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)

    def append(self, record: JobRecord) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.path.open("a") as handle:
            handle.write(json.dumps(record.to_dict()) + "\n")

    def records(self) -> list[JobRecord]:
        if not self.path.exists():
            return []
        latest: dict[tuple[str, str], JobRecord] = {}
        for doc in read_json_lines(self.path):
            record = JobRecord.from_dict(doc)
            latest[(record.schedule, format_timestamp(record.window_start))] = record
        return sorted(
            latest.values(), key=lambda r: (r.window_start, r.schedule), reverse=True
        )


def _load_window_records(
    capture_root: str | Path, start: datetime, end: datetime
) -> list[dict[str, Any]]:
    records: list[dict[str, Any]] = []
    for _, files in iter_partitions(capture_root, start, end):
        for path in files:
            records.extend(read_json_lines(path))
    return records


def _feature_rows(records: list[dict[str, Any]]) -> list[dict[str, Any]]:
    """Parse each record's input payload into a feature mapping."""
    rows = []
    for record in records:
        payload = record.get("input", "")
        try:
            doc = json.loads(payload)
        except (json.JSONDecodeError, TypeError):
            raise ParseError(
                f"record {record.get('event_id', '?')}: input payload is not JSON"
            ) from None
        if not isinstance(doc, dict):
            raise ParseError(
                f"record {record.get('event_id', '?')}: input payload must be a JSON object"
            )
        rows.append(doc)
    return rows


def _labeled_batch(
    records: list[dict[str, Any]], start: datetime, end: datetime, problem_type: str
) -> quality.LabeledBatch:
    predictions = []
    labels = []
    for record in records:
        try:
            predictions.append(float(record["output"]))
            labels.append(float(record["label"]))
        except (ValueError, TypeError, KeyError) as exc:
            raise ParseError(
                f"record {record.get('event_id', '?')}: bad prediction/label: {exc}"
            ) from None
    if problem_type == "binary":
        predictions = [round(p) for p in predictions]
        labels = [round(y) for y in labels]
    return quality.LabeledBatch(
        predictions=predictions, labels=labels, start_time=start, end_time=end
    )


def run_window(
    config: ScheduleConfig,
    window_start: datetime,
    window_end: datetime | None = None,
    now: datetime | None = None,
    store: JobStore | None = None,
    metrics_sink: Callable[[str], None] | None = None,
) -> JobRecord:
    """Run the monitoring pipeline for one closed window (default one hour)."""
    now = now or utc_now()
    window_start = floor_hour(window_start)
    window_end = (
        window_start + timedelta(hours=1) if window_end is None else floor_hour(window_end)
    )
    if window_end <= window_start:
        raise ValueError("window end must be after window start")
    if window_end > now:
        raise ValueError(
            f"window [{format_timestamp(window_start)}, {format_timestamp(window_end)}) "
            "is not closed yet"
        )
    record = JobRecord(
        schedule=config.name,
        window_start=window_start,
        window_end=window_end,
        started_at=now,
    )
    window_label = f"{format_timestamp(window_start)}/{format_timestamp(window_end)}"
    sink = metrics_sink if metrics_sink is not None else print

    def emit(name: str, value: float) -> None:
        sink(f"metric {name} {value} {window_label}")

    try:
        _run_steps(config, record, window_start, window_end, emit)
    except Exception as exc:  # a failed job must still leave a record
        record.status = STATUS_FAILED
        record.error = f"{type(exc).__name__}: {exc}"
    record.finished_at = utc_now()
    if store is not None:
        store.append(record)
    return record


def _run_steps(
    config: ScheduleConfig,
    record: JobRecord,
    window_start: datetime,
    window_end: datetime,
    emit: Callable[[str, float], None],
) -> None:
    output_dir = Path(config.output_root) / window_start.strftime("%Y/%m/%d/%H")
    baseline = Baseline.load(config.baseline_path)

    if config.labels_root is not None:
        join = join_ground_truth(
            config.capture_root,
            config.labels_root,
            Path(config.output_root) / "joined",
            start=window_start,
            end=window_end,
        )
        record.steps.append("join")
        record.join_counts = join.counts
        analysis_records = _load_window_records(
            Path(config.output_root) / "joined", window_start, window_end
        )
    else:
        analysis_records = []

    capture_records = _load_window_records(config.capture_root, window_start, window_end)
    record.item_count = len(capture_records)
    record.steps.append("profile")

    output_dir.mkdir(parents=True, exist_ok=True)
    statistics: dict[str, Any] = {
        "version": 0.0,
        "dataset": {
            "item_count": len(capture_records),
            "start_time": format_timestamp(window_start),
            "end_time": format_timestamp(window_end),
        },
        "features": [],
    }
    violations: list[Any] = []
    if capture_records:
        profiles = profile_records(_feature_rows(capture_records), seed=config.seed)
        statistics["features"] = [profile.to_dict() for profile in profiles]
        record.steps.append("validate")
        violations.extend(validate_batch(profiles, baseline))
    stats_path = output_dir / "statistics.json"
    stats_path.write_text(json.dumps(statistics, indent=2) + "\n")
    record.outputs["statistics"] = str(stats_path)

    wants_quality = config.problem_type is not None or baseline.quality_constraints
    if analysis_records and wants_quality:
        problem_type = config.problem_type or "regression"
        batch = _labeled_batch(analysis_records, window_start, window_end, problem_type)
        report = quality.quality_report(
            batch,
            problem_type,
            bootstrap=quality.BootstrapConfig(seed=config.seed),
        )
        record.steps.append("quality")
        report_path = output_dir / "model_quality.json"
        report_path.write_text(json.dumps(report, indent=2) + "\n")
        record.outputs["model_quality"] = str(report_path)
        for name, entry in report[quality.metrics_key(problem_type)].items():
            if entry["value"] != "NaN":
                emit(name, entry["value"])
        if baseline.quality_constraints:
            violations.extend(
                quality.evaluate_quality_constraints(report, baseline.quality_constraints)
            )

    violations_path = output_dir / "constraint_violations.json"
    violations_path.write_text(json.dumps(violations_document(violations), indent=2) + "\n")
    record.outputs["violations"] = str(violations_path)
    record.violation_count = len(violations)
    emit("item_count", record.item_count)
    emit("violation_count", record.violation_count)
    record.status = STATUS_VIOLATIONS if violations else STATUS_COMPLETED


def run_loop(
    config: ScheduleConfig,
    store: JobStore,
    iterations: int = 1,
    now_fn: Callable[[], datetime] = utc_now,
    sleep_fn: Callable[[float], None] = time.sleep,
    rng: random.Random | None = None,
    metrics_sink: Callable[[str], None] | None = None,
) -> list[JobRecord]:
    """Run ``iterations`` scheduled windows, sleeping until each jittered slot."""
    rng = rng if rng is not None else random.Random(config.seed)
    records = []
    for _ in range(iterations):
        now = now_fn()
        due = next_run(config, now, rng)
        wait = (due - now).total_seconds()
        if wait > 0:
            sleep_fn(wait)
        now = now_fn()
        window_start = floor_hour(due) - timedelta(hours=1)
        records.append(
            run_window(
                config,
                window_start,
                now=max(now, due),
                store=store,
                metrics_sink=metrics_sink,
            )
        )
    return records
