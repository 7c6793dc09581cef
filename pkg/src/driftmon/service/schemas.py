"""Request/response models for the monitoring service."""

from __future__ import annotations

from typing import Any

from pydantic import BaseModel, Field

from ..adaptive import DEFAULT_INTERVALS, DEFAULT_THRESHOLD_RANGE
from ..attribution import DEFAULT_NDCG_THRESHOLD
from ..baseline import DEFAULT_ALPHA, DEFAULT_EPSILON
from ..kll import DEFAULT_K
from ..scheduler import DEFAULT_JITTER_MINUTES


class HealthResponse(BaseModel):
    status: str
    version: str


class SuggestBaselineRequest(BaseModel):
    dataset: str
    output: str
    epsilon: float = DEFAULT_EPSILON
    alpha: float = DEFAULT_ALPHA
    kll_k: int = DEFAULT_K
    seed: int = 0
    problem_type: str | None = None
    prediction_field: str = "prediction"
    label_field: str = "label"


class SuggestBaselineResponse(BaseModel):
    baseline: str
    rows: int
    columns: int
    constraint_count: int
    quality_metrics: list[str] = Field(default_factory=list)


class AnalyzeRequest(BaseModel):
    baseline: str
    capture_root: str
    output_root: str
    start: str
    end: str
    labels_root: str | None = None
    problem_type: str | None = None
    seed: int = 0


class JobRecordModel(BaseModel):
    schedule: str
    window_start: str
    window_end: str
    started_at: str
    finished_at: str | None
    status: str
    violation_count: int
    item_count: int
    steps: list[str]
    outputs: dict[str, str]
    join_counts: dict[str, int] | None
    error: str | None


class AnalyzeResponse(BaseModel):
    job: JobRecordModel
    violations: list[dict[str, Any]]
    metrics_lines: list[str]


class CaptureRecordIn(BaseModel):
    event_id: str
    timestamp: str
    input: str
    output: str


class CaptureIngestRequest(BaseModel):
    root: str
    records: list[CaptureRecordIn]
    sampling_percentage: float = 100.0
    seed: int = 0
    max_bytes: int = 1024 * 1024
    max_age_seconds: float = 60.0


class CaptureIngestResponse(BaseModel):
    received: int
    captured: int
    skipped: int
    rejected: int


class CaptureFlushRequest(BaseModel):
    root: str


class CaptureFlushResponse(BaseModel):
    files: list[str]
    received: int
    captured: int
    skipped: int
    rejected: int


class JoinRequest(BaseModel):
    capture_root: str
    labels_root: str
    output_root: str
    start: str | None = None
    end: str | None = None


class JoinResponse(BaseModel):
    counts: dict[str, int]
    files: list[str]


class ScheduleConfigModel(BaseModel):
    name: str
    baseline: str
    capture_root: str
    output_root: str
    labels_root: str | None = None
    cadence: str = "hourly"
    jitter_minutes: float = DEFAULT_JITTER_MINUTES
    problem_type: str | None = None
    seed: int = 0


class NextRunRequest(BaseModel):
    now: str


class NextRunResponse(BaseModel):
    next_run: str


class RunScheduleRequest(BaseModel):
    window_start: str
    window_end: str | None = None


class RunScheduleResponse(BaseModel):
    job: JobRecordModel
    metrics_lines: list[str]


class JobsResponse(BaseModel):
    jobs: list[JobRecordModel]


class BiasCaseStudyRequest(BaseModel):
    output: str
    pool_advantaged: int = 10_000
    pool_disadvantaged: int = 10_000
    positive_rate_advantaged: float = 0.3005
    positive_rate_disadvantaged: float = 0.4995
    ranges: list[tuple[str, float, float]] | None = None
    sample_sizes: list[int] = Field(default_factory=lambda: [200, 2000])
    repeats: int = 100
    seed: int = 0
    n_boot: int = 5
    resample_frac: float = 0.8
    sample_cap: int = 200


class BiasCaseStudyCell(BaseModel):
    config_label: str
    range_low: float
    range_high: float
    sample_size: int
    repeats: int
    alarms: int
    alarm_fraction: float


class BiasCaseStudyResponse(BaseModel):
    csv_path: str
    pool_dpl: float
    cells: list[BiasCaseStudyCell]


class AdaptiveRequest(BaseModel):
    output_dir: str
    rounds: int = 400
    horizon: int = 10_000
    seed: int = 0
    intervals: list[int] = Field(default_factory=lambda: list(DEFAULT_INTERVALS))
    threshold_low: float = DEFAULT_THRESHOLD_RANGE[0]
    threshold_high: float = DEFAULT_THRESHOLD_RANGE[1]


class AdaptiveResponse(BaseModel):
    triplets_csv: str
    summary_csv: str
    rounds: int
    results: int


class AttributionCheckRequest(BaseModel):
    baseline_scores: dict[str, float]
    observed_ranking: list[str]
    threshold: float = DEFAULT_NDCG_THRESHOLD


class AttributionCheckResponse(BaseModel):
    ndcg: float
    alert: bool
    threshold: float
