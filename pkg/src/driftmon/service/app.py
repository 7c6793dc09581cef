"""HTTP service wrapping the monitoring engine.

Endpoints are thin adapters: they parse request models, call the core
package, and serialize results.  Capture sessions are held per capture
root on the application state so a sequence of ingest calls shares one
buffer.  Input validation errors from the core map to 400, missing
files to 404.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Any

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse

from .. import __version__, adaptive, bias
from ..attribution import attribution_drift_check
from ..baseline import profile_csv, suggest_baseline
from ..capture import CaptureRecord, CaptureSession, FlushPolicy, join_ground_truth
from ..errors import ParseError
from ..quality import BootstrapConfig, LabeledBatch, quality_report, suggest_quality_constraints
from ..scheduler import JobStore, ScheduleConfig, next_run, run_window
from ..timeutil import format_timestamp, parse_timestamp
from . import schemas

import random


def create_app() -> FastAPI:
    app = FastAPI(title="driftmon", version=__version__)
    app.state.capture_sessions = {}
    app.state.schedules = {}
    app.state.schedule_rngs = {}

    @app.exception_handler(ValueError)
    async def _value_error(request: Request, exc: ValueError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(FileNotFoundError)
    async def _not_found(request: Request, exc: FileNotFoundError) -> JSONResponse:
        return JSONResponse(status_code=404, content={"detail": str(exc)})

    @app.get("/health", response_model=schemas.HealthResponse)
    def health() -> schemas.HealthResponse:
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/baseline/suggest", response_model=schemas.SuggestBaselineResponse)
    def baseline_suggest(
        request: schemas.SuggestBaselineRequest,
    ) -> schemas.SuggestBaselineResponse:
        profiles = profile_csv(request.dataset, kll_k=request.kll_k, seed=request.seed)
        quality_constraints = None
        quality_metrics: list[str] = []
        if request.problem_type is not None:
            batch = _labeled_batch_from_csv(
                request.dataset,
                request.prediction_field,
                request.label_field,
                request.problem_type,
            )
            report = quality_report(
                batch,
                request.problem_type,
                bootstrap=BootstrapConfig(seed=request.seed),
            )
            quality_constraints = suggest_quality_constraints(report)
            for key, value in quality_constraints.items():
                if key != "version":
                    quality_metrics = sorted(value)
            # prediction/label columns feed the quality baseline, not the
            # feature schema: live capture inputs never carry them
            excluded = {request.prediction_field, request.label_field}
            profiles = [p for p in profiles if p.name not in excluded]
        result = suggest_baseline(
            profiles,
            epsilon=request.epsilon,
            alpha=request.alpha,
            quality_constraints=quality_constraints,
        )
        result.save(request.output)
        rows = profiles[0].row_count if profiles else 0
        return schemas.SuggestBaselineResponse(
            baseline=request.output,
            rows=rows,
            columns=len(profiles),
            constraint_count=len(result.constraints),
            quality_metrics=quality_metrics,
        )

    @app.post("/analyze", response_model=schemas.AnalyzeResponse)
    def analyze(request: schemas.AnalyzeRequest) -> schemas.AnalyzeResponse:
        if not Path(request.baseline).exists():
            raise HTTPException(status_code=404, detail=f"no baseline at {request.baseline}")
        config = ScheduleConfig(
            name="adhoc",
            baseline_path=request.baseline,
            capture_root=request.capture_root,
            output_root=request.output_root,
            labels_root=request.labels_root,
            problem_type=request.problem_type,
            seed=request.seed,
        )
        lines: list[str] = []
        record = run_window(
            config,
            parse_timestamp(request.start),
            window_end=parse_timestamp(request.end),
            metrics_sink=lines.append,
        )
        if record.status == "failed":
            raise HTTPException(status_code=400, detail=record.error or "analysis failed")
        violations = _read_violations(record)
        return schemas.AnalyzeResponse(
            job=_job_model(record),
            violations=violations,
            metrics_lines=lines,
        )

    @app.post("/capture/records", response_model=schemas.CaptureIngestResponse)
    def capture_records(
        request: schemas.CaptureIngestRequest,
    ) -> schemas.CaptureIngestResponse:
        session = _session(app, request)
        for record in request.records:
            session.submit(
                CaptureRecord(
                    event_id=record.event_id,
                    timestamp=parse_timestamp(record.timestamp),
                    input=record.input,
                    output=record.output,
                )
            )
        return schemas.CaptureIngestResponse(**session.counts)

    @app.post("/capture/flush", response_model=schemas.CaptureFlushResponse)
    def capture_flush(request: schemas.CaptureFlushRequest) -> schemas.CaptureFlushResponse:
        session = app.state.capture_sessions.get(str(request.root))
        if session is None:
            raise HTTPException(status_code=404, detail=f"no session for {request.root}")
        files = session.flush()
        return schemas.CaptureFlushResponse(
            files=[str(path) for path in files], **session.counts
        )

    @app.post("/join", response_model=schemas.JoinResponse)
    def join(request: schemas.JoinRequest) -> schemas.JoinResponse:
        result = join_ground_truth(
            request.capture_root,
            request.labels_root,
            request.output_root,
            start=parse_timestamp(request.start) if request.start else None,
            end=parse_timestamp(request.end) if request.end else None,
        )
        return schemas.JoinResponse(
            counts=result.counts, files=[str(path) for path in result.files]
        )

    @app.post("/schedules", response_model=schemas.ScheduleConfigModel)
    def create_schedule(model: schemas.ScheduleConfigModel) -> schemas.ScheduleConfigModel:
        config = _schedule_config(model)
        app.state.schedules[config.name] = config
        app.state.schedule_rngs[config.name] = random.Random(config.seed)
        return model

    @app.get("/schedules", response_model=list[schemas.ScheduleConfigModel])
    def list_schedules() -> list[schemas.ScheduleConfigModel]:
        return [
            schemas.ScheduleConfigModel(**_schedule_dict(config))
            for config in app.state.schedules.values()
        ]

    @app.post("/schedules/{name}/next-run", response_model=schemas.NextRunResponse)
    def schedule_next_run(name: str, request: schemas.NextRunRequest) -> schemas.NextRunResponse:
        config = _get_schedule(app, name)
        due = next_run(config, parse_timestamp(request.now), app.state.schedule_rngs[name])
        return schemas.NextRunResponse(next_run=format_timestamp(due))

    @app.post("/schedules/{name}/run", response_model=schemas.RunScheduleResponse)
    def schedule_run(name: str, request: schemas.RunScheduleRequest) -> schemas.RunScheduleResponse:
        config = _get_schedule(app, name)
        store = JobStore(Path(config.output_root) / "jobs.jsonl")
        lines: list[str] = []
        record = run_window(
            config,
            parse_timestamp(request.window_start),
            window_end=parse_timestamp(request.window_end) if request.window_end else None,
            store=store,
            metrics_sink=lines.append,
        )
        return schemas.RunScheduleResponse(job=_job_model(record), metrics_lines=lines)

    @app.get("/schedules/{name}/jobs", response_model=schemas.JobsResponse)
    def schedule_jobs(name: str) -> schemas.JobsResponse:
        config = _get_schedule(app, name)
        store = JobStore(Path(config.output_root) / "jobs.jsonl")
        return schemas.JobsResponse(
            jobs=[_job_model(record) for record in store.records() if record.schedule == name]
        )

    @app.post("/experiments/bias-case-study", response_model=schemas.BiasCaseStudyResponse)
    def bias_case_study_run(
        request: schemas.BiasCaseStudyRequest,
    ) -> schemas.BiasCaseStudyResponse:
        pool = bias.build_pool(
            request.pool_advantaged,
            request.pool_disadvantaged,
            request.positive_rate_advantaged,
            request.positive_rate_disadvantaged,
            seed=request.seed,
        )
        pool_dpl = bias.dpl(pool)
        ranges = request.ranges
        if ranges is None:
            # acceptable ranges scaled off the pool's own DPL, widest first
            magnitude = abs(pool_dpl)
            ranges = [
                ("no_bias", -1.1 * magnitude, 1.1 * magnitude),
                ("medium_bias", -0.55 * magnitude, 0.55 * magnitude),
                ("high_bias", 0.0, 0.0),
            ]
        cells = bias.bias_case_study(
            pool,
            ranges=[(str(a), float(b), float(c)) for a, b, c in ranges],
            sample_sizes=request.sample_sizes,
            repeats=request.repeats,
            seed=request.seed,
            n_boot=request.n_boot,
            resample_frac=request.resample_frac,
            sample_cap=request.sample_cap,
        )
        bias.write_case_study_csv(request.output, cells)
        return schemas.BiasCaseStudyResponse(
            csv_path=request.output,
            pool_dpl=pool_dpl,
            cells=[
                schemas.BiasCaseStudyCell(
                    config_label=cell.config_label,
                    range_low=cell.range_low,
                    range_high=cell.range_high,
                    sample_size=cell.sample_size,
                    repeats=cell.repeats,
                    alarms=cell.alarms,
                    alarm_fraction=cell.alarm_fraction,
                )
                for cell in cells
            ],
        )

    @app.post("/experiments/adaptive", response_model=schemas.AdaptiveResponse)
    def adaptive_run(request: schemas.AdaptiveRequest) -> schemas.AdaptiveResponse:
        results = adaptive.run_experiment(
            rounds=request.rounds,
            horizon=request.horizon,
            seed=request.seed,
            intervals=tuple(request.intervals),
            threshold_range=(request.threshold_low, request.threshold_high),
        )
        out_dir = Path(request.output_dir)
        triplets = out_dir / "triplets.csv"
        summary = out_dir / "summary.csv"
        adaptive.write_triplets_csv(triplets, results)
        adaptive.write_summary_csv(summary, results)
        return schemas.AdaptiveResponse(
            triplets_csv=str(triplets),
            summary_csv=str(summary),
            rounds=request.rounds,
            results=len(results),
        )

    @app.post("/attribution/check", response_model=schemas.AttributionCheckResponse)
    def attribution_check(
        request: schemas.AttributionCheckRequest,
    ) -> schemas.AttributionCheckResponse:
        result = attribution_drift_check(
            request.baseline_scores, request.observed_ranking, request.threshold
        )
        return schemas.AttributionCheckResponse(
            ndcg=result.ndcg, alert=result.alert, threshold=request.threshold
        )

    return app


def _session(app: FastAPI, request: schemas.CaptureIngestRequest) -> CaptureSession:
    key = str(request.root)
    session = app.state.capture_sessions.get(key)
    if session is None:
        session = CaptureSession(
            request.root,
            sampling_percentage=request.sampling_percentage,
            policy=FlushPolicy(
                max_bytes=request.max_bytes, max_age_seconds=request.max_age_seconds
            ),
            seed=request.seed,
        )
        app.state.capture_sessions[key] = session
    return session


def _get_schedule(app: FastAPI, name: str) -> ScheduleConfig:
    config = app.state.schedules.get(name)
    if config is None:
        raise HTTPException(status_code=404, detail=f"no schedule named {name!r}")
    return config


def _schedule_config(model: schemas.ScheduleConfigModel) -> ScheduleConfig:
    return ScheduleConfig(
        name=model.name,
        baseline_path=model.baseline,
        capture_root=model.capture_root,
        output_root=model.output_root,
        labels_root=model.labels_root,
        cadence=model.cadence,
        jitter_minutes=model.jitter_minutes,
        problem_type=model.problem_type,
        seed=model.seed,
    )


def _schedule_dict(config: ScheduleConfig) -> dict[str, Any]:
    doc = config.to_dict()
    return doc


def _job_model(record) -> schemas.JobRecordModel:
    return schemas.JobRecordModel(**record.to_dict())


def _read_violations(record) -> list[dict[str, Any]]:
    import json

    path = record.outputs.get("violations")
    if not path:
        return []
    return json.loads(Path(path).read_text())["violations"]


def _labeled_batch_from_csv(
    path: str, prediction_field: str, label_field: str, problem_type: str
) -> LabeledBatch:
    predictions: list[float] = []
    labels: list[float] = []
    with Path(path).open(newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise ParseError(f"{path}: empty file, expected a header row")
        for field in (prediction_field, label_field):
            if field not in reader.fieldnames:
                raise ParseError(f"{path}: no column named {field!r}")
        for index, row in enumerate(reader):
            try:
                predictions.append(float(row[prediction_field]))
                labels.append(float(row[label_field]))
            except (TypeError, ValueError):
                raise ParseError(
                    f"{path}: row {index}: bad {prediction_field}/{label_field} value"
                ) from None
    if problem_type == "binary":
        predictions = [round(p) for p in predictions]
        labels = [round(y) for y in labels]
    return LabeledBatch(predictions=predictions, labels=labels)
