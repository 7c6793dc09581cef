"""Command-line client for the monitoring service.

Every subcommand drives the HTTP API: with ``--server`` it talks to a
running instance, otherwise it spins up the application in-process and
calls it through a test transport, so one-shot commands need no daemon.
Results go to stdout as JSON (metrics lines plain); diagnostics and the
resolved request configuration go to stderr.

Exit codes: 0 clean, 2 when the run found violations or raised an
alert, 1 on errors, 64 on usage mistakes.
"""

from __future__ import annotations

import json
import sys
import time
from datetime import timedelta
from pathlib import Path
from typing import Any

import click

from .timeutil import format_timestamp, parse_timestamp, utc_now

EXIT_CLEAN = 0
EXIT_ERROR = 1
EXIT_VIOLATIONS = 2
EXIT_USAGE = 64


def _client(server: str | None):
    if server:
        import httpx

        return httpx.Client(base_url=server, timeout=600.0)
    # in-process mode: run the app behind a synchronous test transport
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient

    from .service import create_app

    return TestClient(create_app())


def _call(ctx: click.Context, method: str, path: str, payload: dict | None = None) -> Any:
    client = ctx.obj["client"]
    if payload is not None:
        click.echo(f"request {path}: {json.dumps(payload, sort_keys=True)}", err=True)
    response = client.request(method, path, json=payload)
    if response.status_code >= 400:
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        click.echo(f"error ({response.status_code}): {detail}", err=True)
        sys.exit(EXIT_ERROR)
    return response.json()


def _emit(document: Any) -> None:
    click.echo(json.dumps(document, indent=2))


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option(
    "--server",
    default=None,
    envvar="DRIFTMON_SERVER",
    help="Base URL of a running service; default runs the service in-process.",
)
@click.pass_context
def cli(ctx: click.Context, server: str | None) -> None:
    """Model monitoring: baselines, capture, drift and quality analysis."""
    ctx.ensure_object(dict)
    ctx.obj["client"] = _client(server)


@cli.command("suggest-baseline")
@click.option("--dataset", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--output", required=True, type=click.Path(dir_okay=False))
@click.option("--epsilon", default=0.1, show_default=True)
@click.option("--alpha", default=0.05, show_default=True)
@click.option("--kll-k", default=200, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--problem-type", type=click.Choice(["regression", "binary"]), default=None)
@click.option("--prediction-field", default="prediction", show_default=True)
@click.option("--label-field", default="label", show_default=True)
@click.pass_context
def suggest_baseline_cmd(ctx: click.Context, **options: Any) -> None:
    """Profile a CSV dataset and write a baseline with suggested constraints."""
    result = _call(ctx, "POST", "/baseline/suggest", options)
    _emit(result)


def _payload_text(value: Any) -> str:
    return value if isinstance(value, str) else json.dumps(value)


@cli.command("capture-ingest")
@click.option("--capture-root", required=True, type=click.Path(file_okay=False))
@click.option(
    "--input",
    "input_path",
    required=True,
    type=click.Path(exists=True, dir_okay=False, allow_dash=True),
    help="JSON-lines file of {event_id, timestamp, input, output} records; - for stdin.",
)
@click.option("--sampling-percentage", default=100.0, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--max-bytes", default=1024 * 1024, show_default=True)
@click.option("--max-age-seconds", default=60.0, show_default=True)
@click.pass_context
def capture_ingest_cmd(
    ctx: click.Context,
    capture_root: str,
    input_path: str,
    sampling_percentage: float,
    seed: int,
    max_bytes: int,
    max_age_seconds: float,
) -> None:
    """Sample and write inference records into hourly capture partitions."""
    handle = sys.stdin if input_path == "-" else open(input_path)
    records = []
    try:
        for number, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
                records.append(
                    {
                        "event_id": str(doc["event_id"]),
                        "timestamp": doc["timestamp"],
                        "input": _payload_text(doc["input"]),
                        "output": _payload_text(doc["output"]),
                    }
                )
            except (ValueError, KeyError) as exc:
                click.echo(f"error: {input_path}:{number}: bad record: {exc}", err=True)
                sys.exit(EXIT_ERROR)
    finally:
        if handle is not sys.stdin:
            handle.close()
    base = {
        "root": capture_root,
        "sampling_percentage": sampling_percentage,
        "seed": seed,
        "max_bytes": max_bytes,
        "max_age_seconds": max_age_seconds,
    }
    for start in range(0, len(records), 500):
        _call(ctx, "POST", "/capture/records", {**base, "records": records[start : start + 500]})
    result = _call(ctx, "POST", "/capture/flush", {"root": capture_root})
    _emit(result)


@cli.command("join")
@click.option("--capture-root", required=True, type=click.Path(file_okay=False))
@click.option("--labels-root", required=True, type=click.Path(file_okay=False))
@click.option("--output-root", required=True, type=click.Path(file_okay=False))
@click.option("--start", default=None, help="Window start (RFC 3339); default all data.")
@click.option("--end", default=None, help="Window end (RFC 3339, exclusive).")
@click.pass_context
def join_cmd(ctx: click.Context, **options: Any) -> None:
    """Join captured events with ground-truth labels by event id."""
    payload = {
        "capture_root": options["capture_root"],
        "labels_root": options["labels_root"],
        "output_root": options["output_root"],
        "start": options["start"],
        "end": options["end"],
    }
    result = _call(ctx, "POST", "/join", payload)
    _emit(result)


@cli.command("analyze")
@click.option("--baseline", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--capture-root", required=True, type=click.Path(file_okay=False))
@click.option("--output-root", required=True, type=click.Path(file_okay=False))
@click.option("--start", required=True, help="Window start (RFC 3339).")
@click.option("--end", required=True, help="Window end (RFC 3339, exclusive).")
@click.option("--labels-root", default=None, type=click.Path(file_okay=False))
@click.option("--problem-type", type=click.Choice(["regression", "binary"]), default=None)
@click.option("--seed", default=0, show_default=True)
@click.pass_context
def analyze_cmd(ctx: click.Context, **options: Any) -> None:
    """Validate one window against a baseline; report quality when labels exist."""
    result = _call(ctx, "POST", "/analyze", options)
    for line in result["metrics_lines"]:
        click.echo(line)
    _emit(result)
    if result["job"]["violation_count"] > 0:
        sys.exit(EXIT_VIOLATIONS)


@cli.command("schedule-run")
@click.option("--config", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option(
    "--window-start",
    default=None,
    help="Run this window immediately instead of waiting for the next slot.",
)
@click.option("--window-end", default=None)
@click.option("--iterations", default=1, show_default=True)
@click.pass_context
def schedule_run_cmd(
    ctx: click.Context,
    config: str,
    window_start: str | None,
    window_end: str | None,
    iterations: int,
) -> None:
    """Register a schedule and run it (immediately, or on its jittered slots)."""
    doc = json.loads(Path(config).read_text())
    model = {
        "name": doc["name"],
        "baseline": doc["baseline"],
        "capture_root": doc["capture_root"],
        "output_root": doc["output_root"],
        "labels_root": doc.get("labels_root"),
        "cadence": doc.get("cadence", "hourly"),
        "jitter_minutes": doc.get("jitter_minutes", 20.0),
        "problem_type": doc.get("problem_type"),
        "seed": doc.get("seed", 0),
    }
    _call(ctx, "POST", "/schedules", model)
    name = model["name"]
    exit_code = EXIT_CLEAN
    if window_start is not None:
        runs = [{"window_start": window_start, "window_end": window_end}]
    else:
        runs = []
        for _ in range(iterations):
            now = format_timestamp(utc_now())
            due_doc = _call(ctx, "POST", f"/schedules/{name}/next-run", {"now": now})
            due = parse_timestamp(due_doc["next_run"])
            wait = (due - parse_timestamp(now)).total_seconds()
            if wait > 0:
                click.echo(f"sleeping {wait:.0f}s until {due_doc['next_run']}", err=True)
                time.sleep(wait)
            start = due.replace(minute=0, second=0, microsecond=0) - timedelta(hours=1)
            runs.append({"window_start": format_timestamp(start), "window_end": None})
    for request in runs:
        result = _call(ctx, "POST", f"/schedules/{name}/run", request)
        for line in result["metrics_lines"]:
            click.echo(line)
        _emit(result["job"])
        if result["job"]["status"] == "failed":
            exit_code = max(exit_code, EXIT_ERROR)
        elif result["job"]["violation_count"] > 0:
            exit_code = max(exit_code, EXIT_VIOLATIONS)
    if exit_code:
        sys.exit(exit_code)


@cli.command("bias-case-study")
@click.option("--output", required=True, type=click.Path(dir_okay=False))
@click.option("--pool-advantaged", default=10_000, show_default=True)
@click.option("--pool-disadvantaged", default=10_000, show_default=True)
@click.option("--positive-rate-advantaged", default=0.3005, show_default=True)
@click.option("--positive-rate-disadvantaged", default=0.4995, show_default=True)
@click.option(
    "--range",
    "ranges",
    multiple=True,
    help="label:low:high acceptable range; repeatable. Default ranges scale off the pool DPL.",
)
@click.option("--sample-sizes", default="200,2000", show_default=True)
@click.option("--repeats", default=100, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.pass_context
def bias_case_study_cmd(
    ctx: click.Context,
    output: str,
    pool_advantaged: int,
    pool_disadvantaged: int,
    positive_rate_advantaged: float,
    positive_rate_disadvantaged: float,
    ranges: tuple[str, ...],
    sample_sizes: str,
    repeats: int,
    seed: int,
) -> None:
    """Sweep bias-alarm rates over acceptable ranges and sample sizes."""
    parsed_ranges = None
    if ranges:
        parsed_ranges = []
        for spec in ranges:
            parts = spec.split(":")
            if len(parts) != 3:
                raise click.UsageError(f"--range must be label:low:high, got {spec!r}")
            parsed_ranges.append((parts[0], float(parts[1]), float(parts[2])))
    try:
        sizes = [int(part) for part in sample_sizes.split(",") if part.strip()]
    except ValueError:
        raise click.UsageError(f"--sample-sizes must be comma-separated ints, got {sample_sizes!r}")
    payload = {
        "output": output,
        "pool_advantaged": pool_advantaged,
        "pool_disadvantaged": pool_disadvantaged,
        "positive_rate_advantaged": positive_rate_advantaged,
        "positive_rate_disadvantaged": positive_rate_disadvantaged,
        "ranges": parsed_ranges,
        "sample_sizes": sizes,
        "repeats": repeats,
        "seed": seed,
    }
    result = _call(ctx, "POST", "/experiments/bias-case-study", payload)
    _emit(result)


@cli.command("simulate-adaptive")
@click.option("--output-dir", required=True, type=click.Path(file_okay=False))
@click.option("--rounds", default=400, show_default=True)
@click.option("--horizon", default=10_000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.pass_context
def simulate_adaptive_cmd(ctx: click.Context, **options: Any) -> None:
    """Compare adaptive and calendar retraining over simulated drift."""
    result = _call(ctx, "POST", "/experiments/adaptive", options)
    _emit(result)


@cli.command("ndcg-check")
@click.option(
    "--baseline-scores",
    required=True,
    type=click.Path(exists=True, dir_okay=False),
    help='JSON file: {"feature": score, ...} with non-negative scores.',
)
@click.option(
    "--observation",
    required=True,
    type=click.Path(exists=True, dir_okay=False),
    help='JSON file: ["feature", ...] or {"ranking": [...]} or {"scores": {...}}.',
)
@click.option("--threshold", default=0.9, show_default=True)
@click.pass_context
def ndcg_check_cmd(
    ctx: click.Context, baseline_scores: str, observation: str, threshold: float
) -> None:
    """Compare a live attribution ranking against the baseline (alert below threshold)."""
    scores = json.loads(Path(baseline_scores).read_text())
    observed = json.loads(Path(observation).read_text())
    if isinstance(observed, dict):
        if "ranking" in observed:
            ranking = observed["ranking"]
        elif "scores" in observed:
            observed_scores = observed["scores"]
            ranking = sorted(observed_scores, key=lambda f: (-observed_scores[f], f))
        else:
            click.echo("error: observation file needs 'ranking' or 'scores'", err=True)
            sys.exit(EXIT_ERROR)
    else:
        ranking = observed
    payload = {
        "baseline_scores": scores,
        "observed_ranking": ranking,
        "threshold": threshold,
    }
    result = _call(ctx, "POST", "/attribution/check", payload)
    _emit(result)
    if result["alert"]:
        sys.exit(EXIT_VIOLATIONS)


@cli.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def serve_cmd(host: str, port: int) -> None:
    """Run the monitoring service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=host, port=port)


def main(argv: list[str] | None = None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.UsageError as exc:
        exc.show()
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show()
        return EXIT_ERROR
    except click.exceptions.Abort:
        return EXIT_ERROR
    except SystemExit as exc:
        return int(exc.code or 0)
    return EXIT_CLEAN


if __name__ == "__main__":
    sys.exit(main())
