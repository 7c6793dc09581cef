"""Shared fixtures: tiny capture/label trees under tmp_path."""

from __future__ import annotations

import json
from datetime import datetime, timezone
from pathlib import Path

import pytest

from driftmon.capture import partition_path


def utc(*args: int) -> datetime:
    return datetime(*args, tzinfo=timezone.utc)


def write_capture_tree(root: Path, events: list[dict]) -> None:
    """Lay out capture records as one file per hour partition."""
    by_partition: dict[str, list[str]] = {}
    for event in events:
        doc = {
            "event_id": event["event_id"],
            "timestamp": event["timestamp"],
            "input": event["input"] if isinstance(event["input"], str) else json.dumps(event["input"]),
            "output": str(event["output"]),
        }
        from driftmon.timeutil import parse_timestamp

        partition = partition_path(parse_timestamp(event["timestamp"]))
        by_partition.setdefault(partition, []).append(json.dumps(doc))
    for partition, lines in by_partition.items():
        directory = root / partition
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "0000000000000-000001.jsonl").write_text(
            "".join(line + "\n" for line in lines)
        )


def write_label_tree(root: Path, labels: list[dict]) -> None:
    by_partition: dict[str, list[str]] = {}
    for label in labels:
        from driftmon.timeutil import parse_timestamp

        partition = partition_path(parse_timestamp(label["timestamp"]))
        doc = {"event_id": label["event_id"], "label": label["label"]}
        by_partition.setdefault(partition, []).append(json.dumps(doc))
    for partition, lines in by_partition.items():
        directory = root / partition
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "0000000000000-000001.jsonl").write_text(
            "".join(line + "\n" for line in lines)
        )


@pytest.fixture()
def appendix_batch():
    from driftmon.quality import LabeledBatch

    return LabeledBatch(
        predictions=[1.0, 0.0, 1.0, 1.0],
        labels=[0.0, 1.0, 1.0, 1.0],
        start_time=utc(2020, 10, 29, 22),
        end_time=utc(2020, 10, 30, 0),
    )
