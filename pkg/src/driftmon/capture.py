"""Inference capture: sampling, buffered JSON-lines logging, ground-truth join.

Records land in hourly UTC partitions ``YYYY/MM/DD/HH`` as JSON lines
``{"event_id", "timestamp", "input", "output"}`` with payloads stored
verbatim as strings.  Appends only buffer; actual file writes happen on
flush (size or age triggered), so the request path never blocks on
disk.  Ground-truth labels arrive later in the same layout and join to
captures by event id.
"""

from __future__ import annotations

import json
import queue
import random
import re
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Any, Callable, Iterator

from .errors import ParseError
from .timeutil import as_utc, format_timestamp, parse_timestamp

__all__ = [
    "CaptureRecord",
    "capture_decision",
    "partition_path",
    "partition_start",
    "FlushPolicy",
    "FlushBatch",
    "CaptureBuffer",
    "PartitionWriter",
    "CaptureSession",
    "iter_partitions",
    "read_json_lines",
    "join_ground_truth",
    "JoinResult",
]

_PARTITION_RE = re.compile(r"(\d{4})/(\d{2})/(\d{2})/(\d{2})$")


@dataclass(frozen=True)
class CaptureRecord:
    """One captured inference event; payloads are opaque strings."""

    event_id: str
    timestamp: datetime
    input: str
    output: str

    def to_line(self) -> str:
        if not isinstance(self.event_id, str) or not self.event_id:
            raise ValueError("event_id must be a non-empty string")
        if not isinstance(self.input, str) or not isinstance(self.output, str):
            raise ValueError("payloads must be strings")
        return json.dumps(
            {
                "event_id": self.event_id,
                "timestamp": format_timestamp(self.timestamp),
                "input": self.input,
                "output": self.output,
            }
        )

    @classmethod
    def from_line(cls, line: str, where: str = "<line>") -> CaptureRecord:
        try:
            doc = json.loads(line)
            return cls(
                event_id=doc["event_id"],
                timestamp=parse_timestamp(doc["timestamp"]),
                input=doc["input"],
                output=doc["output"],
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise ParseError(f"{where}: bad capture record: {exc}") from None


def capture_decision(sampling_percentage: float, rng: random.Random) -> bool:
    """Decide whether to capture one event at the given sampling rate."""
    if not 0.0 <= sampling_percentage <= 100.0:
        raise ValueError(
            f"sampling percentage must be in [0, 100], got {sampling_percentage}"
        )
    return rng.random() * 100.0 < sampling_percentage


def partition_path(ts: datetime) -> str:
    """Hourly UTC partition for a timestamp: YYYY/MM/DD/HH."""
    return as_utc(ts).strftime("%Y/%m/%d/%H")


def partition_start(partition: str) -> datetime:
    match = _PARTITION_RE.search(partition)
    if match is None:
        raise ValueError(f"not a partition path: {partition!r}")
    year, month, day, hour = (int(part) for part in match.groups())
    return datetime(year, month, day, hour, tzinfo=timezone.utc)


@dataclass(frozen=True)
class FlushPolicy:
    max_bytes: int = 1024 * 1024
    max_age_seconds: float = 60.0

    def __post_init__(self) -> None:
        if self.max_bytes < 1:
            raise ValueError(f"max_bytes must be positive, got {self.max_bytes}")
        if self.max_age_seconds <= 0:
            raise ValueError(f"max_age_seconds must be positive, got {self.max_age_seconds}")


@dataclass
class FlushBatch:
    partition: str
    lines: list[str]


@dataclass
class CaptureBuffer:
    """Size- and age-bounded line buffer, split by partition on drain.

    ``append`` and ``poll`` return the batches to write (possibly
    several when buffered records straddle an hour boundary); they never
    perform I/O themselves.
    """

    policy: FlushPolicy = field(default_factory=FlushPolicy)
    _entries: list[tuple[str, str]] = field(default_factory=list)
    _bytes: int = 0
    _oldest: float | None = None

    def append(self, partition: str, line: str, now: float) -> list[FlushBatch]:
        self._entries.append((partition, line))
        self._bytes += len(line.encode("utf-8")) + 1  # newline included
        if self._oldest is None:
            self._oldest = now
        if self._bytes >= self.policy.max_bytes:
            return self.drain()
        return self.poll(now)

    def poll(self, now: float) -> list[FlushBatch]:
        """Age-triggered drain; call periodically even without traffic."""
        if self._oldest is not None and now - self._oldest >= self.policy.max_age_seconds:
            return self.drain()
        return []

    def drain(self) -> list[FlushBatch]:
        if not self._entries:
            return []
        grouped: dict[str, list[str]] = {}
        for partition, line in self._entries:
            grouped.setdefault(partition, []).append(line)
        self._entries = []
        self._bytes = 0
        self._oldest = None
        return [FlushBatch(partition, lines) for partition, lines in grouped.items()]

    def __len__(self) -> int:
        return len(self._entries)


class PartitionWriter:
    """Writes flush batches as ``<epoch-millis>-<sequence>.jsonl`` files."""

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        self._sequence = 0

    def write(self, batch: FlushBatch, now: float) -> Path:
        directory = self.root / batch.partition
        directory.mkdir(parents=True, exist_ok=True)
        self._sequence += 1
        name = f"{int(now * 1000):013d}-{self._sequence:06d}.jsonl"
        path = directory / name
        path.write_text("".join(line + "\n" for line in batch.lines))
        return path


class CaptureSession:
    """Sampling + buffering + partitioned writes for one capture root.

    ``submit`` is the hot path: it samples, serializes, and buffers, and
    never touches the filesystem.  Drained batches go to a background
    writer thread when ``background=True``, otherwise they queue up for
    the next explicit ``flush``.  A ``clock`` injection point keeps
    tests deterministic.
    """

    def __init__(
        self,
        root: str | Path,
        sampling_percentage: float = 100.0,
        policy: FlushPolicy | None = None,
        seed: int = 0,
        background: bool = False,
        clock: Callable[[], float] | None = None,
    ) -> None:
        if not 0.0 <= sampling_percentage <= 100.0:
            raise ValueError(
                f"sampling percentage must be in [0, 100], got {sampling_percentage}"
            )
        self.sampling_percentage = sampling_percentage
        self._rng = random.Random(seed)
        self._buffer = CaptureBuffer(policy or FlushPolicy())
        self._writer = PartitionWriter(root)
        self._clock = clock or time.time
        self.counts = {"received": 0, "captured": 0, "skipped": 0, "rejected": 0}
        self.written: list[Path] = []
        self._pending: queue.SimpleQueue[FlushBatch | None] = queue.SimpleQueue()
        self._lock = threading.Lock()
        self._worker: threading.Thread | None = None
        if background:
            self._worker = threading.Thread(target=self._drain_forever, daemon=True)
            self._worker.start()

    def submit(self, record: CaptureRecord, now: float | None = None) -> str:
        """Sample and buffer one record; returns captured/skipped/rejected."""
        now = self._clock() if now is None else now
        with self._lock:
            self.counts["received"] += 1
            if not capture_decision(self.sampling_percentage, self._rng):
                self.counts["skipped"] += 1
                return "skipped"
            try:
                line = record.to_line()
            except ValueError:
                self.counts["rejected"] += 1
                return "rejected"
            self.counts["captured"] += 1
            batches = self._buffer.append(partition_path(record.timestamp), line, now)
        for batch in batches:
            self._pending.put(batch)
        return "captured"

    def poll(self, now: float | None = None) -> None:
        """Check the age trigger; part of the daemon loop, not the hot path."""
        now = self._clock() if now is None else now
        with self._lock:
            batches = self._buffer.poll(now)
        for batch in batches:
            self._pending.put(batch)

    def flush(self, now: float | None = None) -> list[Path]:
        """Drain everything to disk and return all paths written so far."""
        now = self._clock() if now is None else now
        with self._lock:
            batches = self._buffer.drain()
        for batch in batches:
            self._pending.put(batch)
        if self._worker is None:
            self._write_pending(now)
        else:
            while not self._pending.empty():
                time.sleep(0.005)
        return list(self.written)

    def close(self) -> list[Path]:
        paths = self.flush()
        if self._worker is not None:
            self._pending.put(None)
            self._worker.join(timeout=5.0)
            self._worker = None
        return paths

    def _write_pending(self, now: float) -> None:
        while True:
            try:
                batch = self._pending.get_nowait()
            except queue.Empty:
                return
            if batch is not None:
                self.written.append(self._writer.write(batch, now))

    def _drain_forever(self) -> None:
        while True:
            batch = self._pending.get()
            if batch is None:
                return
            self.written.append(self._writer.write(batch, self._clock()))


def iter_partitions(
    root: str | Path,
    start: datetime | None = None,
    end: datetime | None = None,
) -> Iterator[tuple[str, list[Path]]]:
    """Yield (partition, sorted files) for hour partitions in [start, end).

    File name order within a partition is chronological because names
    start with a fixed-width epoch-millisecond stamp.
    """
    root = Path(root)
    if not root.exists():
        return
    found: list[tuple[datetime, str, list[Path]]] = []
    for directory in root.glob("[0-9]" * 4 + "/[0-9][0-9]/[0-9][0-9]/[0-9][0-9]"):
        if not directory.is_dir():
            continue
        partition = "/".join(directory.parts[-4:])
        try:
            stamp = partition_start(partition)
        except ValueError:
            continue
        if start is not None and stamp < start:
            continue
        if end is not None and stamp >= end:
            continue
        files = sorted(path for path in directory.iterdir() if path.suffix == ".jsonl")
        found.append((stamp, partition, files))
    for _, partition, files in sorted(found):
        yield partition, files


def read_json_lines(path: Path) -> Iterator[dict[str, Any]]:
    with path.open() as handle:
        for number, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{number}: bad JSON line: {exc}") from None
            if not isinstance(doc, dict):
                raise ParseError(f"{path}:{number}: expected a JSON object")
            yield doc


@dataclass
class JoinResult:
    counts: dict[str, int]
    files: list[Path]


def join_ground_truth(
    capture_root: str | Path,
    labels_root: str | Path,
    output_root: str | Path,
    start: datetime | None = None,
    end: datetime | None = None,
) -> JoinResult:
    """Inner-join captures with label records on event_id.

    Label lines are ``{"event_id", "label"}`` in the same partition
    layout.  A duplicated event_id keeps the last-written label (file
    order, then line order).  Output lands as
    ``<output_root>/YYYY/MM/DD/HH/joined.jsonl`` mirroring the capture
    partition; the fixed name makes re-runs idempotent.
    """
    labels: dict[str, Any] = {}
    label_records = 0
    for _, files in iter_partitions(labels_root, start, end):
        for path in files:
            for doc in read_json_lines(path):
                if "event_id" not in doc or "label" not in doc:
                    raise ParseError(f"{path}: label record needs event_id and label")
                labels[str(doc["event_id"])] = doc["label"]
                label_records += 1
    captured = 0
    joined = 0
    matched_ids: set[str] = set()
    out_root = Path(output_root)
    files_written: list[Path] = []
    for partition, files in iter_partitions(capture_root, start, end):
        lines: list[str] = []
        for path in files:
            for doc in read_json_lines(path):
                record = CaptureRecord(
                    event_id=str(doc["event_id"]),
                    timestamp=parse_timestamp(doc["timestamp"]),
                    input=doc["input"],
                    output=doc["output"],
                )
                captured += 1
                if record.event_id in labels:
                    joined += 1
                    matched_ids.add(record.event_id)
                    merged = json.loads(record.to_line())
                    merged["label"] = labels[record.event_id]
                    lines.append(json.dumps(merged))
        if lines:
            directory = out_root / partition
            directory.mkdir(parents=True, exist_ok=True)
            out_path = directory / "joined.jsonl"
            out_path.write_text("".join(line + "\n" for line in lines))
            files_written.append(out_path)
    counts = {
        "captured": captured,
        "labeled": label_records,
        "joined": joined,
        "unlabeled": captured - joined,
        "orphan_labels": len(set(labels) - matched_ids),
    }
    return JoinResult(counts=counts, files=files_written)
