"""UTC timestamp parsing and formatting.

Every timestamp in stored documents is RFC 3339 UTC with a trailing
``Z``.  Python 3.10's ``fromisoformat`` does not accept ``Z``, so
parsing goes through a small shim.  Naive datetimes are taken to be
UTC; aware ones are converted.
"""

from __future__ import annotations

from datetime import datetime, timezone


def as_utc(ts: datetime) -> datetime:
    """Return ``ts`` as a timezone-aware UTC datetime."""
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def parse_timestamp(text: str) -> datetime:
    """Parse an RFC 3339 timestamp; a bare ``Z`` suffix is accepted."""
    raw = text.strip()
    if raw.endswith(("Z", "z")):
        raw = raw[:-1] + "+00:00"
    try:
        parsed = datetime.fromisoformat(raw)
    except ValueError:
        raise ValueError(f"invalid timestamp: {text!r}") from None
    return as_utc(parsed)


def format_timestamp(ts: datetime) -> str:
    """Format to whole seconds, or milliseconds when sub-second precision exists."""
    ts = as_utc(ts)
    if ts.microsecond:
        return ts.strftime("%Y-%m-%dT%H:%M:%S.") + f"{ts.microsecond // 1000:03d}Z"
    return ts.strftime("%Y-%m-%dT%H:%M:%SZ")


def format_timestamp_millis(ts: datetime) -> str:
    """Format with milliseconds always present (report evaluation times)."""
    ts = as_utc(ts)
    return ts.strftime("%Y-%m-%dT%H:%M:%S.") + f"{ts.microsecond // 1000:03d}Z"


def utc_now() -> datetime:
    return datetime.now(timezone.utc)
