"""Mergeable streaming summaries: moments, categorical counts, reservoir sample.

Every sketch follows the same contract: ``update`` absorbs one item,
``merge`` combines two sketch states into a new one, and queries answer
from state alone.  States are plain values; workers each own their state
and aggregation happens only through ``merge``, so there is no shared
mutation to coordinate.

Serialized states are JSON objects tagged with a ``type`` field so a
stored profile can be reloaded without knowing its layout in advance.
RNG state is never serialized, only the seed: a deserialized sketch
replays its decision stream from the seed, which preserves the
statistical guarantees but not bit-identity with an uninterrupted run.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Any, NamedTuple

__all__ = [
    "MomentsSketch",
    "MomentsSummary",
    "CategoricalSketch",
    "ReservoirSample",
    "sketch_from_dict",
]


class MomentsSummary(NamedTuple):
    count: int
    mean: float | None
    std: float | None


@dataclass
class MomentsSketch:
    """Count, sum, and sum of squares of one numeric stream."""

    tot: int = 0
    sum: float = 0.0
    sumsq: float = 0.0

    def update(self, value: float) -> None:
        value = float(value)
        if not math.isfinite(value):
            raise ValueError(f"non-finite value: {value!r}")
        self.tot += 1
        self.sum += value
        self.sumsq += value * value

    def merge(self, other: MomentsSketch) -> MomentsSketch:
        return MomentsSketch(
            tot=self.tot + other.tot,
            sum=self.sum + other.sum,
            sumsq=self.sumsq + other.sumsq,
        )

    def mean(self) -> float | None:
        if self.tot == 0:
            return None
        return self.sum / self.tot

    def std(self) -> float | None:
        """Population standard deviation; None when the stream is empty."""
        if self.tot == 0:
            return None
        mean = self.sum / self.tot
        # max() guards the tiny negative residue float cancellation can leave
        return math.sqrt(max(0.0, self.sumsq / self.tot - mean * mean))

    def finalize(self) -> MomentsSummary:
        return MomentsSummary(self.tot, self.mean(), self.std())

    def to_dict(self) -> dict[str, Any]:
        return {"type": "moments", "tot": self.tot, "sum": self.sum, "sumsq": self.sumsq}

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> MomentsSketch:
        if doc.get("type") != "moments":
            raise ValueError(f"not a moments sketch document: {doc.get('type')!r}")
        return cls(tot=int(doc["tot"]), sum=float(doc["sum"]), sumsq=float(doc["sumsq"]))


@dataclass
class CategoricalSketch:
    """Exact per-label counts of one string stream."""

    counts: dict[str, int] = field(default_factory=dict)
    total: int = 0

    def update(self, label: str) -> None:
        if not isinstance(label, str):
            raise ValueError(f"categorical label must be a string, got {type(label).__name__}")
        self.counts[label] = self.counts.get(label, 0) + 1
        self.total += 1

    def merge(self, other: CategoricalSketch) -> CategoricalSketch:
        merged = dict(self.counts)
        for label, count in other.counts.items():
            merged[label] = merged.get(label, 0) + count
        return CategoricalSketch(counts=merged, total=self.total + other.total)

    def frequencies(self) -> dict[str, float]:
        if self.total == 0:
            return {}
        return {label: count / self.total for label, count in self.counts.items()}

    def to_dict(self) -> dict[str, Any]:
        return {"type": "categorical", "counts": dict(self.counts), "total": self.total}

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> CategoricalSketch:
        if doc.get("type") != "categorical":
            raise ValueError(f"not a categorical sketch document: {doc.get('type')!r}")
        counts = {str(k): int(v) for k, v in doc["counts"].items()}
        return cls(counts=counts, total=int(doc["total"]))


@dataclass
class ReservoirSample:
    """Uniform fixed-capacity sample of one stream (algorithm R).

    Merge draws each output slot from the left input's items with
    probability ``left.seen / (left.seen + right.seen)``, without
    replacement within each side, falling back to the non-empty side
    when one pool runs out.  Each surviving stream item keeps inclusion
    probability ~``capacity / (seen_a + seen_b)``, so merged samples are
    distribution-equivalent to a single-stream sample.
    """

    capacity: int
    seed: int = 0
    items: list[float] = field(default_factory=list)
    seen: int = 0
    _rng: random.Random = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.capacity < 1:
            raise ValueError(f"capacity must be positive, got {self.capacity}")
        if len(self.items) > self.capacity:
            raise ValueError("more items than capacity")
        self._rng = random.Random(self.seed)

    def update(self, value: float) -> None:
        value = float(value)
        self.seen += 1
        if len(self.items) < self.capacity:
            self.items.append(value)
            return
        slot = self._rng.randrange(self.seen)
        if slot < self.capacity:
            self.items[slot] = value

    def merge(self, other: ReservoirSample) -> ReservoirSample:
        if self.capacity != other.capacity:
            raise ValueError("reservoirs with different capacities cannot be merged")
        out = ReservoirSample(self.capacity, seed=self.seed ^ other.seed)
        out.seen = self.seen + other.seen
        if out.seen == 0:
            return out
        # symmetric derivation keeps merge commutative in distribution
        rng = random.Random(((self.seed ^ other.seed) << 1) ^ out.seen)
        pool_a = list(self.items)
        pool_b = list(other.items)
        weight_a = float(self.seen)
        weight_b = float(other.seen)
        take = min(self.capacity, len(pool_a) + len(pool_b))
        picked: list[float] = []
        for _ in range(take):
            from_a = bool(pool_a) and (
                not pool_b or rng.random() * (weight_a + weight_b) < weight_a
            )
            pool = pool_a if from_a else pool_b
            picked.append(pool.pop(rng.randrange(len(pool))))
        out.items = picked
        return out

    def to_dict(self) -> dict[str, Any]:
        return {
            "type": "reservoir",
            "capacity": self.capacity,
            "seed": self.seed,
            "seen": self.seen,
            "items": list(self.items),
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> ReservoirSample:
        if doc.get("type") != "reservoir":
            raise ValueError(f"not a reservoir sketch document: {doc.get('type')!r}")
        out = cls(capacity=int(doc["capacity"]), seed=int(doc["seed"]))
        out.items = [float(v) for v in doc["items"]]
        out.seen = int(doc["seen"])
        if len(out.items) > out.capacity:
            raise ValueError("more items than capacity")
        return out


def sketch_from_dict(doc: dict[str, Any]):
    """Reconstruct any serialized sketch from its tagged JSON document."""
    kind = doc.get("type")
    if kind == "moments":
        return MomentsSketch.from_dict(doc)
    if kind == "categorical":
        return CategoricalSketch.from_dict(doc)
    if kind == "reservoir":
        return ReservoirSample.from_dict(doc)
    if kind == "kll":
        from .kll import KllSketch

        return KllSketch.from_dict(doc)
    raise ValueError(f"unknown sketch type: {kind!r}")
