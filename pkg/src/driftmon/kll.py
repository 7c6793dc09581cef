"""KLL streaming quantile sketch.

The sketch keeps a hierarchy of compactor buffers.  An item in the
buffer at level ``h`` stands for ``2**h`` items of the original stream.
New items enter level 0 with weight 1.  When the sketch exceeds its
size budget, the lowest over-full buffer is compacted: the buffer is
sorted, and either the even- or odd-indexed half (a fair coin decides
which) is promoted to the next level, where each survivor's weight
doubles.  The other half is discarded.  Because survivors are chosen
from a sorted buffer, every discarded item is adjacent to a promoted
one, which bounds the rank error each compaction can introduce.

Buffer capacities shrink geometrically from the top level down by a
factor ``c = 2/3``: the top buffer holds about ``k`` items and carries
the highest weights, the bottom buffers are small and cheap to compact.
Total space is O(k) and the normalized rank error is O(1/k) with high
probability; ``k = 200`` comfortably keeps it under 0.01.

Exact stream minimum and maximum are tracked separately so the extreme
quantiles never suffer compaction error.

Merging concatenates the two hierarchies level by level and compacts
until the size budget holds again.  Merged queries obey the same error
bound as single-stream queries.  The coin sequence derives from the
sketch seed; the seed of a merged sketch is the XOR of the input seeds,
so merge stays commutative.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Any, Iterator

from .errors import InsufficientDataError

__all__ = ["KllSketch", "Histogram", "DEFAULT_K"]

DEFAULT_K = 200

# capacity decay per level walking down from the top buffer
_C = 2.0 / 3.0


@dataclass
class Histogram:
    """Equal-width histogram estimated from a sketch."""

    edges: list[float]       # len(edges) == len(masses) + 1
    masses: list[float]      # normalized, sums to 1 for a non-empty sketch

    def to_dict(self) -> dict[str, Any]:
        return {"edges": list(self.edges), "masses": list(self.masses)}


class KllSketch:
    """Mergeable quantile sketch with O(k) space."""

    __slots__ = ("k", "seed", "_levels", "_size", "_n", "_min", "_max", "_rng")

    def __init__(self, k: int = DEFAULT_K, seed: int = 0) -> None:
        if k < 8:
            raise ValueError(f"k must be at least 8, got {k}")
        self.k = k
        self.seed = seed
        self._levels: list[list[float]] = [[]]
        self._size = 0
        self._n = 0
        self._min = math.inf
        self._max = -math.inf
        self._rng = random.Random(seed)

    # -- sizing ---------------------------------------------------------

    def _capacity(self, level: int) -> int:
        depth = len(self._levels) - level - 1
        return max(2, int(math.ceil(_C**depth * self.k)) + 1)

    def _max_size(self) -> int:
        return sum(self._capacity(h) for h in range(len(self._levels)))

    def _grow(self) -> None:
        self._levels.append([])

    # -- updates --------------------------------------------------------

    def update(self, value: float) -> None:
        value = float(value)
        if not math.isfinite(value):
            raise ValueError(f"non-finite value: {value!r}")
        self._levels[0].append(value)
        self._size += 1
        self._n += 1
        if value < self._min:
            self._min = value
        if value > self._max:
            self._max = value
        if self._size >= self._max_size():
            self._compress()

    def _compress(self) -> None:
        """Compact the lowest over-full level; grow the hierarchy if none is."""
        for level in range(len(self._levels)):
            buf = self._levels[level]
            if len(buf) < self._capacity(level):
                continue
            if level + 1 >= len(self._levels):
                self._grow()
            buf.sort()
            # an odd buffer keeps its largest item in place so both
            # halves of the compaction see an even count
            odd = len(buf) & 1
            leftover = buf[-1] if odd else None
            body = buf[:-1] if odd else buf
            offset = self._rng.getrandbits(1)
            promoted = body[offset::2]
            self._levels[level + 1].extend(promoted)
            self._levels[level] = [leftover] if odd else []
            self._size -= len(body) - len(promoted)
            return
        self._grow()

    # -- merge ----------------------------------------------------------

    def merge(self, other: KllSketch) -> KllSketch:
        if self.k != other.k:
            raise ValueError("sketches with different k cannot be merged")
        out = KllSketch(self.k, seed=self.seed ^ other.seed)
        height = max(len(self._levels), len(other._levels))
        out._levels = [[] for _ in range(height)]
        for source in (self, other):
            for level, buf in enumerate(source._levels):
                out._levels[level].extend(buf)
        out._n = self._n + other._n
        out._size = sum(len(buf) for buf in out._levels)
        out._min = min(self._min, other._min)
        out._max = max(self._max, other._max)
        while out._size >= out._max_size():
            out._compress()
        return out

    # -- queries --------------------------------------------------------

    @property
    def n(self) -> int:
        return self._n

    @property
    def min(self) -> float:
        if self._n == 0:
            raise InsufficientDataError("empty sketch")
        return self._min

    @property
    def max(self) -> float:
        if self._n == 0:
            raise InsufficientDataError("empty sketch")
        return self._max

    def items(self) -> Iterator[tuple[float, int]]:
        """Yield (value, weight) pairs for every stored item."""
        for level, buf in enumerate(self._levels):
            weight = 1 << level
            for value in buf:
                yield value, weight

    def rank(self, value: float) -> float:
        """Estimated normalized rank: fraction of the stream <= value."""
        if self._n == 0:
            raise InsufficientDataError("empty sketch")
        below = 0
        for item, weight in self.items():
            if item <= value:
                below += weight
        return below / self._n

    def quantile(self, q: float) -> float:
        """Estimated value at normalized rank ``q`` in [0, 1]."""
        if not 0.0 <= q <= 1.0:
            raise ValueError(f"quantile must be in [0, 1], got {q}")
        if self._n == 0:
            raise InsufficientDataError("empty sketch")
        if q == 0.0:
            return self._min
        if q == 1.0:
            return self._max
        pairs = sorted(self.items())
        target = q * self._n
        cumulative = 0
        for value, weight in pairs:
            cumulative += weight
            if cumulative >= target:
                return value
        return pairs[-1][0]

    def histogram(self, bins: int = 10) -> Histogram:
        if bins < 1:
            raise ValueError(f"bins must be positive, got {bins}")
        if self._n == 0:
            raise InsufficientDataError("empty sketch")
        low, high = self._min, self._max
        if low == high:
            return Histogram(edges=[low, high], masses=[1.0])
        width = (high - low) / bins
        edges = [low + i * width for i in range(bins)] + [high]
        weights = [0 for _ in range(bins)]
        for value, weight in self.items():
            index = min(int((value - low) / width), bins - 1)
            weights[index] += weight
        total = sum(weights)
        return Histogram(edges=edges, masses=[w / total for w in weights])

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        return {
            "type": "kll",
            "k": self.k,
            "seed": self.seed,
            "n": self._n,
            "min": self._min if self._n else None,
            "max": self._max if self._n else None,
            "levels": [list(buf) for buf in self._levels],
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> KllSketch:
        if doc.get("type") != "kll":
            raise ValueError(f"not a kll sketch document: {doc.get('type')!r}")
        out = cls(k=int(doc["k"]), seed=int(doc["seed"]))
        out._levels = [[float(v) for v in buf] for buf in doc["levels"]]
        if not out._levels:
            out._levels = [[]]
        out._size = sum(len(buf) for buf in out._levels)
        out._n = int(doc["n"])
        out._min = math.inf if doc["min"] is None else float(doc["min"])
        out._max = -math.inf if doc["max"] is None else float(doc["max"])
        return out

    def __repr__(self) -> str:
        return f"KllSketch(k={self.k}, n={self._n}, levels={len(self._levels)})"
