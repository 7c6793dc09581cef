"""Dataset profiling, baseline suggestion, and batch validation.

A profile is a per-column bundle of mergeable sketches plus type and
completeness tallies; profiles of row chunks merge into the profile of
the whole dataset.  ``suggest_baseline`` freezes a profile into
constraints; ``validate_batch`` replays the constraint checks against
a live window's profile and emits violations.

Cell typing uses a three-level lattice: integral < fractional < string.
A column's inferred type is the join (least upper bound) of its
non-missing cells, so one unparseable cell makes the column string:
"1", "2", "x" is a string column, not a mostly-integer one.  Missing
cells are None, the empty string, or "null" in any letter case.
"""

from __future__ import annotations

import csv
import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .drift import DriftTestConfig, ks_test_eps, linf_categorical
from .errors import ParseError
from .kll import DEFAULT_K, KllSketch
from .sketches import CategoricalSketch, MomentsSketch, ReservoirSample

__all__ = [
    "ColumnProfile",
    "profile_rows",
    "profile_csv",
    "profile_records",
    "ColumnConstraint",
    "Baseline",
    "suggest_baseline",
    "Violation",
    "validate_batch",
    "violations_document",
    "classify_cell",
    "TYPE_INTEGRAL",
    "TYPE_FRACTIONAL",
    "TYPE_STRING",
    "DEFAULT_EPSILON",
    "DEFAULT_ALPHA",
]

TYPE_INTEGRAL = "integral"
TYPE_FRACTIONAL = "fractional"
TYPE_STRING = "string"
_TYPE_ORDER = {TYPE_INTEGRAL: 0, TYPE_FRACTIONAL: 1, TYPE_STRING: 2}

KIND_MISSING = "missing"

DEFAULT_EPSILON = 0.1
DEFAULT_ALPHA = 0.05
DEFAULT_RESERVOIR_CAPACITY = 1000
# beyond this many distinct labels a column stops tracking categories;
# an unbounded counts map defeats the point of sketching
DEFAULT_MAX_CATEGORIES = 1000

CHECK_DATA_TYPE = "data_type_check"
CHECK_COMPLETENESS = "completeness_check"
CHECK_BASELINE_DRIFT = "baseline_drift_check"
CHECK_MISSING_COLUMN = "missing_column_check"
CHECK_EXTRA_COLUMN = "extra_column_check"
CHECK_CATEGORICAL_VALUES = "categorical_values_check"


def classify_cell(raw: Any) -> tuple[str, float | None, str | None]:
    """Classify one cell: (kind, numeric value, label form).

    kind is missing/integral/fractional/string.  The numeric value is
    set for the two numeric kinds; the label form is the cell's textual
    identity for categorical counting and is set for all non-missing
    kinds.
    """
    if raw is None:
        return KIND_MISSING, None, None
    if isinstance(raw, bool):
        return TYPE_STRING, None, str(raw)
    if isinstance(raw, int):
        return TYPE_INTEGRAL, float(raw), str(raw)
    if isinstance(raw, float):
        if raw != raw or raw in (float("inf"), float("-inf")):
            return TYPE_STRING, None, str(raw)
        return TYPE_FRACTIONAL, raw, repr(raw)
    if not isinstance(raw, str):
        return TYPE_STRING, None, str(raw)
    text = raw.strip()
    if text == "" or text.lower() == "null":
        return KIND_MISSING, None, None
    if "_" not in text:
        try:
            return TYPE_INTEGRAL, float(int(text, 10)), text
        except OverflowError:
            return TYPE_STRING, None, text
        except ValueError:
            pass
        try:
            value = float(text)
            if value == value and value not in (float("inf"), float("-inf")):
                return TYPE_FRACTIONAL, value, text
        except ValueError:
            pass
    return TYPE_STRING, None, text


def _column_seed(seed: int, name: str) -> int:
    # stable across processes, unlike hash() on strings
    return seed ^ zlib.crc32(name.encode("utf-8"))


@dataclass
class ColumnProfile:
    """Sketched summary of one column.

    Numeric sketches hold the numerically-parseable cells; the
    categorical sketch holds the label form of every non-missing cell
    (until the distinct-label cap trips and it is dropped).  Which of
    them is meaningful depends on the column's inferred type.
    """

    name: str
    row_count: int = 0
    missing_count: int = 0
    kind_counts: dict[str, int] = field(
        default_factory=lambda: {TYPE_INTEGRAL: 0, TYPE_FRACTIONAL: 0, TYPE_STRING: 0}
    )
    moments: MomentsSketch = field(default_factory=MomentsSketch)
    quantiles: KllSketch = field(default_factory=KllSketch)
    categories: CategoricalSketch | None = field(default_factory=CategoricalSketch)
    sample: ReservoirSample = field(
        default_factory=lambda: ReservoirSample(DEFAULT_RESERVOIR_CAPACITY)
    )
    max_categories: int = DEFAULT_MAX_CATEGORIES

    @property
    def non_null_count(self) -> int:
        return self.row_count - self.missing_count

    @property
    def completeness(self) -> float:
        if self.row_count == 0:
            return 0.0
        return self.non_null_count / self.row_count

    @property
    def inferred_type(self) -> str:
        """Join of the observed cell kinds; integral for an all-missing column."""
        if self.kind_counts[TYPE_STRING]:
            return TYPE_STRING
        if self.kind_counts[TYPE_FRACTIONAL]:
            return TYPE_FRACTIONAL
        return TYPE_INTEGRAL

    def update(self, raw: Any) -> None:
        self.row_count += 1
        kind, number, label = classify_cell(raw)
        if kind == KIND_MISSING:
            self.missing_count += 1
            return
        self.kind_counts[kind] += 1
        if number is not None:
            self.moments.update(number)
            self.quantiles.update(number)
            self.sample.update(number)
        if self.categories is not None:
            self.categories.update(label)
            if len(self.categories.counts) > self.max_categories:
                self.categories = None

    def merge(self, other: ColumnProfile) -> ColumnProfile:
        if self.name != other.name:
            raise ValueError(f"cannot merge profiles of {self.name!r} and {other.name!r}")
        merged_categories = None
        if self.categories is not None and other.categories is not None:
            merged_categories = self.categories.merge(other.categories)
            if len(merged_categories.counts) > self.max_categories:
                merged_categories = None
        return ColumnProfile(
            name=self.name,
            row_count=self.row_count + other.row_count,
            missing_count=self.missing_count + other.missing_count,
            kind_counts={
                kind: self.kind_counts[kind] + other.kind_counts[kind]
                for kind in self.kind_counts
            },
            moments=self.moments.merge(other.moments),
            quantiles=self.quantiles.merge(other.quantiles),
            categories=merged_categories,
            sample=self.sample.merge(other.sample),
            max_categories=self.max_categories,
        )

    def to_dict(self) -> dict[str, Any]:
        summary = self.moments.finalize()
        return {
            "name": self.name,
            "inferred_type": self.inferred_type,
            "row_count": self.row_count,
            "missing_count": self.missing_count,
            "non_null_count": self.non_null_count,
            "completeness": self.completeness,
            "kind_counts": dict(self.kind_counts),
            "mean": summary.mean,
            "std": summary.std,
            "sketches": {
                "moments": self.moments.to_dict(),
                "kll": self.quantiles.to_dict(),
                "categorical": self.categories.to_dict() if self.categories else None,
                "reservoir": self.sample.to_dict(),
            },
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> ColumnProfile:
        sketches = doc["sketches"]
        categories = (
            CategoricalSketch.from_dict(sketches["categorical"])
            if sketches.get("categorical")
            else None
        )
        return cls(
            name=doc["name"],
            row_count=int(doc["row_count"]),
            missing_count=int(doc["missing_count"]),
            kind_counts={k: int(v) for k, v in doc["kind_counts"].items()},
            moments=MomentsSketch.from_dict(sketches["moments"]),
            quantiles=KllSketch.from_dict(sketches["kll"]),
            categories=categories,
            sample=ReservoirSample.from_dict(sketches["reservoir"]),
        )


def _new_profiles(
    columns: Sequence[str], kll_k: int, reservoir_capacity: int, max_categories: int, seed: int
) -> list[ColumnProfile]:
    profiles = []
    for name in columns:
        column_seed = _column_seed(seed, name)
        profiles.append(
            ColumnProfile(
                name=name,
                quantiles=KllSketch(k=kll_k, seed=column_seed),
                sample=ReservoirSample(reservoir_capacity, seed=column_seed),
                max_categories=max_categories,
            )
        )
    return profiles


def profile_rows(
    columns: Sequence[str],
    rows: Iterable[Sequence[Any] | Mapping[str, Any]],
    kll_k: int = DEFAULT_K,
    reservoir_capacity: int = DEFAULT_RESERVOIR_CAPACITY,
    max_categories: int = DEFAULT_MAX_CATEGORIES,
    seed: int = 0,
) -> list[ColumnProfile]:
    """Profile rows given as sequences (CSV order) or mappings (records)."""
    names = list(columns)
    if len(set(names)) != len(names):
        raise ParseError(f"duplicate column names: {names}")
    profiles = _new_profiles(names, kll_k, reservoir_capacity, max_categories, seed)
    for index, row in enumerate(rows):
        if isinstance(row, Mapping):
            cells = [row.get(name) for name in names]
        else:
            cells = list(row)
            if len(cells) != len(names):
                raise ParseError(
                    f"row {index}: expected {len(names)} fields, got {len(cells)}"
                )
        for profile, cell in zip(profiles, cells):
            profile.update(cell)
    return profiles


def profile_csv(path: str | Path, **options: Any) -> list[ColumnProfile]:
    """Profile a CSV file with a header row."""
    path = Path(path)
    with path.open(newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file, expected a header row") from None
        return profile_rows(header, reader, **options)


def profile_records(
    records: Sequence[Mapping[str, Any]],
    columns: Sequence[str] | None = None,
    **options: Any,
) -> list[ColumnProfile]:
    """Profile JSON-object records; columns default to first-seen key order."""
    if columns is None:
        seen: dict[str, None] = {}
        for record in records:
            for key in record:
                seen.setdefault(key)
        columns = list(seen)
    return profile_rows(columns, records, **options)


@dataclass
class ColumnConstraint:
    required_type: str
    completeness_threshold: float
    allowed_categories: list[str] | None = None
    drift_test: str = "none"  # ks | linf | none
    drift_epsilon: float = DEFAULT_EPSILON
    drift_alpha: float = DEFAULT_ALPHA

    def to_dict(self) -> dict[str, Any]:
        return {
            "required_type": self.required_type,
            "completeness_threshold": self.completeness_threshold,
            "allowed_categories": self.allowed_categories,
            "drift_test": self.drift_test,
            "drift_epsilon": self.drift_epsilon,
            "drift_alpha": self.drift_alpha,
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> ColumnConstraint:
        return cls(
            required_type=doc["required_type"],
            completeness_threshold=float(doc["completeness_threshold"]),
            allowed_categories=doc.get("allowed_categories"),
            drift_test=doc.get("drift_test", "none"),
            drift_epsilon=float(doc.get("drift_epsilon", DEFAULT_EPSILON)),
            drift_alpha=float(doc.get("drift_alpha", DEFAULT_ALPHA)),
        )


@dataclass
class Baseline:
    """Frozen reference statistics plus the constraints suggested from them."""

    columns: list[ColumnProfile]
    constraints: dict[str, ColumnConstraint]
    quality_constraints: dict[str, Any] | None = None

    def column(self, name: str) -> ColumnProfile | None:
        for profile in self.columns:
            if profile.name == name:
                return profile
        return None

    def to_document(self) -> dict[str, Any]:
        return {
            "version": 0.0,
            "columns": [profile.to_dict() for profile in self.columns],
            "constraints": {name: c.to_dict() for name, c in self.constraints.items()},
            "quality_constraints": self.quality_constraints,
        }

    @classmethod
    def from_document(cls, doc: dict[str, Any]) -> Baseline:
        return cls(
            columns=[ColumnProfile.from_dict(c) for c in doc["columns"]],
            constraints={
                name: ColumnConstraint.from_dict(c)
                for name, c in doc["constraints"].items()
            },
            quality_constraints=doc.get("quality_constraints"),
        )

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_document(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> Baseline:
        return cls.from_document(json.loads(Path(path).read_text()))


def suggest_baseline(
    profiles: Sequence[ColumnProfile],
    epsilon: float = DEFAULT_EPSILON,
    alpha: float = DEFAULT_ALPHA,
    quality_constraints: dict[str, Any] | None = None,
) -> Baseline:
    """Freeze observed statistics into constraints.

    Types, completeness rates, and category inventories come straight
    from the profile.  Numeric columns get a KS drift test, categorical
    columns an L-infinity test (skipped when the category cap tripped).
    An all-missing column constrains nothing beyond its completeness:
    its required type is string, the lattice top, so no batch can
    demote it.
    """
    config = DriftTestConfig(epsilon=epsilon, alpha=alpha)  # validates eagerly
    constraints: dict[str, ColumnConstraint] = {}
    for profile in profiles:
        if profile.non_null_count == 0:
            constraints[profile.name] = ColumnConstraint(
                required_type=TYPE_STRING,
                completeness_threshold=0.0,
            )
            continue
        required = profile.inferred_type
        allowed: list[str] | None = None
        drift_test = "none"
        if required in (TYPE_INTEGRAL, TYPE_FRACTIONAL):
            if profile.quantiles.n > 0:
                drift_test = "ks"
        elif profile.categories is not None:
            allowed = sorted(profile.categories.counts)
            drift_test = "linf"
        constraints[profile.name] = ColumnConstraint(
            required_type=required,
            completeness_threshold=profile.completeness,
            allowed_categories=allowed,
            drift_test=drift_test,
            drift_epsilon=config.epsilon,
            drift_alpha=config.alpha,
        )
    return Baseline(
        columns=list(profiles),
        constraints=constraints,
        quality_constraints=quality_constraints,
    )


@dataclass
class Violation:
    check: str
    column: str | None
    description: str
    details: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "check": self.check,
            "column": self.column,
            "description": self.description,
            "details": self.details,
        }


def validate_batch(
    batch_profiles: Sequence[ColumnProfile], baseline: Baseline
) -> list[Violation]:
    """Run the six constraint checks on a batch profile.

    Passing columns produce nothing; the return value is only the
    violations, ready for the violations document.
    """
    violations: list[Violation] = []
    batch_by_name = {profile.name: profile for profile in batch_profiles}
    baseline_names = [profile.name for profile in baseline.columns]

    for name in baseline_names:
        if name not in batch_by_name:
            violations.append(
                Violation(
                    check=CHECK_MISSING_COLUMN,
                    column=name,
                    description=f"column {name} is missing from the batch",
                )
            )
    for name in batch_by_name:
        if name not in set(baseline_names):
            violations.append(
                Violation(
                    check=CHECK_EXTRA_COLUMN,
                    column=name,
                    description=f"column {name} is not part of the baseline",
                )
            )

    for name, constraint in baseline.constraints.items():
        batch = batch_by_name.get(name)
        if batch is None:
            continue
        if batch.non_null_count > 0:
            observed_type = batch.inferred_type
            if _TYPE_ORDER[observed_type] > _TYPE_ORDER[constraint.required_type]:
                violations.append(
                    Violation(
                        check=CHECK_DATA_TYPE,
                        column=name,
                        description=(
                            f"column {name}: observed type {observed_type} is more "
                            f"general than the baseline type {constraint.required_type}"
                        ),
                        details={
                            "observed": observed_type,
                            "expected": constraint.required_type,
                        },
                    )
                )
        if batch.completeness < constraint.completeness_threshold:
            violations.append(
                Violation(
                    check=CHECK_COMPLETENESS,
                    column=name,
                    description=(
                        f"column {name}: completeness {batch.completeness:.6g} is below "
                        f"the baseline threshold {constraint.completeness_threshold:.6g}"
                    ),
                    details={
                        "observed": batch.completeness,
                        "expected": constraint.completeness_threshold,
                    },
                )
            )
        if constraint.allowed_categories is not None and batch.categories is not None:
            allowed = set(constraint.allowed_categories)
            unknown = sorted(set(batch.categories.counts) - allowed)
            if unknown:
                violations.append(
                    Violation(
                        check=CHECK_CATEGORICAL_VALUES,
                        column=name,
                        description=(
                            f"column {name}: values outside the baseline inventory: "
                            f"{unknown[:10]}"
                        ),
                        details={"unknown_values": unknown},
                    )
                )
        violation = _drift_violation(name, constraint, batch, baseline)
        if violation is not None:
            violations.append(violation)
    return violations


def _drift_violation(
    name: str, constraint: ColumnConstraint, batch: ColumnProfile, baseline: Baseline
) -> Violation | None:
    reference = baseline.column(name)
    if reference is None:
        return None
    config = DriftTestConfig(epsilon=constraint.drift_epsilon, alpha=constraint.drift_alpha)
    if constraint.drift_test == "ks":
        if batch.quantiles.n == 0 or reference.quantiles.n == 0:
            return None
        result = ks_test_eps(batch.quantiles, reference.quantiles, config)
        kind = "KS"
    elif constraint.drift_test == "linf":
        if batch.categories is None or reference.categories is None:
            return None
        if batch.categories.total == 0 or reference.categories.total == 0:
            return None
        result = linf_categorical(batch.categories, reference.categories, config)
        kind = "L-infinity"
    else:
        return None
    if not result.drift_detected:
        return None
    p_text = "n/a" if result.p_value is None else f"{result.p_value:.6g}"
    return Violation(
        check=CHECK_BASELINE_DRIFT,
        column=name,
        description=(
            f"column {name}: {kind} distance {result.distance:.6g} exceeds "
            f"epsilon {constraint.drift_epsilon} (statistic {result.statistic:.6g}, "
            f"p-value {p_text})"
        ),
        details={
            "test": constraint.drift_test,
            "distance": result.distance,
            "statistic": result.statistic,
            "p_value": result.p_value,
            "epsilon": constraint.drift_epsilon,
            "alpha": constraint.drift_alpha,
        },
    )


def violations_document(violations: Sequence[Violation | Any]) -> dict[str, Any]:
    """Assemble the violations file body; accepts column and quality violations."""
    return {
        "version": 0.0,
        "violations": [violation.to_dict() for violation in violations],
    }
