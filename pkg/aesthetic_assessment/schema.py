"""Benchmark attribute schemas and the affine maps between raw and unit scales."""

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from decouple import Config, Csv, RepositoryEnv, UndefinedValueError

from .exceptions import SchemaError, TargetValidationError

OVERALL = "overall"

AADB_ATTRIBUTES = (
    "balancing_elements",
    "color_harmony",
    "content",
    "depth_of_field",
    "light",
    "motion_blur",
    "object_emphasis",
    "repetition",
    "rule_of_thirds",
    "symmetry",
    "vivid_color",
)

# Presence-only attributes ship on [0, 1]; the rest are signed.
AADB_PRESENCE_ATTRIBUTES = ("repetition", "symmetry")

EVA_ATTRIBUTES = (
    "light_and_color",
    "composition_and_depth",
    "quality",
    "semantics",
)

EXPECTED_ATTRIBUTE_COUNT = {"aadb": 11, "eva": 4}


class Benchmark(str, enum.Enum):
    AADB = "aadb"
    EVA = "eva"
    CUSTOM = "custom"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            valid = ", ".join(member.value for member in cls)
            raise SchemaError(f"Unknown benchmark '{value}'. Expected one of: {valid}")


@dataclass(frozen=True)
class TargetRange:
    low: float
    high: float

    def __post_init__(self):
        if not np.isfinite(self.low) or not np.isfinite(self.high) or self.high <= self.low:
            raise SchemaError(f"Invalid raw range ({self.low}, {self.high})")

    @property
    def width(self):
        return self.high - self.low

    def normalize(self, value):
        return (np.asarray(value, dtype=np.float64) - self.low) / self.width

    def denormalize(self, value):
        return self.low + np.asarray(value, dtype=np.float64) * self.width


@dataclass(frozen=True)
class AttributeSchema:
    benchmark: Benchmark
    attribute_names: tuple
    overall_range: TargetRange
    attribute_ranges: tuple

    def __post_init__(self):
        if len(self.attribute_names) != len(self.attribute_ranges):
            raise SchemaError(
                f"{len(self.attribute_names)} attribute names but "
                f"{len(self.attribute_ranges)} raw ranges"
            )
        if len(set(self.attribute_names)) != len(self.attribute_names):
            raise SchemaError("Attribute names must be unique")
        if OVERALL in self.attribute_names:
            raise SchemaError(f"'{OVERALL}' is reserved for the overall score")
        expected = EXPECTED_ATTRIBUTE_COUNT.get(self.benchmark.value)
        if expected is not None and len(self.attribute_names) != expected:
            raise SchemaError(
                f"{self.benchmark.value.upper()} declares {expected} attributes, "
                f"got {len(self.attribute_names)}"
            )

    @property
    def num_attributes(self):
        return len(self.attribute_names)

    @property
    def num_targets(self):
        return self.num_attributes + 1

    @property
    def target_names(self):
        return (OVERALL, *self.attribute_names)

    @property
    def ranges(self):
        return (self.overall_range, *self.attribute_ranges)

    @property
    def lows(self):
        return np.array([r.low for r in self.ranges], dtype=np.float64)

    @property
    def widths(self):
        return np.array([r.width for r in self.ranges], dtype=np.float64)

    def validate(self, raw, row=None, first_row=0):
        """
        Raise when any raw value is non-finite or outside its declared range.

        Errors name the offending column and the row, counted from first_row
        unless an explicit row is given.
        """
        raw = np.atleast_2d(np.asarray(raw, dtype=np.float64))
        if raw.shape[-1] != self.num_targets:
            raise TargetValidationError(
                f"Expected {self.num_targets} targets, got {raw.shape[-1]}", row=row
            )
        highs = self.lows + self.widths
        bad = ~np.isfinite(raw) | (raw < self.lows) | (raw > highs)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            name = self.target_names[j]
            target_range = self.ranges[j]
            raise TargetValidationError(
                f"Value {raw[i, j]} outside raw range "
                f"[{target_range.low}, {target_range.high}]",
                row=int(i) + first_row if row is None else row,
                column=name,
            )

    def normalize(self, raw, row=None):
        self.validate(raw, row=row)
        return (np.asarray(raw, dtype=np.float64) - self.lows) / self.widths

    def denormalize(self, normalized):
        return self.lows + np.asarray(normalized, dtype=np.float64) * self.widths


def _signed():
    return TargetRange(-1.0, 1.0)


AADB_SCHEMA = AttributeSchema(
    benchmark=Benchmark.AADB,
    attribute_names=AADB_ATTRIBUTES,
    overall_range=TargetRange(0.0, 1.0),
    attribute_ranges=tuple(
        TargetRange(0.0, 1.0) if name in AADB_PRESENCE_ATTRIBUTES else _signed()
        for name in AADB_ATTRIBUTES
    ),
)

# Overall on the 0-10 scale, attributes on a 1-4 Likert scale.
EVA_SCHEMA = AttributeSchema(
    benchmark=Benchmark.EVA,
    attribute_names=EVA_ATTRIBUTES,
    overall_range=TargetRange(0.0, 10.0),
    attribute_ranges=tuple(TargetRange(1.0, 4.0) for _ in EVA_ATTRIBUTES),
)

BUILTIN_SCHEMAS = {Benchmark.AADB: AADB_SCHEMA, Benchmark.EVA: EVA_SCHEMA}


def builtin_schema(benchmark):
    benchmark = Benchmark.parse(benchmark)
    try:
        return BUILTIN_SCHEMAS[benchmark]
    except KeyError:
        raise SchemaError(f"No built-in schema for '{benchmark.value}'; supply a schema file")


def _parse_range(value, key):
    parts = Csv(cast=float)(value)
    if len(parts) != 2:
        raise SchemaError(f"{key} must be 'min,max', got '{value}'")
    return TargetRange(*parts)


def load_schema(path):
    """
    Read a schema declaration file.

    Keys: BENCHMARK, ATTRIBUTES (comma separated), OVERALL_RANGE (min,max),
    ATTRIBUTE_RANGE (default min,max for attributes) and optional
    RANGE_<ATTRIBUTE> overrides.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Schema file not found: {path}")
    config = Config(RepositoryEnv(str(path)))
    try:
        benchmark = Benchmark.parse(config("BENCHMARK"))
        names = tuple(config("ATTRIBUTES", cast=Csv()))
        overall = _parse_range(config("OVERALL_RANGE"), "OVERALL_RANGE")
        default_range = config("ATTRIBUTE_RANGE", default=None)
    except UndefinedValueError as exc:
        raise SchemaError(f"{path}: {exc}")

    ranges = []
    for name in names:
        key = f"RANGE_{name.upper()}"
        value = config(key, default=default_range)
        if value is None:
            raise SchemaError(f"{path}: no raw range for attribute '{name}' (set {key})")
        ranges.append(_parse_range(value, key))

    return AttributeSchema(
        benchmark=benchmark,
        attribute_names=names,
        overall_range=overall,
        attribute_ranges=tuple(ranges),
    )
