"""Quantile binarization of raw metric columns into binary predicates.

Numeric columns are cut at equal-mass quantile thresholds; each kept
threshold t yields the pair of directional predicates (x <= t) and
(x > t), so conjunctions can express intervals.  Categorical columns are
one-hot encoded.  The fitted model renders learned rules back into
human-readable predicate strings and serializes to JSON.

Conventions (fixed, documented): x == t satisfies (x <= t); a missing
value satisfies no predicate of its column; thresholds equal to or above
the column maximum are dropped (they would produce an always-true and a
never-true predicate, and they are all a constant column would produce).
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from ruleloc import SCHEMA_VERSION
from ruleloc.core import BinaryDataset, FeatureIndexError, Rule

NUMERIC = "numeric"
CATEGORICAL = "categorical"

DEFAULT_BINS = 100


class SchemaError(ValueError):
    """Input columns do not match the fitted catalog."""


@dataclass(frozen=True)
class FeatureSpec:
    """Declares how one raw column is binarized."""

    name: str
    kind: str = NUMERIC
    bins: int = DEFAULT_BINS

    def __post_init__(self) -> None:
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise ValueError(f"unknown column kind {self.kind!r}")
        if self.kind == NUMERIC and self.bins < 2:
            raise ValueError("numeric columns need bins >= 2")


@dataclass(frozen=True)
class ColumnModel:
    name: str
    kind: str
    thresholds: tuple[float, ...] = ()
    categories: tuple[str, ...] = ()


@dataclass(frozen=True)
class BinaryFeature:
    """Catalog entry mapping one binary feature back to its source column."""

    column: str
    op: str  # "<=", ">" or "=="
    threshold: Optional[float] = None
    category: Optional[str] = None

    @property
    def name(self) -> str:
        if self.op == "==":
            return f"{self.column} == {self.category}"
        return f"{self.column} {self.op} {self.threshold!r}"


@dataclass(frozen=True)
class BinarizationModel:
    columns: tuple[ColumnModel, ...]
    catalog: tuple[BinaryFeature, ...]

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    def to_json_obj(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "columns": [
                {
                    "name": c.name,
                    "kind": c.kind,
                    **(
                        {"thresholds": list(c.thresholds)}
                        if c.kind == NUMERIC
                        else {"categories": list(c.categories)}
                    ),
                }
                for c in self.columns
            ],
            "feature_catalog": [
                {
                    "column": f.column,
                    "op": f.op,
                    **(
                        {"threshold": f.threshold}
                        if f.op != "=="
                        else {"category": f.category}
                    ),
                }
                for f in self.catalog
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj(), sort_keys=True)

    @classmethod
    def from_json_obj(cls, obj: Mapping) -> "BinarizationModel":
        if obj.get("schema_version") != SCHEMA_VERSION:
            raise SchemaError(
                f"unsupported binarization schema version {obj.get('schema_version')!r}"
            )
        columns = tuple(
            ColumnModel(
                c["name"],
                c["kind"],
                tuple(c.get("thresholds", ())),
                tuple(c.get("categories", ())),
            )
            for c in obj["columns"]
        )
        catalog = tuple(
            BinaryFeature(
                f["column"], f["op"], f.get("threshold"), f.get("category")
            )
            for f in obj["feature_catalog"]
        )
        return cls(columns, catalog)

    @classmethod
    def from_json(cls, text: str) -> "BinarizationModel":
        return cls.from_json_obj(json.loads(text))


def _as_float(value) -> float:
    if value is None:
        return math.nan
    if isinstance(value, str):
        value = value.strip()
        if not value:
            return math.nan
        return float(value)
    return float(value)


def _numeric_column(values: Sequence) -> np.ndarray:
    return np.array([_as_float(v) for v in values], dtype=float)


def fit(table: Mapping[str, Sequence], specs: Sequence[FeatureSpec]) -> BinarizationModel:
    """Fit thresholds / category maps from a column-oriented table.

    Numeric thresholds are the empirical quantiles at k/bins for
    k = 1..bins-1 over the finite values, deduplicated, with thresholds at
    or above the column maximum dropped.  Categorical columns record the
    sorted set of observed non-missing categories.
    """
    if not table or not any(len(col) for col in table.values()):
        raise ValueError("cannot fit a binarizer on an empty table")
    columns: list[ColumnModel] = []
    catalog: list[BinaryFeature] = []
    for spec in specs:
        if spec.name not in table:
            raise SchemaError(f"column {spec.name!r} not present in table")
        raw = table[spec.name]
        if spec.kind == NUMERIC:
            values = _numeric_column(raw)
            finite = values[np.isfinite(values)]
            if finite.size == 0:
                warnings.warn(
                    f"column {spec.name!r} has no finite values; emitting no features",
                    stacklevel=2,
                )
                thresholds: tuple[float, ...] = ()
            else:
                qs = np.arange(1, spec.bins) / spec.bins
                cand = np.unique(np.quantile(finite, qs))
                top = float(finite.max())
                thresholds = tuple(float(t) for t in cand if t < top)
            columns.append(ColumnModel(spec.name, NUMERIC, thresholds))
            for t in thresholds:
                catalog.append(BinaryFeature(spec.name, "<=", t))
                catalog.append(BinaryFeature(spec.name, ">", t))
        else:
            cats = sorted({str(v) for v in raw if v is not None and str(v).strip()})
            if not cats:
                warnings.warn(
                    f"column {spec.name!r} has no observed categories; emitting no features",
                    stacklevel=2,
                )
            columns.append(ColumnModel(spec.name, CATEGORICAL, (), tuple(cats)))
            for c in cats:
                catalog.append(BinaryFeature(spec.name, "==", category=c))
    return BinarizationModel(tuple(columns), tuple(catalog))


def _feature_column(model: BinarizationModel, feature: BinaryFeature, table, n: int):
    raw = table[feature.column]
    if len(raw) != n:
        raise SchemaError(f"column {feature.column!r} has inconsistent length")
    return raw


def feature_matrix(model: BinarizationModel, table: Mapping[str, Sequence]) -> np.ndarray:
    """Dense boolean matrix (n rows x len(catalog) columns) of the predicates."""
    missing = [c.name for c in model.columns if c.name not in table]
    if missing:
        raise SchemaError(f"table is missing fitted columns {missing}")
    n = max((len(table[c.name]) for c in model.columns), default=0)
    out = np.zeros((n, len(model.catalog)), dtype=bool)
    numeric_cache: dict[str, np.ndarray] = {}
    for k, feat in enumerate(model.catalog):
        raw = _feature_column(model, feat, table, n)
        if feat.op == "==":
            out[:, k] = np.array(
                [v is not None and str(v) == feat.category for v in raw], dtype=bool
            )
        else:
            if feat.column not in numeric_cache:
                numeric_cache[feat.column] = _numeric_column(raw)
            vals = numeric_cache[feat.column]
            finite = np.isfinite(vals)
            if feat.op == "<=":
                out[:, k] = finite & (vals <= feat.threshold)
            else:
                out[:, k] = finite & (vals > feat.threshold)
    return out


def _pack_column(bits: np.ndarray) -> int:
    return int.from_bytes(np.packbits(bits, bitorder="little").tobytes(), "little")


def transform(
    model: BinarizationModel,
    table: Mapping[str, Sequence],
    labels: Optional[Sequence[int]] = None,
) -> BinaryDataset:
    """Binarize a raw table against the fitted catalog.

    `labels` is an optional 0/1 vector (query windows have none).
    """
    matrix = feature_matrix(model, table)
    n = matrix.shape[0]
    coverage = tuple(_pack_column(matrix[:, k]) for k in range(matrix.shape[1]))
    label_bits = 0
    if labels is not None:
        if len(labels) != n:
            raise SchemaError("labels must have one entry per row")
        label_bits = _pack_column(np.array([bool(y) for y in labels]))
    names = tuple(f.name for f in model.catalog)
    return BinaryDataset(n, coverage, label_bits, names)


def row_feature_masks(model: BinarizationModel, table: Mapping[str, Sequence]) -> list[int]:
    """Per-row bitmask over catalog feature indices (for query scoring)."""
    matrix = feature_matrix(model, table)
    return [_pack_column(matrix[i, :]) for i in range(matrix.shape[0])]


def describe_rule(model: BinarizationModel, rule: Rule) -> str:
    """Render a rule as a human-readable conjunction.

    Directional predicates on the same column merge into interval notation
    ("100 < x <= 200"); the empty rule renders as "TRUE".
    """
    if not rule.features:
        return "TRUE"
    if rule.features[-1] >= len(model.catalog):
        raise FeatureIndexError(
            f"rule {rule.features} references a feature outside the catalog"
        )
    by_column: dict[str, dict] = {}
    order: list[str] = []
    for j in rule.features:
        feat = model.catalog[j]
        if feat.column not in by_column:
            by_column[feat.column] = {"lo": None, "hi": None, "cats": []}
            order.append(feat.column)
        slot = by_column[feat.column]
        if feat.op == ">":
            slot["lo"] = feat.threshold if slot["lo"] is None else max(slot["lo"], feat.threshold)
        elif feat.op == "<=":
            slot["hi"] = feat.threshold if slot["hi"] is None else min(slot["hi"], feat.threshold)
        else:
            slot["cats"].append(feat.category)
    parts = []
    for column in order:
        slot = by_column[column]
        for cat in slot["cats"]:
            parts.append(f"{column} == {cat}")
        lo, hi = slot["lo"], slot["hi"]
        if lo is not None and hi is not None:
            parts.append(f"{lo!r} < {column} <= {hi!r}")
        elif lo is not None:
            parts.append(f"{column} > {lo!r}")
        elif hi is not None:
            parts.append(f"{column} <= {hi!r}")
    return " ∧ ".join(parts)
