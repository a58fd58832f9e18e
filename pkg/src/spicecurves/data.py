"""Tabular dataset ingestion, feature grids, splits and stratified sampling."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

logger = logging.getLogger(__name__)

MISSING_TOKENS = frozenset({"", "na", "nan", "null", "none"})


class DataError(ValueError):
    """Raised for malformed input files or invalid data requests."""


@dataclass(frozen=True)
class Feature:
    name: str
    kind: Literal["numeric", "categorical"] = "numeric"
    levels: tuple[str, ...] | None = None


@dataclass(frozen=True)
class Schema:
    """Column roles of a dataset.

    Parameters
    ----------
    features
        Explanatory columns, in the order predictors receive them.
    response
        Numeric response column.
    coords
        ``(latitude, longitude)`` column names, decimal degrees.
    """

    features: tuple[Feature, ...]
    response: str
    coords: tuple[str, str] = ("lat", "long")

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise DataError("duplicate feature names in schema")
        reserved = {self.response, *self.coords}
        if len(reserved) != 3:
            raise DataError("response and coordinate columns must be distinct")
        clash = reserved.intersection(names)
        if clash:
            raise DataError(f"columns {sorted(clash)} cannot be both features and response/coords")
        if not any(f.kind == "numeric" for f in self.features):
            raise DataError("schema needs at least one numeric feature")
        for f in self.features:
            if f.kind not in ("numeric", "categorical"):
                raise DataError(f"feature {f.name!r}: unknown kind {f.kind!r}")

    @property
    def feature_names(self) -> list[str]:
        return [f.name for f in self.features]

    @property
    def columns(self) -> list[str]:
        return [*self.feature_names, self.response, *self.coords]

    def feature(self, name: str) -> Feature:
        for f in self.features:
            if f.name == name:
                return f
        raise DataError(f"unknown feature {name!r}")

    def feature_index(self, name: str) -> int:
        return self.feature_names.index(self.feature(name).name)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Column store. Categorical columns hold integer level codes into ``levels``."""

    schema: Schema
    columns: dict[str, np.ndarray]
    levels: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise DataError(f"columns have unequal lengths {sorted(lengths)}")
        for name in self.schema.columns:
            if name not in self.columns:
                raise DataError(f"missing column {name!r}")
        for f in self.schema.features:
            col = self.columns[f.name]
            if f.kind == "numeric" and not np.all(np.isfinite(col)):
                raise DataError(f"column {f.name!r} has non-finite values")
            if f.kind == "categorical":
                if f.name not in self.levels:
                    raise DataError(f"categorical column {f.name!r} has no level dictionary")
                if len(col) and (col.min() < 0 or col.max() >= len(self.levels[f.name])):
                    raise DataError(f"categorical column {f.name!r} has codes outside its levels")
        for name in (self.schema.response, *self.schema.coords):
            if not np.all(np.isfinite(self.columns[name])):
                raise DataError(f"column {name!r} has non-finite values")

    def __len__(self) -> int:
        return self.n

    @property
    def n(self) -> int:
        return len(self.columns[self.schema.response])

    @property
    def response(self) -> np.ndarray:
        return self.columns[self.schema.response]

    @property
    def coords(self) -> np.ndarray:
        lat, lon = self.schema.coords
        return np.column_stack([self.columns[lat], self.columns[lon]])

    def feature_matrix(self, rows: Sequence[int] | np.ndarray | None = None) -> np.ndarray:
        """Features in schema order as a float matrix; categoricals as level codes."""
        cols = [np.asarray(self.columns[name], dtype=float) for name in self.schema.feature_names]
        X = np.column_stack(cols)
        return X if rows is None else X[np.asarray(rows, dtype=int)]

    def categorical_levels(self) -> dict[int, tuple[str, ...]]:
        """Level strings keyed by feature-matrix column index."""
        return {
            j: self.levels[f.name]
            for j, f in enumerate(self.schema.features)
            if f.kind == "categorical"
        }

    def take(self, rows: Sequence[int] | np.ndarray) -> Dataset:
        rows = np.asarray(rows, dtype=int)
        return Dataset(self.schema, {k: v[rows] for k, v in self.columns.items()}, dict(self.levels))

    def equals(self, other: Dataset) -> bool:
        if self.schema != other.schema or self.levels != other.levels:
            return False
        return all(np.array_equal(self.columns[k], other.columns[k]) for k in self.schema.columns)


@dataclass(frozen=True, eq=False)
class FeatureGrid:
    feature: str
    values: np.ndarray
    strategy: Literal["uniform", "quantile"] = "uniform"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or len(v) < 2:
            raise DataError("a feature grid needs at least 2 points")
        if not np.all(np.diff(v) > 0):
            raise DataError("grid values must be strictly increasing")
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def span(self) -> float:
        return float(self.values[-1] - self.values[0])


def _parse_float(token: str) -> float:
    value = float(token)
    if not math.isfinite(value):
        raise ValueError(token)
    return value


def load_dataset(path: str | Path, schema: Schema) -> Dataset:
    """Read a comma-separated file with a header row.

    Rows with a missing value in any schema column are dropped (the count is
    logged). Unparseable tokens are an error listing every offending line.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        missing = [c for c in schema.columns if c not in header]
        if missing:
            raise DataError(f"{path}: missing declared column(s) {', '.join(missing)}")
        pos = {c: header.index(c) for c in schema.columns}
        kinds = {f.name: f.kind for f in schema.features}
        raw: dict[str, list] = {c: [] for c in schema.columns}
        bad: list[str] = []
        dropped = 0
        for lineno, record in enumerate(reader, start=2):
            if not record or all(not tok.strip() for tok in record):
                continue
            if len(record) != len(header):
                bad.append(f"line {lineno}: expected {len(header)} fields, got {len(record)}")
                continue
            tokens = {c: record[i].strip() for c, i in pos.items()}
            if any(t.lower() in MISSING_TOKENS for t in tokens.values()):
                dropped += 1
                continue
            parsed = {}
            for c, tok in tokens.items():
                if kinds.get(c) == "categorical":
                    parsed[c] = tok
                    continue
                try:
                    parsed[c] = _parse_float(tok)
                except ValueError:
                    bad.append(f"line {lineno}: column {c!r} has non-numeric token {tok!r}")
            if len(parsed) == len(tokens):
                for c, v in parsed.items():
                    raw[c].append(v)
    if bad:
        raise DataError(f"{path}: unparseable rows\n  " + "\n  ".join(bad))
    if dropped:
        logger.info("%s: dropped %d row(s) with missing values", path, dropped)
    if not raw[schema.response]:
        raise DataError(f"{path}: no data rows")

    columns: dict[str, np.ndarray] = {}
    levels: dict[str, tuple[str, ...]] = {}
    for c in schema.columns:
        if kinds.get(c) == "categorical":
            declared = schema.feature(c).levels
            lv = tuple(declared) if declared is not None else tuple(sorted(set(raw[c])))
            index = {s: i for i, s in enumerate(lv)}
            unknown = sorted(set(raw[c]) - index.keys())
            if unknown:
                raise DataError(f"{path}: column {c!r} has undeclared level(s) {unknown}")
            columns[c] = np.array([index[s] for s in raw[c]], dtype=np.int64)
            levels[c] = lv
        else:
            columns[c] = np.array(raw[c], dtype=float)
    return Dataset(schema, columns, levels)


def write_dataset(dataset: Dataset, path: str | Path) -> None:
    """Write ``dataset`` as CSV readable by :func:`load_dataset`."""
    schema = dataset.schema
    kinds = {f.name: f.kind for f in schema.features}
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(schema.columns)
        for i in range(dataset.n):
            row = []
            for c in schema.columns:
                v = dataset.columns[c][i]
                row.append(dataset.levels[c][int(v)] if kinds.get(c) == "categorical" else repr(float(v)))
            writer.writerow(row)


def build_grid(
    dataset: Dataset,
    feature: str,
    M: int = 50,
    strategy: Literal["uniform", "quantile"] = "uniform",
) -> FeatureGrid:
    """Grid of ``M`` values spanning the observed range of a numeric feature.

    ``quantile`` uses the linear-interpolation empirical quantile at
    probabilities ``k/(M-1)``; duplicate quantiles are collapsed, so the grid
    may come out shorter than ``M``.
    """
    if dataset.schema.feature(feature).kind != "numeric":
        raise DataError(f"feature {feature!r} is not numeric")
    if M < 2:
        raise DataError(f"grid size must be >= 2, got {M}")
    x = dataset.columns[feature]
    lo, hi = float(x.min()), float(x.max())
    if hi == lo:
        raise DataError(f"feature {feature!r} is constant; cannot build a grid")
    if strategy == "uniform":
        values = np.linspace(lo, hi, M)
    elif strategy == "quantile":
        values = np.unique(np.quantile(x, np.linspace(0.0, 1.0, M), method="linear"))
    else:
        raise DataError(f"unknown grid strategy {strategy!r}")
    # clip guards against rounding outside the observed range
    return FeatureGrid(feature, np.clip(values, lo, hi), strategy)


def train_test_split(dataset: Dataset, train_fraction: float = 2 / 3, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Random disjoint split with ``round(n * train_fraction)`` training rows (halves round up)."""
    if not 0 < train_fraction < 1:
        raise DataError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n = dataset.n
    if n < 2:
        raise DataError("need at least 2 rows to split")
    n_train = min(max(math.floor(n * train_fraction + 0.5), 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    return dataset.take(np.sort(perm[:n_train])), dataset.take(np.sort(perm[n_train:]))


def response_strata(response: np.ndarray, strata_count: int) -> np.ndarray:
    """Stratum label (0-based) per row: equal-count bins of the response ranks.

    Ties in the response are ordered by row index, so bin sizes differ by at
    most one even with repeated values.
    """
    n = len(response)
    order = np.argsort(response, kind="stable")
    ranks = np.empty(n, dtype=np.int64)
    ranks[order] = np.arange(n)
    return (ranks * strata_count) // n


def stratified_sample(dataset: Dataset, strata_count: int = 10, total: int = 5000, seed: int = 0) -> np.ndarray:
    """Sorted row indices drawn without replacement from response strata.

    Each stratum contributes ``total // strata_count`` rows; the remaining
    ``total % strata_count`` rows go one each to the largest strata (lower
    stratum first among equals).
    """
    n = dataset.n
    if strata_count < 1:
        raise DataError("strata_count must be >= 1")
    if total > n:
        raise DataError(f"cannot sample {total} rows from {n}")
    if total < 0:
        raise DataError("total must be nonnegative")
    if total == n:
        return np.arange(n)
    strata_count = min(strata_count, n)
    labels = response_strata(dataset.response, strata_count)
    sizes = np.bincount(labels, minlength=strata_count)
    quota = np.full(strata_count, total // strata_count)
    by_size = np.argsort(-sizes, kind="stable")
    quota[by_size[: total % strata_count]] += 1
    rng = np.random.default_rng(seed)
    picked = []
    for s in range(strata_count):
        members = np.flatnonzero(labels == s)
        picked.append(rng.choice(members, size=quota[s], replace=False))
    return np.sort(np.concatenate(picked))
