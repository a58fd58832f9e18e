"""Individual conditional expectation (ICE) and partial dependence (PD) curves."""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Dataset, FeatureGrid
from .predictor import Predictor


class IceError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class IceCurve:
    id: int
    grid: FeatureGrid
    values: np.ndarray


@dataclass(frozen=True, eq=False)
class IceBundle:
    """ICE curves of one feature on a shared grid.

    ``values[i, g]`` is the prediction for observation ``ids[i]`` with the
    feature set to ``grid.values[g]``.
    """

    feature: str
    grid: FeatureGrid
    ids: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64)
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape != (len(ids), len(self.grid)):
            raise IceError(f"values shape {values.shape} does not match {len(ids)} ids x {len(self.grid)} grid points")
        if len(np.unique(ids)) != len(ids):
            raise IceError("curve ids must be unique")
        if not np.all(np.isfinite(values)):
            raise IceError("ICE values must be finite")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def curves(self) -> list[IceCurve]:
        return [IceCurve(int(i), self.grid, v) for i, v in zip(self.ids, self.values)]

    def take(self, positions) -> IceBundle:
        positions = np.asarray(positions, dtype=int)
        return IceBundle(self.feature, self.grid, self.ids[positions], self.values[positions])


def ice_curves(
    predictor: Predictor,
    dataset: Dataset,
    feature: str,
    grid: FeatureGrid,
    rows: Sequence[int] | np.ndarray | None = None,
    workers: int = 1,
) -> IceBundle:
    """Sweep ``feature`` over ``grid`` for each selected row, holding its other features fixed.

    One prediction batch is issued per grid point. With ``workers > 1`` the
    batches run on a thread pool; results are placed by grid position, so
    the output does not depend on scheduling.
    """
    if dataset.schema.feature(feature).kind != "numeric":
        raise IceError(f"feature {feature!r} is not numeric")
    if grid.feature != feature:
        raise IceError(f"grid was built for {grid.feature!r}, not {feature!r}")
    rows = np.arange(dataset.n) if rows is None else np.asarray(rows, dtype=np.int64)
    if len(rows) and (rows.min() < 0 or rows.max() >= dataset.n):
        raise IceError("row index out of range")
    X = dataset.feature_matrix(rows)
    j = dataset.schema.feature_index(feature)

    def sweep(g: int) -> np.ndarray:
        Xg = X.copy()
        Xg[:, j] = grid.values[g]
        try:
            pred = np.asarray(predictor.predict(Xg), dtype=float)
        except Exception as exc:
            raise IceError(f"prediction failed at grid point {g} ({feature}={grid.values[g]!r}): {exc}") from exc
        if pred.shape != (len(rows),):
            raise IceError(f"predictor returned shape {pred.shape} for {len(rows)} rows at grid point {g}")
        return pred

    values = np.empty((len(rows), len(grid)))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for g, col in enumerate(pool.map(sweep, range(len(grid)))):
                values[:, g] = col
    else:
        for g in range(len(grid)):
            values[:, g] = sweep(g)
    return IceBundle(feature, grid, rows, values)


def pd_curve(bundle) -> np.ndarray:
    """Pointwise mean of the curves, accumulated in ascending id order.

    Works for any bundle exposing ``ids`` and a ``values`` matrix, smoothed
    bundles included.
    """
    if len(bundle.ids) == 0:
        raise IceError("cannot average an empty bundle")
    acc = np.zeros(bundle.values.shape[1])
    for pos in np.argsort(bundle.ids, kind="stable"):
        acc += bundle.values[pos]
    return acc / len(bundle.ids)


def write_bundle(bundle: IceBundle, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "grid_value", "prediction"])
        for i, row in zip(bundle.ids, bundle.values):
            for g, v in zip(bundle.grid.values, row):
                w.writerow([int(i), repr(float(g)), repr(float(v))])


def read_bundle(path: str | Path, feature: str, strategy: str = "uniform") -> IceBundle:
    """Inverse of :func:`write_bundle`; curve order follows first appearance in the file."""
    ids: list[int] = []
    curves: dict[int, list[tuple[float, float]]] = {}
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or reader.fieldnames[:3] != ["id", "grid_value", "prediction"]:
            raise IceError(f"{path}: expected header id,grid_value,prediction")
        for rec in reader:
            i = int(rec["id"])
            if i not in curves:
                ids.append(i)
                curves[i] = []
            curves[i].append((float(rec["grid_value"]), float(rec["prediction"])))
    if not ids:
        raise IceError(f"{path}: no curves")
    grid_values = [g for g, _ in curves[ids[0]]]
    for i in ids:
        if [g for g, _ in curves[i]] != grid_values:
            raise IceError(f"{path}: curve {i} is not on the shared grid")
    grid = FeatureGrid(feature, np.array(grid_values), strategy)
    values = np.array([[v for _, v in curves[i]] for i in ids])
    return IceBundle(feature, grid, np.array(ids), values)
