"""Curve and spatial dissimilarity matrices.

Curves are compared with the Sobolev W^{1,2} distance, i.e. the L2 norm of
the difference in values plus the L2 norm of the difference in first
derivatives, integrated with the trapezoid rule on the shared dense grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .smoothing import SmoothBundle, SmoothCurve

EARTH_RADIUS_KM = 6371.0
KM_PER_DEGREE = EARTH_RADIUS_KM * math.pi / 180.0

Role = Literal["curves", "spatial", "mixed"]


@dataclass(frozen=True, eq=False)
class DissimilarityMatrix:
    values: np.ndarray
    role: Role = "curves"
    normalized: bool = False

    def __post_init__(self):
        d = np.asarray(self.values, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValueError(f"dissimilarity matrix must be square, got shape {d.shape}")
        if not np.all(np.isfinite(d)):
            raise ValueError("dissimilarities must be finite")
        if np.any(d < 0):
            raise ValueError("dissimilarities must be nonnegative")
        if np.any(np.diag(d) != 0):
            raise ValueError("dissimilarity matrix must have a zero diagonal")
        if not np.array_equal(d, d.T):
            raise ValueError("dissimilarity matrix must be symmetric")
        object.__setattr__(self, "values", d)

    @property
    def n(self) -> int:
        return len(self.values)

    def __len__(self) -> int:
        return self.n

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


def trapezoid_weights(t: np.ndarray) -> np.ndarray:
    """Quadrature weights ``q`` such that ``q @ f(t)`` is the trapezoid rule."""
    t = np.asarray(t, dtype=float)
    dt = np.diff(t)
    q = np.zeros_like(t)
    q[:-1] += dt / 2
    q[1:] += dt / 2
    return q


def _sobolev_sq(values: np.ndarray, derivs: np.ndarray, q: np.ndarray) -> np.ndarray:
    return (values**2) @ q + (derivs**2) @ q


def sobolev_norm(curve: SmoothCurve) -> float:
    """sqrt(∫ f² dt + ∫ f'² dt) by the trapezoid rule on ``curve.t``."""
    q = trapezoid_weights(curve.t)
    return math.sqrt(float(_sobolev_sq(np.asarray(curve.values), np.asarray(curve.derivative), q)))


def sobolev_distance(a: SmoothCurve, b: SmoothCurve) -> float:
    if len(a.t) != len(b.t) or not np.array_equal(a.t, b.t):
        raise ValueError("curves are not on the same dense grid")
    q = trapezoid_weights(a.t)
    sq = _sobolev_sq(np.asarray(a.values) - b.values, np.asarray(a.derivative) - b.derivative, q)
    return math.sqrt(float(sq))


def curve_dissimilarity_matrix(curves: SmoothBundle | Sequence[SmoothCurve]) -> DissimilarityMatrix:
    """Pairwise Sobolev distances. Each unordered pair is computed once and mirrored."""
    if isinstance(curves, SmoothBundle):
        t, V, Dv = curves.t, curves.values, curves.derivatives
    else:
        curves = list(curves)
        if len(curves) < 2:
            raise ValueError("need at least 2 curves")
        t = curves[0].t
        for c in curves[1:]:
            if len(c.t) != len(t) or not np.array_equal(c.t, t):
                raise ValueError("curves are not on the same dense grid")
        V = np.array([c.values for c in curves])
        Dv = np.array([c.derivative for c in curves])
    n = len(V)
    if n < 2:
        raise ValueError("need at least 2 curves")
    q = trapezoid_weights(t)
    D = np.zeros((n, n))
    for i in range(n - 1):
        row = np.sqrt(_sobolev_sq(V[i + 1 :] - V[i], Dv[i + 1 :] - Dv[i], q))
        D[i, i + 1 :] = row
        D[i + 1 :, i] = row
    return DissimilarityMatrix(D, "curves")


def spatial_dissimilarity_matrix(
    coords: np.ndarray,
    metric: Literal["planar", "greatcircle"] = "planar",
    units: Literal["km", "degrees"] = "km",
) -> DissimilarityMatrix:
    """Distances between ``(latitude, longitude)`` rows in decimal degrees.

    ``planar`` projects equirectangularly about the mean latitude and takes
    Euclidean distances; ``greatcircle`` is the haversine distance. With
    ``units="degrees"`` the result is the same distance expressed in degrees
    of arc (km divided by the length of one degree).
    """
    coords = np.asarray(coords, dtype=float)
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise ValueError("coords must be an (n, 2) array of latitude, longitude")
    if not np.all(np.isfinite(coords)):
        raise ValueError("coordinates must be finite")
    lat, lon = np.radians(coords[:, 0]), np.radians(coords[:, 1])
    if np.any(np.abs(coords[:, 0]) > 90):
        raise ValueError("latitude outside [-90, 90]")
    if metric == "planar":
        x = EARTH_RADIUS_KM * lon * math.cos(float(lat.mean()))
        y = EARTH_RADIUS_KM * lat
        D = np.hypot(x[:, None] - x[None, :], y[:, None] - y[None, :])
    elif metric == "greatcircle":
        dlat = lat[:, None] - lat[None, :]
        dlon = lon[:, None] - lon[None, :]
        a = np.sin(dlat / 2) ** 2 + np.cos(lat)[:, None] * np.cos(lat)[None, :] * np.sin(dlon / 2) ** 2
        D = 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))
    else:
        raise ValueError(f"unknown spatial metric {metric!r}")
    if units == "degrees":
        D = D / KM_PER_DEGREE
    elif units != "km":
        raise ValueError(f"unknown units {units!r}")
    D = np.maximum(D, D.T)  # exact symmetry
    np.fill_diagonal(D, 0.0)
    return DissimilarityMatrix(D, "spatial")


def normalize(D: DissimilarityMatrix) -> DissimilarityMatrix:
    """Scale so the largest entry is 1."""
    top = float(D.values.max())
    if top <= 0:
        raise ValueError("cannot normalize an all-zero dissimilarity matrix")
    return replace(D, values=D.values / top, normalized=True)


def write_matrix(D: DissimilarityMatrix, path: str | Path) -> None:
    with Path(path).open("w") as fh:
        fh.write(f"{D.n}\n")
        np.savetxt(fh, D.values, fmt="%.17g", delimiter=",")


def read_matrix(path: str | Path, role: Role = "curves", normalized: bool = False, tol: float = 1e-9) -> DissimilarityMatrix:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty file")
    n = int(lines[0])
    rows = [np.array(line.split(","), dtype=float) for line in lines[1 : n + 1]]
    if len(rows) != n or any(len(r) != n for r in rows):
        raise ValueError(f"{path}: expected {n} rows of {n} values")
    D = np.array(rows).reshape(n, n)
    if np.max(np.abs(D - D.T), initial=0.0) > tol:
        raise ValueError(f"{path}: matrix is not symmetric")
    D = (D + D.T) / 2
    return DissimilarityMatrix(D, role, normalized)
