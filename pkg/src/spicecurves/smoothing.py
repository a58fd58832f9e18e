"""Gaussian-kernel convolution of ICE curves, with first derivatives."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import FeatureGrid
from .ice import IceBundle, IceCurve

TRUNCATION = 4.0  # kernel support, in bandwidths
DEFAULT_G = 201
DEFAULT_BANDWIDTH_FRACTION = 0.05


@dataclass(frozen=True, eq=False)
class SmoothCurve:
    id: int
    t: np.ndarray
    values: np.ndarray
    derivative: np.ndarray
    h: float

    def __post_init__(self):
        if not (len(self.t) == len(self.values) == len(self.derivative)):
            raise ValueError("t, values and derivative must have equal length")
        if not self.h > 0:
            raise ValueError("bandwidth must be positive")


@dataclass(frozen=True, eq=False)
class SmoothBundle:
    feature: str
    ids: np.ndarray
    t: np.ndarray
    values: np.ndarray
    derivatives: np.ndarray
    h: float

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def curves(self) -> list[SmoothCurve]:
        return [
            SmoothCurve(int(i), self.t, v, d, self.h)
            for i, v, d in zip(self.ids, self.values, self.derivatives)
        ]

    def take(self, positions) -> SmoothBundle:
        positions = np.asarray(positions, dtype=int)
        return SmoothBundle(
            self.feature, self.ids[positions], self.t, self.values[positions], self.derivatives[positions], self.h
        )


def default_bandwidth(grid: FeatureGrid) -> float:
    return DEFAULT_BANDWIDTH_FRACTION * grid.span


def gaussian_kernels(h: float, step: float) -> tuple[np.ndarray, np.ndarray]:
    """Smoothing and derivative tap weights on a grid of spacing ``step``.

    Tap ``m`` of ``2p+1`` multiplies the input at offset ``(m - p) * step``
    from the output point. Smoothing weights are the Gaussian density
    truncated at ``TRUNCATION * h`` and renormalized to sum to one.

    Derivative weights are the Gaussian-derivative kernel plus the two edge
    terms that truncation adds to the derivative of the truncated
    convolution. They are centred to sum to zero and scaled so that a unit
    slope is reproduced exactly.
    """
    if not h > 0:
        raise ValueError(f"bandwidth must be positive, got {h}")
    p = max(1, math.ceil(TRUNCATION * h / step))
    offsets = np.arange(-p, p + 1) * step
    w = np.exp(-0.5 * (offsets / h) ** 2)
    w /= w.sum()
    dw = offsets / h**2 * w
    dw[-1] += w[-1] / step
    dw[0] -= w[0] / step
    dw -= dw.mean()
    slope = np.dot(offsets, dw)
    if not slope > 1e-12:
        # kernel narrower than the grid: the tails underflow, use a centred difference
        dw = np.zeros_like(w)
        dw[p - 1], dw[p + 1] = -1.0, 1.0
        slope = np.dot(offsets, dw)
    dw /= slope
    return w, dw


def _convolve_rows(values: np.ndarray, grid_x: np.ndarray, h: float, G: int):
    t = np.linspace(grid_x[0], grid_x[-1], G)
    dense = np.array([np.interp(t, grid_x, row) for row in values]).reshape(len(values), G)
    w, dw = gaussian_kernels(h, t[1] - t[0])
    p = len(w) // 2
    padded = np.pad(dense, ((0, 0), (p, p)), mode="reflect")
    # accumulate differences from the centre sample so constants pass through exactly
    smooth = np.zeros_like(dense)
    deriv = np.zeros_like(dense)
    for m in range(len(w)):
        diff = padded[:, m : m + G] - dense  # input at offset (m - p) * step
        smooth += w[m] * diff
        deriv += dw[m] * diff
    return t, dense + smooth, deriv


def gaussian_convolve(curve: IceCurve, h: float, G: int = DEFAULT_G) -> SmoothCurve:
    """Smooth one ICE curve by Gaussian convolution on a dense uniform grid.

    The curve is linearly interpolated onto ``G`` points spanning its grid
    and mirrored at both ends before convolving, so constants pass through
    unchanged and straight lines are preserved away from the ends.
    """
    if not h > 0:
        raise ValueError(f"bandwidth must be positive, got {h}")
    if G < len(curve.grid):
        raise ValueError(f"dense grid size {G} is smaller than the curve grid ({len(curve.grid)})")
    t, s, d = _convolve_rows(np.asarray(curve.values, dtype=float)[None, :], curve.grid.values, h, G)
    return SmoothCurve(curve.id, t, s[0], d[0], float(h))


def smooth_bundle(bundle: IceBundle, h: float | None = None, G: int = DEFAULT_G) -> SmoothBundle:
    """Apply :func:`gaussian_convolve` to every curve of ``bundle``."""
    h = default_bandwidth(bundle.grid) if h is None else float(h)
    if not h > 0:
        raise ValueError(f"bandwidth must be positive, got {h}")
    if G < len(bundle.grid):
        raise ValueError(f"dense grid size {G} is smaller than the curve grid ({len(bundle.grid)})")
    t, s, d = _convolve_rows(bundle.values, bundle.grid.values, h, G)
    return SmoothBundle(bundle.feature, bundle.ids.copy(), t, s, d, h)


def write_smooth_bundle(bundle: SmoothBundle, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "grid_value", "prediction", "derivative"])
        for i, vals, ders in zip(bundle.ids, bundle.values, bundle.derivatives):
            for t, v, d in zip(bundle.t, vals, ders):
                w.writerow([int(i), repr(float(t)), repr(float(v)), repr(float(d))])


def read_smooth_bundle(path: str | Path, feature: str, h: float) -> SmoothBundle:
    rows: dict[int, list[tuple[float, float, float]]] = {}
    with Path(path).open(newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.setdefault(int(rec["id"]), []).append(
                (float(rec["grid_value"]), float(rec["prediction"]), float(rec["derivative"]))
            )
    if not rows:
        raise ValueError(f"{path}: no curves")
    ids = list(rows)
    t = np.array([r[0] for r in rows[ids[0]]])
    values = np.array([[r[1] for r in rows[i]] for i in ids])
    derivs = np.array([[r[2] for r in rows[i]] for i in ids])
    return SmoothBundle(feature, np.array(ids), t, values, derivs, float(h))
