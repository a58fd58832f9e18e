"""Deterministic SVG figures: ICE plot, SpICE map + curves, alpha traces."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666")
DASHES = ("", "6,3", "2,2", "8,3,2,3")

WIDTH, HEIGHT = 720, 480
MARGIN = dict(left=70, right=20, top=30, bottom=50)


def cluster_style(label: int) -> tuple[str, str]:
    """(color, dash pattern) for a 1-based cluster label; dashes kick in past 8 clusters."""
    k = label - 1
    return PALETTE[k % len(PALETTE)], DASHES[(k // len(PALETTE)) % len(DASHES)]


def _fmt(x: float) -> str:
    s = f"{x:.2f}"
    return "0.00" if s == "-0.00" else s


def nice_ticks(lo: float, hi: float, target: int = 5) -> list[float]:
    if not hi > lo:
        return [lo]
    raw = (hi - lo) / target
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 5, 10) if m * mag >= raw)
    start = math.ceil(lo / step - 1e-9) * step
    ticks = []
    v = start
    while v <= hi + 1e-9 * step:
        ticks.append(round(v, 12))
        v += step
    return ticks


def _tick_label(v: float) -> str:
    return f"{v:.6g}"


class _Panel:
    """Maps data coordinates into a pixel rectangle and draws axes."""

    def __init__(self, x0, y0, w, h, xlim, ylim):
        self.x0, self.y0, self.w, self.h = x0, y0, w, h
        self.xlim = self._pad(xlim)
        self.ylim = self._pad(ylim)

    @staticmethod
    def _pad(lim):
        lo, hi = float(lim[0]), float(lim[1])
        if hi <= lo:
            lo, hi = lo - 0.5, hi + 0.5
        return lo, hi

    def x(self, v):
        lo, hi = self.xlim
        return self.x0 + (np.asarray(v, dtype=float) - lo) / (hi - lo) * self.w

    def y(self, v):
        lo, hi = self.ylim
        return self.y0 + self.h - (np.asarray(v, dtype=float) - lo) / (hi - lo) * self.h

    def points(self, xs, ys) -> str:
        return " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(self.x(xs), self.y(ys)))

    def axes(self, xlabel: str, ylabel: str) -> list[str]:
        x0, y0, w, h = self.x0, self.y0, self.w, self.h
        out = [
            f'<line class="axis" x1="{_fmt(x0)}" y1="{_fmt(y0 + h)}" x2="{_fmt(x0 + w)}" y2="{_fmt(y0 + h)}" stroke="black"/>',
            f'<line class="axis" x1="{_fmt(x0)}" y1="{_fmt(y0)}" x2="{_fmt(x0)}" y2="{_fmt(y0 + h)}" stroke="black"/>',
        ]
        for t in nice_ticks(*self.xlim):
            px = self.x(t)
            out.append(f'<line class="tick" x1="{_fmt(px)}" y1="{_fmt(y0 + h)}" x2="{_fmt(px)}" y2="{_fmt(y0 + h + 5)}" stroke="black"/>')
            out.append(f'<text x="{_fmt(px)}" y="{_fmt(y0 + h + 18)}" font-size="11" text-anchor="middle">{_tick_label(t)}</text>')
        for t in nice_ticks(*self.ylim):
            py = self.y(t)
            out.append(f'<line class="tick" x1="{_fmt(x0 - 5)}" y1="{_fmt(py)}" x2="{_fmt(x0)}" y2="{_fmt(py)}" stroke="black"/>')
            out.append(f'<text x="{_fmt(x0 - 8)}" y="{_fmt(py + 4)}" font-size="11" text-anchor="end">{_tick_label(t)}</text>')
        out.append(f'<text x="{_fmt(x0 + w / 2)}" y="{_fmt(y0 + h + 38)}" font-size="13" text-anchor="middle">{escape(xlabel)}</text>')
        cy = y0 + h / 2
        out.append(
            f'<text x="{_fmt(x0 - 52)}" y="{_fmt(cy)}" font-size="13" text-anchor="middle" '
            f'transform="rotate(-90 {_fmt(x0 - 52)} {_fmt(cy)})">{escape(ylabel)}</text>'
        )
        return out


def _document(width: int, height: int, body: list[str], title: str) -> str:
    head = (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">\n'
        f"<title>{escape(title)}</title>\n"
        f'<rect width="{width}" height="{height}" fill="white"/>\n'
    )
    return head + "\n".join(body) + "\n</svg>\n"


def render_ice_svg(bundle, pd, strata_labels=None, ylabel: str = "prediction") -> str:
    """One translucent polyline per ICE curve with the PD curve drawn on top.

    ``strata_labels`` (one per curve) colours curves by stratum.
    """
    if len(bundle.ids) == 0:
        raise ValueError("cannot render an empty bundle")
    x = bundle.grid.values
    values = np.asarray(bundle.values)
    pd = np.asarray(pd, dtype=float)
    ylim = (min(values.min(), pd.min()), max(values.max(), pd.max()))
    panel = _Panel(MARGIN["left"], MARGIN["top"], WIDTH - MARGIN["left"] - MARGIN["right"],
                   HEIGHT - MARGIN["top"] - MARGIN["bottom"], (x[0], x[-1]), ylim)
    body = panel.axes(bundle.feature, ylabel)
    for pos in range(len(values)):
        color = PALETTE[int(strata_labels[pos]) % len(PALETTE)] if strata_labels is not None else "#4c72b0"
        body.append(
            f'<polyline class="ice" fill="none" stroke="{color}" stroke-opacity="0.3" stroke-width="1" '
            f'points="{panel.points(x, values[pos])}"/>'
        )
    body.append(f'<polyline class="pd" fill="none" stroke="black" stroke-width="3" points="{panel.points(x, pd)}"/>')
    return _document(WIDTH, HEIGHT, body, f"ICE curves for {bundle.feature}")


def render_spice_svg(partition, cluster_curves, coords, feature: str = "x", ylabel: str = "prediction") -> str:
    """Map of observations coloured by cluster above the per-cluster mean curves."""
    coords = np.asarray(coords, dtype=float)
    if len(coords) != partition.n:
        raise ValueError(f"{len(coords)} coordinates for {partition.n} observations")
    height = 2 * HEIGHT
    lat, lon = coords[:, 0], coords[:, 1]
    inner_w = WIDTH - MARGIN["left"] - MARGIN["right"] - 150
    inner_h = HEIGHT - MARGIN["top"] - MARGIN["bottom"]
    top = _Panel(MARGIN["left"], MARGIN["top"], inner_w, inner_h, (lon.min(), lon.max()), (lat.min(), lat.max()))
    body = top.axes("longitude", "latitude")
    px, py = top.x(lon), top.y(lat)
    for i, label in enumerate(partition.labels):
        color, _ = cluster_style(int(label))
        body.append(f'<circle class="site c{int(label)}" cx="{_fmt(px[i])}" cy="{_fmt(py[i])}" r="2.5" fill="{color}"/>')

    t = cluster_curves[0].t
    all_vals = np.concatenate([c.values for c in cluster_curves])
    bottom = _Panel(MARGIN["left"], HEIGHT + MARGIN["top"], inner_w, inner_h, (t[0], t[-1]), (all_vals.min(), all_vals.max()))
    body += bottom.axes(feature, ylabel)
    for curve in cluster_curves:
        color, dash = cluster_style(int(curve.id))
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        body.append(
            f'<polyline class="spice c{int(curve.id)}" fill="none" stroke="{color}" stroke-width="2.5"{dash_attr} '
            f'points="{bottom.points(curve.t, curve.values)}"/>'
        )

    lx = MARGIN["left"] + inner_w + 20
    for k, size in enumerate(partition.sizes, start=1):
        color, _ = cluster_style(k)
        ly = MARGIN["top"] + 20 * k
        body.append(f'<rect class="legend" x="{lx}" y="{ly - 10}" width="12" height="12" fill="{color}"/>')
        body.append(f'<text x="{lx + 18}" y="{ly}" font-size="12">cluster {k} (n={size})</text>')
    return _document(WIDTH, height, body, "SpICE curves and cluster locations")


def render_alpha_svg(report) -> str:
    """Q0 and Q1 against alpha, recommended alpha marked by a vertical rule."""
    alphas = np.asarray(report.alphas, dtype=float)
    if len(alphas) == 0:
        raise ValueError("empty alpha report")
    q0 = np.asarray(report.q0, dtype=float)
    q1 = np.asarray(report.q1, dtype=float)
    finite = np.concatenate([q0[np.isfinite(q0)], q1[np.isfinite(q1)]])
    ylim = (min(0.0, finite.min(initial=0.0)), max(1.0, finite.max(initial=1.0)))
    panel = _Panel(MARGIN["left"], MARGIN["top"], WIDTH - MARGIN["left"] - MARGIN["right"] - 120,
                   HEIGHT - MARGIN["top"] - MARGIN["bottom"], (0.0, 1.0), ylim)
    body = panel.axes("alpha", f"explained inertia (K={report.K})")
    for name, q, color in (("q0", q0, PALETTE[0]), ("q1", q1, PALETTE[1])):
        ok = np.isfinite(q)
        body.append(f'<polyline class="{name}" fill="none" stroke="{color}" stroke-width="2" points="{panel.points(alphas[ok], q[ok])}"/>')
        for a, v in zip(alphas[ok], q[ok]):
            body.append(f'<circle class="{name}-marker" cx="{_fmt(panel.x(a))}" cy="{_fmt(panel.y(v))}" r="3.5" fill="{color}"/>')
    rx = panel.x(report.recommended)
    body.append(
        f'<line class="recommended" x1="{_fmt(rx)}" y1="{_fmt(panel.y0)}" x2="{_fmt(rx)}" y2="{_fmt(panel.y0 + panel.h)}" '
        'stroke="black" stroke-dasharray="4,3"/>'
    )
    lx = panel.x0 + panel.w + 15
    for row, (label, color) in enumerate((("Q0 (curves)", PALETTE[0]), ("Q1 (space)", PALETTE[1]))):
        ly = MARGIN["top"] + 20 * (row + 1)
        body.append(f'<rect class="legend" x="{_fmt(lx)}" y="{ly - 10}" width="12" height="12" fill="{color}"/>')
        body.append(f'<text x="{_fmt(lx + 18)}" y="{ly}" font-size="12">{escape(label)}</text>')
    body.append(f'<text x="{_fmt(lx)}" y="{MARGIN["top"] + 70}" font-size="12">alpha* = {report.recommended:g}</text>')
    return _document(WIDTH, HEIGHT, body, "Explained inertia against alpha")
