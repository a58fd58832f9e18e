import re
import time
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from spicecurves.clustgeo import AlphaReport, Partition
from spicecurves.data import FeatureGrid
from spicecurves.ice import IceBundle, pd_curve
from spicecurves.render import PALETTE, cluster_style, nice_ticks, render_alpha_svg, render_ice_svg, render_spice_svg
from spicecurves.smoothing import SmoothCurve

NS = {"s": "http://www.w3.org/2000/svg"}


def bundle(m, M=10, seed=0):
    rng = np.random.default_rng(seed)
    return IceBundle("lsup", FeatureGrid("lsup", np.linspace(3, 5, M)), np.arange(m), rng.normal(size=(m, M)))


def parse(svg):
    return ET.fromstring(svg.encode())


def by_class(root, tag, cls):
    return [e for e in root.iter(f"{{{NS['s']}}}{tag}") if cls in e.get("class", "").split()]


def report(recommended=0.5, q0=None, q1=None):
    alphas = tuple(round(0.1 * i, 1) for i in range(11))
    q0 = q0 or tuple(1 - a / 2 for a in alphas)
    q1 = q1 or tuple(a / 2 + 0.2 for a in alphas)
    return AlphaReport(4, alphas, q0, q1, recommended)


class TestIce:
    def test_two_curves_three_polylines(self):
        b = bundle(2)
        root = parse(render_ice_svg(b, pd_curve(b)))
        polylines = list(root.iter(f"{{{NS['s']}}}polyline"))
        assert len(polylines) == 3
        assert [p.get("stroke-opacity") for p in by_class(root, "polyline", "ice")] == ["0.3", "0.3"]
        (pd,) = by_class(root, "polyline", "pd")
        assert float(pd.get("stroke-width")) > 1

    def test_ticks_present(self):
        b = bundle(3)
        svg = render_ice_svg(b, pd_curve(b))
        assert svg.count('class="tick') >= 4

    def test_empty(self):
        empty = IceBundle("x", FeatureGrid("x", np.array([0.0, 1.0])), np.array([], dtype=int), np.zeros((0, 2)))
        with pytest.raises(ValueError):
            render_ice_svg(empty, np.zeros(2))

    def test_deterministic(self):
        b = bundle(20)
        strata = np.arange(20) % 10
        assert render_ice_svg(b, pd_curve(b), strata) == render_ice_svg(b, pd_curve(b), strata)

    def test_large_bundle_budget(self):
        b = bundle(5000, M=50)
        start = time.perf_counter()
        svg = render_ice_svg(b, pd_curve(b), np.arange(5000) % 10)
        elapsed = time.perf_counter() - start
        assert elapsed < 5.0
        assert len(svg.encode()) < 20 * 1024 * 1024
        parse(svg)


class TestSpice:
    def _curves(self, K, G=21):
        t = np.linspace(0, 1, G)
        return [SmoothCurve(k, t, k * t, np.full(G, float(k)), 0.1) for k in range(1, K + 1)]

    def test_single_cluster(self, rng):
        part = Partition(np.ones(12, dtype=int))
        root = parse(render_spice_svg(part, self._curves(1), rng.normal(size=(12, 2))))
        sites = by_class(root, "circle", "site")
        assert len(sites) == 12 and len({s.get("fill") for s in sites}) == 1
        assert len(by_class(root, "polyline", "spice")) == 1

    def test_four_clusters_consistent_colours(self, rng):
        labels = np.repeat([1, 2, 3, 4], 5)
        part = Partition(labels)
        root = parse(render_spice_svg(part, self._curves(4), rng.normal(size=(20, 2))))
        for k in range(1, 5):
            site_colours = {s.get("fill") for s in by_class(root, "circle", f"c{k}")}
            (curve,) = by_class(root, "polyline", f"c{k}")
            assert site_colours == {curve.get("stroke")} == {PALETTE[k - 1]}
        texts = [t.text for t in root.iter(f"{{{NS['s']}}}text") if t.text and "cluster" in t.text]
        assert texts == [f"cluster {k} (n=5)" for k in range(1, 5)]

    def test_deterministic(self, rng):
        part = Partition(np.array([1, 2, 2, 1, 3]))
        xy = rng.normal(size=(5, 2))
        assert render_spice_svg(part, self._curves(3), xy) == render_spice_svg(part, self._curves(3), xy)

    def test_coords_length(self):
        with pytest.raises(ValueError):
            render_spice_svg(Partition(np.array([1, 1])), self._curves(1), np.zeros((3, 2)))

    def test_palette_cycles_with_dashes(self):
        assert cluster_style(1) == (PALETTE[0], "")
        colour, dash = cluster_style(9)
        assert colour == PALETTE[0] and dash != ""


class TestAlpha:
    def test_markers_and_rule(self):
        root = parse(render_alpha_svg(report()))
        assert len(by_class(root, "circle", "q0-marker")) == 11
        assert len(by_class(root, "circle", "q1-marker")) == 11
        xs = [float(c.get("cx")) for c in by_class(root, "circle", "q0-marker")]
        (rule,) = by_class(root, "line", "recommended")
        assert float(rule.get("x1")) == pytest.approx((xs[0] + xs[-1]) / 2, abs=0.01)

    def test_coincident_traces_overlap(self):
        q = tuple(np.linspace(0.2, 0.8, 11))
        root = parse(render_alpha_svg(report(0.0, q, q)))
        (a,) = by_class(root, "polyline", "q0")
        (b,) = by_class(root, "polyline", "q1")
        assert a.get("points") == b.get("points")

    def test_nan_points_skipped(self):
        q1 = (float("nan"),) * 11
        root = parse(render_alpha_svg(report(0.0, None, q1)))
        assert len(by_class(root, "circle", "q1-marker")) == 0


def test_nice_ticks():
    ticks = nice_ticks(0.0, 1.0)
    assert ticks[0] >= 0.0 and ticks[-1] <= 1.0 and len(ticks) >= 3
    steps = np.diff(ticks)
    assert np.allclose(steps, steps[0])
