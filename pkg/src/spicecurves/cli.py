"""Command-line entry point.

Exit codes: 0 success, 1 invalid configuration or input, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import clustgeo, fdmetrics, render
from .config import ConfigError, PipelineConfig
from .data import DataError
from .ice import read_bundle
from .pipeline import PipelineError, read_coords, run_cluster_only, run_ice_only, run_pipeline
from .smoothing import SmoothCurve

FLAG_KEYS = {
    "data": "data.path",
    "feature": "ice.feature",
    "predictor": "predictor.kind",
    "external_cmd": "predictor.external_cmd",
    "k_min": "cluster.k_min",
    "k_max": "cluster.k_max",
    "alpha_grid": "cluster.alpha_grid",
    "seed": "run.seed",
    "out": "output.dir",
    "workers": "run.workers",
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key = value configuration file")
    p.add_argument("--data", help="input CSV (data.path)")
    p.add_argument("--feature", help="feature to sweep (ice.feature)")
    p.add_argument("--predictor", choices=["knn", "linear", "external"])
    p.add_argument("--external-cmd", help="command serving the external model")
    p.add_argument("--k-min", type=int)
    p.add_argument("--k-max", type=int)
    p.add_argument("--alpha-grid", help='comma-separated, e.g. "0,0.1,...,1"')
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--workers", type=int, help="threads for prediction batches and alpha traces")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any configuration key")


def _overrides(args) -> dict[str, str]:
    out = {}
    for attr, key in FLAG_KEYS.items():
        value = getattr(args, attr, None)
        if value is not None:
            out[key] = str(value)
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _config(args) -> PipelineConfig:
    return PipelineConfig.load(args.config, _overrides(args))


def cmd_pipeline(args) -> None:
    result = run_pipeline(_config(args))
    print(f"artifacts written to {result.out_dir} (alpha={result.cluster.alpha:g})")


def cmd_ice(args) -> None:
    result = run_ice_only(_config(args))
    print(f"ICE artifacts written to {result.out_dir}")


def cmd_cluster(args) -> None:
    result = run_cluster_only(_config(args), args.source)
    print(f"cluster artifacts written to {result.out_dir} (alpha={result.cluster.alpha:g})")


def cmd_choose_alpha(args) -> None:
    D0 = fdmetrics.read_matrix(args.d0, "curves")
    D1 = fdmetrics.read_matrix(args.d1, "spatial")
    grid = tuple(float(v) for v in args.alpha_grid.split(","))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for K in range(args.k_min, args.k_max + 1):
        report = clustgeo.choose_alpha(D0, D1, None, K, grid)
        clustgeo.write_alpha_report(report, out / f"alpha_report_K{K}.csv")
        (out / f"alpha_K{K}.svg").write_text(render.render_alpha_svg(report))
        print(f"K={K}: recommended alpha {report.recommended:g}")


def _read_spice_curves(path: Path) -> list[SmoothCurve]:
    by_label: dict[int, list[tuple[float, float, float]]] = {}
    with path.open(newline="") as fh:
        for r in csv.DictReader(fh):
            by_label.setdefault(int(r["label"]), []).append(
                (float(r["grid_value"]), float(r["value"]), float(r["derivative"]))
            )
    return [
        SmoothCurve(k, np.array([p[0] for p in pts]), np.array([p[1] for p in pts]), np.array([p[2] for p in pts]), 1.0)
        for k, pts in sorted(by_label.items())
    ]


def cmd_plot(args) -> None:
    """Re-render every figure from a run directory's persisted artifacts."""
    src = Path(args.source)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    feature = args.feature
    manifest = src / "manifest.json"
    if feature is None and manifest.exists():
        feature = json.loads(manifest.read_text())["config"].get("ice.feature")
    feature = feature or "x"
    written = []
    if (src / "ice_bundle.csv").exists():
        bundle = read_bundle(src / "ice_bundle.csv", feature)
        with (src / "pd_curve.csv").open(newline="") as fh:
            pd = np.array([float(r["pd"]) for r in csv.DictReader(fh)])
        ids, coords, strata = read_coords(src / "coords.csv")
        (out / "ice.svg").write_text(render.render_ice_svg(bundle, pd, strata))
        written.append("ice.svg")
    for report_path in sorted(src.glob("alpha_report_K*.csv")):
        K = int(report_path.stem.rsplit("K", 1)[1])
        (out / f"alpha_K{K}.svg").write_text(render.render_alpha_svg(clustgeo.read_alpha_report(report_path, K)))
        written.append(f"alpha_K{K}.svg")
    for part_path in sorted(src.glob("partition_K*.csv")):
        K = int(part_path.stem.rsplit("K", 1)[1])
        ids, part = clustgeo.read_partition(part_path)
        cid, coords, _ = read_coords(src / "coords.csv")
        lookup = {int(i): c for i, c in zip(cid, coords)}
        xy = np.array([lookup[int(i)] for i in ids])
        curves = _read_spice_curves(src / f"spice_curves_K{K}.csv")
        (out / f"spice_K{K}.svg").write_text(render.render_spice_svg(part, curves, xy, feature))
        written.append(f"spice_K{K}.svg")
    if not written:
        raise DataError(f"{src}: no artifacts to plot")
    print(f"wrote {', '.join(written)} to {out}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spice", description="ICE curves and spatially constrained clustering (SpICE).")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pipeline", help="run every stage end to end")
    _add_config_flags(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("ice", help="fit the predictor and compute ICE curves")
    _add_config_flags(p)
    p.set_defaults(func=cmd_ice)

    p = sub.add_parser("cluster", help="smooth, compare and cluster a persisted ICE bundle")
    _add_config_flags(p)
    p.add_argument("--from", dest="source", type=Path, required=True, help="directory holding ice_bundle.csv and coords.csv")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("choose-alpha", help="alpha traces from persisted D0/D1 matrices")
    p.add_argument("--d0", type=Path, required=True)
    p.add_argument("--d1", type=Path, required=True)
    p.add_argument("--k-min", type=int, default=3)
    p.add_argument("--k-max", type=int, default=5)
    p.add_argument("--alpha-grid", default="0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1")
    p.add_argument("--out", default="alpha_out")
    p.set_defaults(func=cmd_choose_alpha)

    p = sub.add_parser("plot", help="re-render figures from a run directory")
    p.add_argument("--from", dest="source", type=Path, required=True)
    p.add_argument("--feature")
    p.add_argument("--out", default="plots")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ConfigError, DataError, clustgeo.ClusteringError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1 if isinstance(exc.cause, (DataError, ConfigError, FileNotFoundError)) else 2
    except (OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
