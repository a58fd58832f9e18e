"""End-to-end orchestration and artifact persistence.

Stages run in dependency order and write into a staging directory next to
the requested output directory. The staging directory replaces the output
only after every stage succeeds, so a failed run leaves no partial files.
"""

from __future__ import annotations

import contextlib
import csv
import hashlib
import json
import logging
import os
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import clustgeo, fdmetrics, render
from .config import ConfigError, PipelineConfig
from .data import Dataset, build_grid, load_dataset, response_strata, stratified_sample, train_test_split
from .ice import IceBundle, pd_curve, read_bundle, ice_curves, write_bundle
from .predictor import evaluate, external_predictor, knn_fit, linear_fit
from .smoothing import smooth_bundle, write_smooth_bundle

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


@contextlib.contextmanager
def stage(name: str):
    logger.info("stage %s", name)
    try:
        yield
    except (PipelineError, ConfigError):
        raise
    except Exception as exc:
        raise PipelineError(name, exc) from exc


@dataclass
class IceStageResult:
    dataset: Dataset
    rows: np.ndarray
    bundle: IceBundle
    pd: np.ndarray
    strata: np.ndarray
    metrics: dict | None


@dataclass
class ClusterStageResult:
    ids: np.ndarray
    alpha: float
    reports: dict[int, clustgeo.AlphaReport]
    partitions: dict[int, clustgeo.Partition]
    spice: dict[int, list] = field(default_factory=dict)


@dataclass
class PipelineResult:
    out_dir: Path
    ice: IceStageResult | None
    cluster: ClusterStageResult | None
    manifest: dict


def _apply_filters(dataset: Dataset, filters: dict[str, tuple[float, float]]) -> Dataset:
    if not filters:
        return dataset
    keep = np.ones(dataset.n, dtype=bool)
    for col, (lo, hi) in filters.items():
        v = dataset.columns[col]
        keep &= (v >= lo) & (v <= hi)
    logger.info("filters removed %d of %d rows", int((~keep).sum()), dataset.n)
    return dataset.take(np.flatnonzero(keep))


def _make_predictor(cfg: PipelineConfig, train: Dataset):
    if cfg.predictor_kind == "knn":
        return knn_fit(train, min(cfg.knn_k, train.n))
    if cfg.predictor_kind == "linear":
        return linear_fit(train)
    return external_predictor(cfg.external_cmd, train.categorical_levels())


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def run_ice_stage(cfg: PipelineConfig, out: Path) -> IceStageResult:
    with stage("load"):
        dataset = _apply_filters(load_dataset(cfg.data_path, cfg.schema), cfg.filters)
    predictor = None
    try:
        metrics = None
        with stage("predictor"):
            if cfg.train_fraction > 0:
                train, test = train_test_split(dataset, cfg.train_fraction, cfg.seed)
            else:
                train, test = dataset, None
            predictor = _make_predictor(cfg, train)
            if test is not None:
                m = evaluate(test.response, predictor.predict(test.feature_matrix()), cfg.response_is_log)
                metrics = {"predictor": predictor.name, "n_train": train.n, "n_test": test.n, **m.as_dict()}
        with stage("sample"):
            total = min(cfg.sample_total, dataset.n)
            if total < cfg.sample_total:
                logger.info("sample.total=%d exceeds %d rows; using all rows", cfg.sample_total, dataset.n)
            rows = stratified_sample(dataset, cfg.strata, total, cfg.seed)
            strata = response_strata(dataset.response, min(cfg.strata, dataset.n))[rows]
        with stage("ice"):
            grid = build_grid(dataset, cfg.feature, cfg.grid_M, cfg.grid_strategy)
            bundle = ice_curves(predictor, dataset, cfg.feature, grid, rows, workers=cfg.workers)
            pd = pd_curve(bundle)
    finally:
        if predictor is not None and hasattr(predictor, "close"):
            predictor.close()

    with stage("write-ice"):
        write_bundle(bundle, out / "ice_bundle.csv")
        _write_csv(out / "pd_curve.csv", ["grid_value", "pd"], ((repr(float(g)), repr(float(v))) for g, v in zip(grid.values, pd)))
        coords = dataset.coords[rows]
        _write_csv(
            out / "coords.csv",
            ["id", "lat", "long", "stratum"],
            ((int(i), repr(float(a)), repr(float(b)), int(s)) for i, (a, b), s in zip(rows, coords, strata)),
        )
        _write_json(out / "metrics.json", metrics if metrics is not None else {"evaluated": False})
        (out / "ice.svg").write_text(render.render_ice_svg(bundle, pd, strata, ylabel=cfg.schema.response))
    return IceStageResult(dataset, rows, bundle, pd, strata, metrics)


def run_cluster_stage(cfg: PipelineConfig, bundle: IceBundle, coords: np.ndarray, out: Path, ylabel: str = "prediction") -> ClusterStageResult:
    n = len(bundle)
    cfg.validate(n)
    with stage("smooth"):
        smooth = smooth_bundle(bundle, cfg.bandwidth, cfg.dense_G)
        write_smooth_bundle(smooth, out / "smooth_bundle.csv")
    with stage("dissimilarity"):
        D0 = fdmetrics.normalize(fdmetrics.curve_dissimilarity_matrix(smooth))
        D1 = fdmetrics.normalize(fdmetrics.spatial_dissimilarity_matrix(coords, cfg.spatial_metric))
        fdmetrics.write_matrix(D0, out / "d0.csv")
        fdmetrics.write_matrix(D1, out / "d1.csv")
    weights = clustgeo.uniform_weights(n)
    reports: dict[int, clustgeo.AlphaReport] = {}
    dendrograms: dict[float, clustgeo.Dendrogram] = {}
    with stage("choose-alpha"):
        for K in cfg.k_range:
            reports[K] = clustgeo.choose_alpha(D0, D1, weights, K, cfg.alpha_grid, cfg.workers, dendrograms)
            clustgeo.write_alpha_report(reports[K], out / f"alpha_report_K{K}.csv")
            (out / f"alpha_K{K}.svg").write_text(render.render_alpha_svg(reports[K]))
    alpha = cfg.alpha if cfg.alpha is not None else reports[cfg.k_final].recommended
    partitions: dict[int, clustgeo.Partition] = {}
    spice: dict[int, list] = {}
    with stage("cluster"):
        dendrogram = dendrograms.get(alpha) or clustgeo.ward_cluster(D0, D1, alpha, weights)
        clustgeo.write_dendrogram(dendrogram, out / "dendrogram.csv")
        for K in cfg.k_range:
            part = clustgeo.cut(dendrogram, K)
            partitions[K] = part
            spice[K] = clustgeo.spice_curves(part, smooth, weights)
            clustgeo.write_partition(part, out / f"partition_K{K}.csv", bundle.ids)
            _write_csv(
                out / f"spice_curves_K{K}.csv",
                ["label", "grid_value", "value", "derivative"],
                (
                    (c.id, repr(float(t)), repr(float(v)), repr(float(d)))
                    for c in spice[K]
                    for t, v, d in zip(c.t, c.values, c.derivative)
                ),
            )
            (out / f"spice_K{K}.svg").write_text(
                render.render_spice_svg(part, spice[K], coords, bundle.feature, ylabel)
            )
    return ClusterStageResult(bundle.ids, float(alpha), reports, partitions, spice)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, cfg: PipelineConfig, extra: dict) -> dict:
    files = sorted(p for p in out.rglob("*") if p.is_file() and p.name != MANIFEST)
    manifest = {
        "config": cfg.resolved(),
        **extra,
        "artifacts": [{"path": p.relative_to(out).as_posix(), "sha256": _sha256(p), "bytes": p.stat().st_size} for p in files],
    }
    _write_json(out / MANIFEST, manifest)
    return manifest


@contextlib.contextmanager
def staged_output(out: Path):
    """Yield a scratch directory that atomically becomes ``out`` on success."""
    out = Path(out)
    if out.exists() and (not out.is_dir() or (any(out.iterdir()) and not (out / MANIFEST).exists())):
        raise ConfigError(f"output directory {out} exists and does not hold a previous run; refusing to overwrite")
    out.parent.mkdir(parents=True, exist_ok=True)
    scratch = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    try:
        yield scratch
    except BaseException:
        shutil.rmtree(scratch, ignore_errors=True)
        raise
    if out.exists():
        shutil.rmtree(out)
    os.replace(scratch, out)


def run_pipeline(cfg: PipelineConfig, out: Path | None = None) -> PipelineResult:
    """Run every stage and write artifacts plus a manifest with content hashes."""
    out = Path(out) if out is not None else cfg.out_dir
    with staged_output(out) as scratch:
        ice = run_ice_stage(cfg, scratch)
        cluster = run_cluster_stage(cfg, ice.bundle, ice.dataset.coords[ice.rows], scratch, cfg.schema.response)
        extra = {
            "n_rows": ice.dataset.n,
            "n_curves": len(ice.rows),
            "alpha": cluster.alpha,
            "recommended_alpha": {str(K): r.recommended for K, r in cluster.reports.items()},
            "cluster_sizes": {str(K): p.sizes for K, p in cluster.partitions.items()},
        }
        manifest = write_manifest(scratch, cfg, extra)
    return PipelineResult(out, ice, cluster, manifest)


def run_ice_only(cfg: PipelineConfig, out: Path | None = None) -> PipelineResult:
    out = Path(out) if out is not None else cfg.out_dir
    with staged_output(out) as scratch:
        ice = run_ice_stage(cfg, scratch)
        manifest = write_manifest(scratch, cfg, {"n_rows": ice.dataset.n, "n_curves": len(ice.rows)})
    return PipelineResult(out, ice, None, manifest)


def read_coords(path: Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """ids, (lat, long) and stratum columns of a ``coords.csv`` artifact."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    ids = np.array([int(r["id"]) for r in rows])
    coords = np.array([[float(r["lat"]), float(r["long"])] for r in rows]).reshape(-1, 2)
    strata = np.array([int(r.get("stratum") or 0) for r in rows])
    return ids, coords, strata


def run_cluster_only(cfg: PipelineConfig, source: Path, out: Path | None = None) -> PipelineResult:
    """Cluster a persisted ICE bundle (``ice_bundle.csv`` + ``coords.csv`` in ``source``)."""
    source = Path(source)
    out = Path(out) if out is not None else cfg.out_dir
    with stage("load-artifacts"):
        bundle = read_bundle(source / "ice_bundle.csv", cfg.feature, cfg.grid_strategy)
        ids, coords, _ = read_coords(source / "coords.csv")
        if not np.array_equal(ids, bundle.ids):
            raise ValueError("coords.csv ids do not match the bundle")
    with staged_output(out) as scratch:
        cluster = run_cluster_stage(cfg, bundle, coords, scratch, cfg.schema.response)
        extra = {
            "n_curves": len(bundle),
            "alpha": cluster.alpha,
            "recommended_alpha": {str(K): r.recommended for K, r in cluster.reports.items()},
            "cluster_sizes": {str(K): p.sizes for K, p in cluster.partitions.items()},
        }
        manifest = write_manifest(scratch, cfg, extra)
    return PipelineResult(out, None, cluster, manifest)
