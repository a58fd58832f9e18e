import hashlib
import json
import sys
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from sklearn.metrics import adjusted_rand_score

from spicecurves import cli
from spicecurves.clustgeo import read_partition
from spicecurves.config import ConfigError, PipelineConfig
from spicecurves.pipeline import PipelineError, run_pipeline
from spicecurves.synthetic import write_two_region

CONFIG = """\
data.path = data.csv
data.features = lsup, rooms, zone:categorical
data.response = lprice
ice.feature = lsup
grid.M = 20
sample.total = 200
smooth.G = 101
cluster.k_min = 2
cluster.k_max = 3
cluster.k = 2
"""


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("syn")
    truth = write_two_region(d / "data.csv", n=200, seed=11)
    (d / "cfg.txt").write_text(CONFIG)
    (d / "region.npy").write_bytes(np.asarray(truth["region"]).tobytes())
    return d


def run_cli(*args):
    return cli.main([str(a) for a in args])


def listed(out):
    manifest = json.loads((out / "manifest.json").read_text())
    return manifest, {a["path"] for a in manifest["artifacts"]}


@pytest.fixture(scope="module")
def run_dir(workdir):
    out = workdir / "run_a"
    assert run_cli("pipeline", "--config", workdir / "cfg.txt", "--out", out) == 0
    return out


class TestPipeline:
    def test_completeness(self, run_dir):
        manifest, paths = listed(run_dir)
        on_disk = {p.relative_to(run_dir).as_posix() for p in run_dir.rglob("*") if p.is_file()}
        assert on_disk == paths | {"manifest.json"}
        for a in manifest["artifacts"]:
            data = (run_dir / a["path"]).read_bytes()
            assert hashlib.sha256(data).hexdigest() == a["sha256"] and len(data) == a["bytes"]
        expected = {
            "ice_bundle.csv", "pd_curve.csv", "coords.csv", "metrics.json", "ice.svg", "smooth_bundle.csv",
            "d0.csv", "d1.csv", "dendrogram.csv",
        }
        for K in (2, 3):
            expected |= {f"alpha_report_K{K}.csv", f"alpha_K{K}.svg", f"partition_K{K}.csv",
                         f"spice_curves_K{K}.csv", f"spice_K{K}.svg"}
        assert paths == expected

    def test_svgs_well_formed(self, run_dir):
        for p in run_dir.glob("*.svg"):
            ET.parse(p)

    def test_metrics(self, run_dir):
        m = json.loads((run_dir / "metrics.json").read_text())
        assert m["n_train"] == 133 and m["n_test"] == 67
        assert m["rmse"] >= 0 and m["r2"] <= 1

    def test_deterministic_across_runs_and_workers(self, workdir, run_dir):
        out = workdir / "run_b"
        assert run_cli("pipeline", "--config", workdir / "cfg.txt", "--out", out, "--workers", 4) == 0
        assert (out / "manifest.json").read_bytes() == (run_dir / "manifest.json").read_bytes()

    def test_rerun_replaces_previous(self, workdir, run_dir):
        out = workdir / "run_c"
        for _ in range(2):
            assert run_cli("pipeline", "--config", workdir / "cfg.txt", "--out", out) == 0
        assert (out / "manifest.json").read_bytes() == (run_dir / "manifest.json").read_bytes()

    def test_recovers_regions(self, workdir, run_dir):
        region = np.frombuffer((workdir / "region.npy").read_bytes(), dtype=int)
        ids, part = read_partition(run_dir / "partition_K2.csv")
        assert adjusted_rand_score(region[ids], part.labels) > 0.8

    def test_failure_leaves_nothing(self, workdir):
        out = workdir / "run_fail"
        code = run_cli("pipeline", "--config", workdir / "cfg.txt", "--out", out, "--set", "ice.feature=rooms",
                       "--set", "grid.M=2", "--set", "filter.min.rooms=2", "--set", "filter.max.rooms=2")
        assert code == 1
        assert not out.exists()
        assert not list(workdir.glob(".run_fail.*"))

    def test_refuses_foreign_directory(self, workdir):
        out = workdir / "foreign"
        out.mkdir()
        (out / "keep.txt").write_text("mine")
        assert run_cli("pipeline", "--config", workdir / "cfg.txt", "--out", out) == 1
        assert (out / "keep.txt").read_text() == "mine"

    def test_reference_setup_config(self, workdir):
        out = workdir / "reference"
        code = run_cli(
            "pipeline", "--config", workdir / "cfg.txt", "--out", out, "--k-min", 3, "--k-max", 5,
            "--set", "cluster.k=4", "--set", "sample.strata=10", "--set", "sample.total=5000",
            "--alpha-grid", "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1",
        )
        assert code == 0
        manifest, paths = listed(out)
        cfg = manifest["config"]
        assert (cfg["sample.strata"], cfg["sample.total"]) == ("10", "5000")
        assert (cfg["cluster.k_min"], cfg["cluster.k_max"], cfg["cluster.k"]) == ("3", "5", "4")
        assert cfg["cluster.alpha_grid"] == "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1"
        assert manifest["n_curves"] == 200
        assert {f"partition_K{K}.csv" for K in (3, 4, 5)} <= paths
        assert manifest["alpha"] == manifest["recommended_alpha"]["4"]

    def test_fixed_alpha(self, workdir):
        out = workdir / "fixed"
        assert run_cli("pipeline", "--config", workdir / "cfg.txt", "--out", out, "--set", "cluster.alpha=0.5") == 0
        assert json.loads((out / "manifest.json").read_text())["alpha"] == 0.5

    def test_linear_predictor_gives_parallel_curves(self, workdir):
        cfg = PipelineConfig.load(workdir / "cfg.txt", {"predictor.kind": "linear", "output.dir": str(workdir / "lin")})
        result = run_pipeline(cfg)
        v = result.ice.bundle.values
        assert (v - v.mean(axis=1, keepdims=True)).std(axis=0).max() < 1e-9


class TestCli:
    def test_stage_subcommands(self, workdir, run_dir, tmp_path):
        ice_out = tmp_path / "ice"
        assert run_cli("ice", "--config", workdir / "cfg.txt", "--out", ice_out) == 0
        assert (ice_out / "ice_bundle.csv").read_bytes() == (run_dir / "ice_bundle.csv").read_bytes()
        cl_out = tmp_path / "cl"
        assert run_cli("cluster", "--config", workdir / "cfg.txt", "--from", ice_out, "--out", cl_out) == 0
        for name in ("d0.csv", "partition_K2.csv", "alpha_report_K3.csv"):
            assert (cl_out / name).read_bytes() == (run_dir / name).read_bytes()

    def test_choose_alpha(self, run_dir, tmp_path):
        out = tmp_path / "alpha"
        assert run_cli("choose-alpha", "--d0", run_dir / "d0.csv", "--d1", run_dir / "d1.csv",
                       "--k-min", 2, "--k-max", 3, "--out", out) == 0
        for K in (2, 3):
            assert (out / f"alpha_report_K{K}.csv").read_bytes() == (run_dir / f"alpha_report_K{K}.csv").read_bytes()

    def test_plot(self, run_dir, tmp_path):
        out = tmp_path / "plots"
        assert run_cli("plot", "--from", run_dir, "--out", out) == 0
        names = {p.name for p in out.iterdir()}
        assert {"ice.svg", "alpha_K2.svg", "spice_K2.svg", "spice_K3.svg"} <= names
        for p in out.iterdir():
            ET.parse(p)

    def test_plot_empty_source(self, tmp_path):
        assert run_cli("plot", "--from", tmp_path, "--out", tmp_path / "p") == 1

    def test_missing_required_key(self, tmp_path, capsys):
        cfg = tmp_path / "c.txt"
        cfg.write_text("data.path = x.csv\n")
        assert run_cli("pipeline", "--config", cfg) == 1
        assert "error" in capsys.readouterr().err

    def test_missing_data_file(self, workdir, tmp_path):
        assert run_cli("pipeline", "--config", workdir / "cfg.txt", "--data", tmp_path / "none.csv",
                       "--out", tmp_path / "o") == 1

    def test_bad_set_syntax(self, workdir):
        assert run_cli("pipeline", "--config", workdir / "cfg.txt", "--set", "novalue") == 1

    def test_runtime_failure_exit_2(self, workdir, tmp_path):
        script = tmp_path / "die.py"
        script.write_text("import sys\nsys.exit(1)\n")
        code = run_cli("pipeline", "--config", workdir / "cfg.txt", "--out", tmp_path / "o", "--predictor", "external",
                       "--external-cmd", f"{sys.executable} {script}")
        assert code == 2

    def test_external_predictor_pipeline(self, workdir, tmp_path):
        script = tmp_path / "model.py"
        script.write_text(
            "import json, sys\n"
            "for line in sys.stdin:\n"
            "    rows = json.loads(line)['rows']\n"
            "    preds = [(-1.0 if r[2] == 'west' else -0.2) * r[0] for r in rows]\n"
            "    print(json.dumps({'predictions': preds}), flush=True)\n"
        )
        out = tmp_path / "ext"
        code = run_cli("pipeline", "--config", workdir / "cfg.txt", "--out", out, "--predictor", "external",
                       "--external-cmd", f"{sys.executable} {script}")
        assert code == 0
        region = np.frombuffer((workdir / "region.npy").read_bytes(), dtype=int)
        ids, part = read_partition(out / "partition_K2.csv")
        assert adjusted_rand_score(region[ids], part.labels) == 1.0
