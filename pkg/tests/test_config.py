import pytest

from spicecurves.config import ConfigError, PipelineConfig, parse_text

BASE = {
    "data.path": "d.csv",
    "data.features": "lsup, rooms, zone:categorical",
    "data.response": "lprice",
    "ice.feature": "lsup",
}


def load(**extra):
    return PipelineConfig.load(None, {**BASE, **{k.replace("__", "."): v for k, v in extra.items()}})


def test_parse_text_comments_and_blanks():
    assert parse_text("# c\n\na = 1\n b.c =  x y \n") == {"a": "1", "b.c": "x y"}
    with pytest.raises(ConfigError, match=":2"):
        parse_text("a = 1\nnonsense\n")


def test_defaults():
    cfg = load()
    assert cfg.k_range == range(3, 6) and cfg.k_final == 4 and cfg.alpha is None
    assert cfg.alpha_grid == tuple(i / 10 for i in range(11))
    assert cfg.strata == 10 and cfg.sample_total == 5000
    assert cfg.train_fraction == pytest.approx(2 / 3)
    assert [f.kind for f in cfg.schema.features] == ["numeric", "numeric", "categorical"]


def test_file_and_relative_path(tmp_path):
    p = tmp_path / "cfg.txt"
    p.write_text("".join(f"{k} = {v}\n" for k, v in BASE.items()))
    cfg = PipelineConfig.load(p, {"cluster.alpha": "0.5"})
    assert cfg.data_path == tmp_path / "d.csv"
    assert cfg.alpha == 0.5


def test_unknown_key():
    with pytest.raises(ConfigError, match="clustr.k"):
        load(clustr__k="3")


@pytest.mark.parametrize(
    "key,value",
    [
        ("cluster.k_min", "1"),
        ("cluster.k_max", "11"),
        ("cluster.k", "7"),
        ("cluster.alpha_grid", "0,0.5"),
        ("cluster.alpha_grid", "0,0.6,0.4,1"),
        ("cluster.alpha", "1.5"),
        ("ice.feature", "zone"),
        ("ice.feature", "nope"),
        ("predictor.kind", "forest"),
        ("predictor.kind", "external"),
        ("grid.M", "1"),
        ("split.train_fraction", "1"),
        ("smooth.h", "-1"),
        ("spatial.metric", "taxicab"),
        ("run.workers", "0"),
        ("grid.M", "many"),
    ],
)
def test_invalid(key, value):
    with pytest.raises(ConfigError):
        load(**{key.replace(".", "__"): value})


def test_k_range_bounded_by_n():
    cfg = load()
    cfg.validate(10)
    with pytest.raises(ConfigError):
        cfg.validate(4)


def test_filters_and_levels():
    cfg = load(filter__min__lsup="1", filter__max__lsup="7", data__levels__zone="west,east")
    assert cfg.filters == {"lsup": (1.0, 7.0)}
    assert cfg.schema.feature("zone").levels == ("west", "east")


def test_resolved_excludes_run_location():
    a = load(output__dir="x", run__workers="1").resolved()
    b = load(output__dir="y", run__workers="8").resolved()
    assert a == b and "output.dir" not in a
