"""Pipeline configuration: a flat ``key = value`` text file with dotted keys.

Example::

    data.path = listings.csv
    data.features = lsup_constru, bedrooms, neighborhoodgr:categorical
    data.response = lpreciom2
    ice.feature = lsup_constru
    cluster.k_min = 3
    cluster.k_max = 5

Lines starting with ``#`` are comments. ``filter.min.<column>`` and
``filter.max.<column>`` drop rows outside a range before anything else.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

from .data import Feature, Schema


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, str] = {
    "data.path": "",
    "data.features": "",
    "data.response": "",
    "data.lat": "lat",
    "data.long": "long",
    "data.response_is_log": "false",
    "predictor.kind": "knn",
    "predictor.k": "10",
    "predictor.external_cmd": "",
    "split.train_fraction": "0.6666666666666666",
    "ice.feature": "",
    "grid.M": "50",
    "grid.strategy": "uniform",
    "sample.strata": "10",
    "sample.total": "5000",
    "smooth.h": "auto",
    "smooth.G": "201",
    "spatial.metric": "planar",
    "cluster.k_min": "3",
    "cluster.k_max": "5",
    "cluster.k": "4",
    "cluster.alpha": "auto",
    "cluster.alpha_grid": "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1",
    "run.seed": "0",
    "run.workers": "1",
    "output.dir": "spice_out",
}


def parse_text(text: str, source: str = "<config>") -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        out[key] = value
    return out


def _known(key: str) -> bool:
    return key in DEFAULTS or key.startswith(("filter.min.", "filter.max.", "data.levels."))


def _floats(text: str, key: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated numbers, got {text!r}") from None


@dataclass(frozen=True)
class PipelineConfig:
    raw: dict[str, str]
    base_dir: Path = field(default=Path("."))

    @classmethod
    def load(cls, path: str | Path | None = None, overrides: dict[str, str] | None = None) -> PipelineConfig:
        raw = dict(DEFAULTS)
        base = Path(".")
        if path is not None:
            path = Path(path)
            raw.update(parse_text(path.read_text(), str(path)))
            base = path.parent
        raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
        unknown = sorted(k for k in raw if not _known(k))
        if unknown:
            raise ConfigError(f"unknown configuration key(s): {', '.join(unknown)}")
        cfg = cls(raw, base)
        cfg.validate()
        return cfg

    def _get(self, key: str) -> str:
        return self.raw[key]

    def _int(self, key: str) -> int:
        try:
            return int(self.raw[key])
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {self.raw[key]!r}") from None

    def _float(self, key: str) -> float:
        try:
            return float(self.raw[key])
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {self.raw[key]!r}") from None

    def _bool(self, key: str) -> bool:
        v = self.raw[key].lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected true/false, got {self.raw[key]!r}")

    @property
    def data_path(self) -> Path:
        p = Path(self._get("data.path"))
        return p if p.is_absolute() else self.base_dir / p

    @property
    def schema(self) -> Schema:
        feats = []
        for item in self._get("data.features").split(","):
            item = item.strip()
            if not item:
                continue
            name, _, kind = item.partition(":")
            kind = kind.strip() or "numeric"
            levels_key = f"data.levels.{name.strip()}"
            levels = tuple(v.strip() for v in self.raw[levels_key].split(",")) if levels_key in self.raw else None
            feats.append(Feature(name.strip(), kind, levels))
        return Schema(tuple(feats), self._get("data.response"), (self._get("data.lat"), self._get("data.long")))

    @property
    def response_is_log(self) -> bool:
        return self._bool("data.response_is_log")

    @property
    def filters(self) -> dict[str, tuple[float, float]]:
        out: dict[str, list[float]] = {}
        for key in sorted(self.raw):
            for prefix, slot in (("filter.min.", 0), ("filter.max.", 1)):
                if key.startswith(prefix):
                    out.setdefault(key[len(prefix):], [-math.inf, math.inf])[slot] = self._float(key)
        return {k: (v[0], v[1]) for k, v in out.items()}

    @property
    def predictor_kind(self) -> str:
        return self._get("predictor.kind")

    @property
    def knn_k(self) -> int:
        return self._int("predictor.k")

    @property
    def external_cmd(self) -> str:
        return self._get("predictor.external_cmd")

    @property
    def train_fraction(self) -> float:
        return self._float("split.train_fraction")

    @property
    def feature(self) -> str:
        return self._get("ice.feature")

    @property
    def grid_M(self) -> int:
        return self._int("grid.M")

    @property
    def grid_strategy(self) -> str:
        return self._get("grid.strategy")

    @property
    def strata(self) -> int:
        return self._int("sample.strata")

    @property
    def sample_total(self) -> int:
        return self._int("sample.total")

    @property
    def bandwidth(self) -> float | None:
        return None if self._get("smooth.h") == "auto" else self._float("smooth.h")

    @property
    def dense_G(self) -> int:
        return self._int("smooth.G")

    @property
    def spatial_metric(self) -> str:
        return self._get("spatial.metric")

    @property
    def k_range(self) -> range:
        return range(self._int("cluster.k_min"), self._int("cluster.k_max") + 1)

    @property
    def k_final(self) -> int:
        return self._int("cluster.k")

    @property
    def alpha(self) -> float | None:
        return None if self._get("cluster.alpha") == "auto" else self._float("cluster.alpha")

    @property
    def alpha_grid(self) -> tuple[float, ...]:
        return _floats(self._get("cluster.alpha_grid"), "cluster.alpha_grid")

    @property
    def seed(self) -> int:
        return self._int("run.seed")

    @property
    def workers(self) -> int:
        return self._int("run.workers")

    @property
    def out_dir(self) -> Path:
        return Path(self._get("output.dir"))

    def validate(self, n: int | None = None) -> None:
        """Static checks; with ``n`` (clustered sample size) also the K range bound."""
        if not self.raw["data.path"]:
            raise ConfigError("data.path is required")
        if not self.raw["data.response"]:
            raise ConfigError("data.response is required")
        schema = self.schema
        if not self.feature:
            raise ConfigError("ice.feature is required")
        if self.feature not in schema.feature_names:
            raise ConfigError(f"ice.feature {self.feature!r} is not among data.features")
        if schema.feature(self.feature).kind != "numeric":
            raise ConfigError(f"ice.feature {self.feature!r} must be numeric")
        for col in self.filters:
            if col not in schema.columns:
                raise ConfigError(f"filter on unknown column {col!r}")
        if self.predictor_kind not in ("knn", "linear", "external"):
            raise ConfigError(f"predictor.kind must be knn, linear or external, got {self.predictor_kind!r}")
        if self.predictor_kind == "external" and not self.external_cmd:
            raise ConfigError("predictor.external_cmd is required for the external predictor")
        if self.knn_k < 1:
            raise ConfigError("predictor.k must be >= 1")
        if not 0 <= self.train_fraction < 1:
            raise ConfigError("split.train_fraction must lie in [0, 1); 0 disables the split")
        if self.grid_M < 2:
            raise ConfigError("grid.M must be >= 2")
        if self.grid_strategy not in ("uniform", "quantile"):
            raise ConfigError("grid.strategy must be uniform or quantile")
        if self.strata < 1 or self.sample_total < 2:
            raise ConfigError("sample.strata must be >= 1 and sample.total >= 2")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ConfigError("smooth.h must be positive or 'auto'")
        if self.dense_G < self.grid_M:
            raise ConfigError("smooth.G must be at least grid.M")
        if self.spatial_metric not in ("planar", "greatcircle"):
            raise ConfigError("spatial.metric must be planar or greatcircle")
        ks = self.k_range
        upper = 10 if n is None else min(10, n)
        if len(ks) == 0 or ks.start < 2 or ks.stop - 1 > upper:
            raise ConfigError(f"cluster K range must lie within [2, {upper}], got {ks.start}..{ks.stop - 1}")
        if self.k_final not in ks:
            raise ConfigError(f"cluster.k={self.k_final} must lie in the K range {ks.start}..{ks.stop - 1}")
        grid = self.alpha_grid
        if not grid or any(b <= a for a, b in zip(grid, grid[1:])) or grid[0] != 0 or grid[-1] != 1:
            raise ConfigError("cluster.alpha_grid must increase strictly from 0 to 1")
        if self.alpha is not None and not 0 <= self.alpha <= 1:
            raise ConfigError("cluster.alpha must lie in [0, 1] or be 'auto'")
        if self.workers < 1:
            raise ConfigError("run.workers must be >= 1")

    def resolved(self) -> dict[str, str]:
        """Configuration echoed into the manifest (output and parallelism settings excluded)."""
        return {k: v for k, v in sorted(self.raw.items()) if k not in ("output.dir", "run.workers")}

    def dumps(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in sorted(self.raw.items()))
