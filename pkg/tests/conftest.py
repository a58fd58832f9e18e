import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from spicecurves.data import Dataset, Feature, Schema


def make_dataset(columns: dict, features, response="y", levels=None) -> Dataset:
    """Build a Dataset from plain arrays; coordinates default to a small box."""
    cols = {k: np.asarray(v, dtype=float) for k, v in columns.items()}
    n = len(cols[response])
    rng = np.random.default_rng(123)
    cols.setdefault("lat", rng.uniform(-34.92, -34.86, n))
    cols.setdefault("long", rng.uniform(-56.25, -56.05, n))
    feats = tuple(f if isinstance(f, Feature) else Feature(f) for f in features)
    return Dataset(Schema(feats, response), cols, dict(levels or {}))


@pytest.fixture
def rng():
    return np.random.default_rng(20240101)


@pytest.fixture
def toy_dataset():
    rng = np.random.default_rng(7)
    n = 40
    x1 = rng.uniform(0, 10, n)
    x2 = rng.normal(size=n)
    z = rng.integers(0, 3, n)
    y = 1.5 * x1 - 2.0 * x2 + np.array([0.0, 1.0, -1.0])[z] + rng.normal(0, 0.1, n)
    return make_dataset(
        {"x1": x1, "x2": x2, "z": z, "y": y},
        [Feature("x1"), Feature("x2"), Feature("z", "categorical", ("a", "b", "c"))],
        levels={"z": ("a", "b", "c")},
    )


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
