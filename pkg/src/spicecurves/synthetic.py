"""Synthetic listings with two spatial regions and region-specific slopes.

Usage: ``python -m spicecurves.synthetic OUT.csv [--n 2000] [--seed 0]``
"""

from __future__ import annotations

import argparse
import csv
from pathlib import Path

import numpy as np

from .data import Feature, Schema

# a box roughly the size of Montevideo
LAT_RANGE = (-34.92, -34.86)
LONG_RANGE = (-56.25, -56.05)
LONG_SPLIT = -56.15
SLOPES = (-1.0, -0.2)
INTERCEPTS = (8.0, 7.0)

SCHEMA = Schema(
    features=(
        Feature("lsup", "numeric"),
        Feature("rooms", "numeric"),
        Feature("zone", "categorical", ("west", "east")),
    ),
    response="lprice",
    coords=("lat", "long"),
)


def make_two_region(n: int = 2000, seed: int = 0, noise: float = 0.1) -> dict[str, np.ndarray]:
    """Columns of a dataset whose response depends on ``lsup`` with a region-dependent slope.

    Region 0 (west of ``LONG_SPLIT``) has slope -1, region 1 (east) -0.2.
    The ``region`` entry is the ground truth, not part of the schema.
    """
    rng = np.random.default_rng(seed)
    lat = rng.uniform(*LAT_RANGE, n)
    lon = rng.uniform(*LONG_RANGE, n)
    region = (lon >= LONG_SPLIT).astype(int)
    lsup = rng.uniform(3.0, 5.0, n)
    rooms = rng.integers(0, 4, n).astype(float)
    slope = np.take(SLOPES, region)
    intercept = np.take(INTERCEPTS, region)
    y = slope * lsup + intercept + rng.normal(0.0, noise, n)
    return {"lsup": lsup, "rooms": rooms, "zone": region, "lprice": y, "lat": lat, "long": lon, "region": region}


def write_two_region(path: str | Path, n: int = 2000, seed: int = 0) -> dict[str, np.ndarray]:
    cols = make_two_region(n, seed)
    zone_names = SCHEMA.feature("zone").levels
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lsup", "rooms", "zone", "lprice", "lat", "long"])
        for i in range(n):
            w.writerow([
                repr(float(cols["lsup"][i])),
                repr(float(cols["rooms"][i])),
                zone_names[cols["zone"][i]],
                repr(float(cols["lprice"][i])),
                repr(float(cols["lat"][i])),
                repr(float(cols["long"][i])),
            ])
    return cols


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("out", type=Path)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    write_two_region(args.out, args.n, args.seed)


if __name__ == "__main__":
    main()
