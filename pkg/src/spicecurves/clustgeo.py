"""Ward-like hierarchical clustering under two dissimilarities.

Observations carry weights ``w``. For a cluster ``C`` with mass
``mu = sum(w[C])`` and a dissimilarity ``d`` the pseudo-inertia is

    I(C) = sum_{i, j in C} w_i w_j d_ij**2 / (2 mu)

and the mixed version combines the curve matrix ``D0`` and the spatial
matrix ``D1`` as ``(1 - alpha) * I_D0 + alpha * I_D1``. Agglomeration merges
the pair of clusters whose union increases the mixed inertia least.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

DEFAULT_ALPHA_GRID = tuple(round(0.1 * i, 1) for i in range(11))


class ClusteringError(ValueError):
    pass


def _matrix(D) -> np.ndarray:
    return np.asarray(getattr(D, "values", D), dtype=float)


def uniform_weights(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def check_weights(weights, n: int) -> np.ndarray:
    if weights is None:
        return uniform_weights(n)
    w = np.asarray(weights, dtype=float)
    if w.shape != (n,):
        raise ClusteringError(f"expected {n} weights, got shape {w.shape}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ClusteringError("weights must be finite and nonnegative")
    if abs(w.sum() - 1.0) > 1e-12:
        raise ClusteringError(f"weights must sum to 1 (sum is {w.sum()!r})")
    return w


@dataclass(frozen=True)
class Merge:
    a: int
    b: int
    delta: float
    new: int


@dataclass(frozen=True)
class Dendrogram:
    """Merge history. Leaves are ``0..n-1``; merge ``s`` creates cluster ``n + s``."""

    n: int
    merges: tuple[Merge, ...]
    alpha: float

    def __post_init__(self):
        if len(self.merges) != self.n - 1:
            raise ClusteringError(f"{self.n} leaves need {self.n - 1} merges, got {len(self.merges)}")
        alive = set(range(self.n))
        for s, m in enumerate(self.merges):
            if m.new != self.n + s or m.a not in alive or m.b not in alive or m.a == m.b:
                raise ClusteringError(f"merge {s} is not a valid step of a binary tree")
            if not math.isfinite(m.delta):
                raise ClusteringError(f"merge {s} has a non-finite cost")
            alive -= {m.a, m.b}
            alive.add(m.new)

    @property
    def deltas(self) -> np.ndarray:
        return np.array([m.delta for m in self.merges])


@dataclass(frozen=True, eq=False)
class Partition:
    """Labels ``1..K`` per observation. Clusters are numbered by their smallest member."""

    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        K = int(labels.max()) if len(labels) else 0
        if len(labels) == 0 or set(np.unique(labels)) != set(range(1, K + 1)):
            raise ClusteringError("labels must cover 1..K with no empty cluster")
        object.__setattr__(self, "labels", labels)

    @property
    def K(self) -> int:
        return int(self.labels.max())

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def members(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.labels == k) for k in range(1, self.K + 1)]

    @property
    def sizes(self) -> list[int]:
        return [int(np.sum(self.labels == k)) for k in range(1, self.K + 1)]

    @classmethod
    def from_groups(cls, groups: Iterable[Iterable[int]], n: int) -> Partition:
        groups = sorted((sorted(int(i) for i in g) for g in groups), key=lambda g: g[0])
        labels = np.zeros(n, dtype=np.int64)
        for k, g in enumerate(groups, start=1):
            labels[g] = k
        return cls(labels)

    def as_sets(self) -> set[frozenset[int]]:
        return {frozenset(int(i) for i in m) for m in self.members}


def pseudo_inertia(D, weights, members) -> float:
    """Pseudo-inertia of one cluster under a single dissimilarity matrix."""
    d = _matrix(D)
    members = np.sort(np.asarray(list(members), dtype=np.int64))
    if len(members) == 0:
        raise ClusteringError("empty cluster")
    w = np.asarray(weights, dtype=float)[members]
    mu = float(w.sum())
    if mu <= 0:
        raise ClusteringError("cluster has zero total weight")
    sub = d[np.ix_(members, members)]
    return float(w @ (sub**2) @ w) / (2.0 * mu)


def mixed_pseudo_inertia(D0, D1, alpha: float, weights, members) -> float:
    if not 0.0 <= alpha <= 1.0:
        raise ClusteringError(f"alpha must lie in [0, 1], got {alpha}")
    # a zero coefficient contributes exactly nothing, so its matrix is skipped
    i0 = pseudo_inertia(D0, weights, members) if alpha < 1.0 else 0.0
    i1 = pseudo_inertia(D1, weights, members) if alpha > 0.0 else 0.0
    return (1.0 - alpha) * i0 + alpha * i1


def partition_inertia(D0, D1, alpha: float, weights, partition: Partition) -> float:
    """Sum of mixed pseudo-inertia over clusters, in label order."""
    total = 0.0
    for members in partition.members:
        total += mixed_pseudo_inertia(D0, D1, alpha, weights, members)
    return total


def _nearest(rows: np.ndarray, ids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per row, the column with the smallest entry; equal entries resolve to the smallest cluster id."""
    best = rows.min(axis=1)
    masked_ids = np.where(rows == best[:, None], ids[None, :], np.iinfo(np.int64).max)
    return masked_ids.argmin(axis=1), best


def ward_cluster(D0, D1, alpha: float, weights=None) -> Dendrogram:
    """Greedy agglomeration minimizing the increase of mixed pseudo-inertia.

    Merge costs are tracked with the weighted Lance-Williams update on the
    mixed squared dissimilarity ``(1 - alpha) d0**2 + alpha d1**2``. Equal
    costs resolve to the pair with the smallest ``(min id, max id)``.
    Each cluster keeps a pointer to its cheapest partner, so a merge costs
    O(n) plus a rescan of the rows whose partner was absorbed.
    """
    d0, d1 = _matrix(D0), _matrix(D1)
    if d0.shape != d1.shape or d0.ndim != 2 or d0.shape[0] != d0.shape[1]:
        raise ClusteringError("D0 and D1 must be square matrices of the same size")
    n = len(d0)
    if n < 2:
        raise ClusteringError("need at least 2 observations")
    if not 0.0 <= alpha <= 1.0:
        raise ClusteringError(f"alpha must lie in [0, 1], got {alpha}")
    w = check_weights(weights, n)

    d2 = (1.0 - alpha) * d0**2 + alpha * d1**2
    pair_mass = w[:, None] + w[None, :]
    delta = np.divide(np.outer(w, w) * d2, pair_mass, out=np.zeros((n, n)), where=pair_mass > 0)
    np.fill_diagonal(delta, np.inf)
    mu = w.copy()
    ids = np.arange(n)
    active = np.ones(n, dtype=bool)
    nn, nn_cost = _nearest(delta, ids)

    merges = []
    for step in range(n - 1):
        live = np.flatnonzero(active)
        best = nn_cost[live].min()
        tied = live[nn_cost[live] == best]
        lo = np.minimum(ids[tied], ids[nn[tied]])
        hi = np.maximum(ids[tied], ids[nn[tied]])
        i = int(tied[np.lexsort((hi, lo))[0]])
        j = int(nn[i])
        cost = float(delta[i, j])
        a, b = (i, j) if ids[i] < ids[j] else (j, i)
        merges.append(Merge(int(ids[a]), int(ids[b]), cost, n + step))

        # slot a holds the union from now on; slot b retires
        total = mu[a] + mu[b] + mu
        with np.errstate(invalid="ignore"):
            new = np.divide(
                (mu[a] + mu) * delta[a] + (mu[b] + mu) * delta[b] - mu * cost,
                total,
                out=np.zeros(n),
                where=total > 0,
            )
        active[b] = False
        new[~active] = np.inf
        new[a] = np.inf
        delta[a, :] = new
        delta[:, a] = new
        delta[b, :] = np.inf
        delta[:, b] = np.inf
        mu[a] += mu[b]
        ids[a] = n + step

        rescan = active & ((nn == a) | (nn == b))
        closer = active & ~rescan & (new < nn_cost)
        nn[closer] = a
        nn_cost[closer] = new[closer]
        rescan[a] = True
        rows = np.flatnonzero(rescan)
        nn[rows], nn_cost[rows] = _nearest(delta[rows], ids)
    return Dendrogram(n, tuple(merges), float(alpha))


def cut(dendrogram: Dendrogram, K: int) -> Partition:
    """Partition left after the first ``n - K`` merges."""
    n = dendrogram.n
    if not 1 <= K <= n:
        raise ClusteringError(f"K must lie in [1, {n}], got {K}")
    groups: dict[int, list[int]] = {i: [i] for i in range(n)}
    for m in dendrogram.merges[: n - K]:
        groups[m.new] = groups.pop(m.a) + groups.pop(m.b)
    return Partition.from_groups(groups.values(), n)


def q_beta(D0, D1, beta: float, weights, partition: Partition) -> float:
    """Share of the total inertia at mixing ``beta`` explained by ``partition``."""
    n = partition.n
    whole = Partition(np.ones(n, dtype=np.int64))
    total = partition_inertia(D0, D1, beta, weights, whole)
    if total <= 0:
        raise ClusteringError(f"total inertia at beta={beta} is zero")
    return 1.0 - partition_inertia(D0, D1, beta, weights, partition) / total


@dataclass(frozen=True)
class AlphaReport:
    """Explained-inertia traces over a grid of mixing values at fixed ``K``."""

    K: int
    alphas: tuple[float, ...]
    q0: tuple[float, ...]
    q1: tuple[float, ...]
    recommended: float
    notes: tuple[str, ...] = field(default=())

    def __post_init__(self):
        a = np.asarray(self.alphas, dtype=float)
        if len(a) == 0 or np.any(np.diff(a) <= 0) or a[0] < 0 or a[-1] > 1:
            raise ClusteringError("alpha grid must be strictly increasing within [0, 1]")

    def scores(self) -> np.ndarray:
        """min(Q0(a)/Q0(0), Q1(a)/Q1(1)) per grid value; NaN where undefined."""
        return _gain_scores(self.q0, self.q1)


def _gain_scores(q0, q1) -> np.ndarray:
    q0, q1 = np.asarray(q0, dtype=float), np.asarray(q1, dtype=float)
    ref0, ref1 = q0[0], q1[-1]
    r0 = q0 / ref0 if ref0 > 0 else np.full_like(q0, np.nan)
    r1 = q1 / ref1 if ref1 > 0 else np.full_like(q1, np.nan)
    return np.minimum(r0, r1)


def _recommend(alphas: Sequence[float], scores: np.ndarray) -> float:
    best_alpha, best_score = None, -math.inf
    for a, s in zip(alphas, scores):
        if math.isfinite(s) and s > best_score:
            best_alpha, best_score = a, s
    return float(alphas[0] if best_alpha is None else best_alpha)


def choose_alpha(
    D0,
    D1,
    weights=None,
    K: int = 4,
    alpha_grid: Sequence[float] = DEFAULT_ALPHA_GRID,
    workers: int = 1,
    dendrograms: dict[float, Dendrogram] | None = None,
) -> AlphaReport:
    """Trace Q0 and Q1 of the K-cluster partition across ``alpha_grid``.

    The recommended alpha maximizes the smaller of the two normalized gains
    ``Q0(a)/Q0(0)`` and ``Q1(a)/Q1(1)``; ties go to the smaller alpha. The
    grid must contain both 0 and 1.

    ``dendrograms`` is an optional cache keyed by alpha. Missing entries are
    filled in, so repeated calls for several ``K`` cluster only once per alpha.
    """
    alphas = tuple(float(a) for a in alpha_grid)
    if not alphas or alphas[0] != 0.0 or alphas[-1] != 1.0:
        raise ClusteringError("alpha grid must start at 0 and end at 1")
    n = len(_matrix(D0))
    w = check_weights(weights, n)
    cache = {} if dendrograms is None else dendrograms
    whole = Partition(np.ones(n, dtype=np.int64))
    totals = {beta: partition_inertia(D0, D1, beta, w, whole) for beta in (0.0, 1.0)}

    def dendrogram(alpha: float) -> Dendrogram:
        if alpha not in cache:
            cache[alpha] = ward_cluster(D0, D1, alpha, w)
        return cache[alpha]

    def trace(alpha: float):
        part = cut(dendrogram(alpha), K)
        out, notes = [], []
        for beta in (0.0, 1.0):
            if totals[beta] > 0:
                out.append(1.0 - partition_inertia(D0, D1, beta, w, part) / totals[beta])
            else:
                out.append(math.nan)
                notes.append(f"alpha={alpha:g}: total inertia at beta={beta:g} is zero")
        return out, notes

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(dendrogram, [a for a in alphas if a not in cache]))
    results = [trace(a) for a in alphas]
    q0 = tuple(r[0][0] for r in results)
    q1 = tuple(r[0][1] for r in results)
    notes = tuple(note for r in results for note in r[1])
    if not (q0[0] > 0 and q1[-1] > 0):
        notes += ("reference gain Q0(0) or Q1(1) is not positive; recommendation falls back to alpha=0",)
    return AlphaReport(K, alphas, q0, q1, _recommend(alphas, _gain_scores(q0, q1)), notes)


def spice_curves(partition: Partition, curves, weights=None) -> list:
    """Weighted mean smoothed curve (values and derivatives) of each cluster.

    ``curves`` is a smoothed bundle whose rows align with the partition's
    observations. Members are accumulated in index order.
    """
    from .smoothing import SmoothCurve

    V, Dv = np.asarray(curves.values), np.asarray(curves.derivatives)
    if len(V) != partition.n:
        raise ClusteringError(f"{len(V)} curves for a partition of {partition.n} observations")
    w = check_weights(weights, partition.n)
    out = []
    for k, members in enumerate(partition.members, start=1):
        val = np.zeros(V.shape[1])
        der = np.zeros(V.shape[1])
        for i in members:
            val += w[i] * V[i]
            der += w[i] * Dv[i]
        mu = float(w[members].sum())
        if mu <= 0:
            raise ClusteringError(f"cluster {k} has zero total weight")
        out.append(SmoothCurve(k, curves.t, val / mu, der / mu, curves.h))
    return out


def write_dendrogram(dendrogram: Dendrogram, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "clusterA", "clusterB", "delta"])
        for s, m in enumerate(dendrogram.merges, start=1):
            w.writerow([s, m.a, m.b, repr(m.delta)])


def read_dendrogram(path: str | Path, alpha: float = math.nan) -> Dendrogram:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    n = len(rows) + 1
    merges = tuple(
        Merge(int(r["clusterA"]), int(r["clusterB"]), float(r["delta"]), n + s) for s, r in enumerate(rows)
    )
    return Dendrogram(n, merges, alpha)


def write_partition(partition: Partition, path: str | Path, ids: Sequence[int] | None = None) -> None:
    ids = range(partition.n) if ids is None else ids
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "label"])
        for i, label in zip(ids, partition.labels):
            w.writerow([int(i), int(label)])


def read_partition(path: str | Path) -> tuple[np.ndarray, Partition]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    ids = np.array([int(r["id"]) for r in rows])
    return ids, Partition(np.array([int(r["label"]) for r in rows]))


def write_alpha_report(report: AlphaReport, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["alpha", "q0", "q1"])
        for a, q0, q1 in zip(report.alphas, report.q0, report.q1):
            w.writerow([repr(a), repr(q0), repr(q1)])
        w.writerow(["recommended", repr(report.recommended), ""])


def read_alpha_report(path: str | Path, K: int) -> AlphaReport:
    alphas, q0, q1, rec = [], [], [], None
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            if row[0] == "recommended":
                rec = float(row[1])
            else:
                alphas.append(float(row[0]))
                q0.append(float(row[1]))
                q1.append(float(row[2]))
    if rec is None:
        raise ClusteringError(f"{path}: missing recommended line")
    return AlphaReport(K, tuple(alphas), tuple(q0), tuple(q1), rec)
