"""k-means++ seeding, Lloyd iteration, within-cluster RMSE, elbow selection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .rng import STREAM_ELBOW, derive_seed

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 300
DEFAULT_REPEATS = 10


class KMeansError(ValueError):
    pass


@dataclass
class ClusterModel:
    k: int
    centroids: np.ndarray  # k x d
    assignments: np.ndarray  # n ints in [0, k)
    rmse: float
    iterations: int
    seed: int | None = None
    sse_history: list[float] = field(default_factory=list)


@dataclass
class ElbowCurve:
    """Per-k minimum within-cluster RMSE over the seeded repeats."""

    points: list[tuple[int, float]]
    repeats: int
    seeds: list[int]


def seed_pp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ D^2 seeding: first centre uniform, later centres sampled
    proportionally to squared distance from the nearest chosen centre."""
    X = np.asarray(points, dtype=float)
    if k < 1:
        raise KMeansError(f"k must be positive, got {k}")
    n_distinct = len(np.unique(X, axis=0))
    if k > n_distinct:
        raise KMeansError(f"k={k} exceeds {n_distinct} distinct points")
    n = X.shape[0]
    centroids = np.empty((k, X.shape[1]), dtype=float)
    first = int(rng.integers(n))
    centroids[0] = X[first]
    d2 = cdist(X, centroids[:1], "sqeuclidean")[:, 0]
    for i in range(1, k):
        probs = d2 / d2.sum()
        idx = int(rng.choice(n, p=probs))
        centroids[i] = X[idx]
        d2 = np.minimum(d2, cdist(X, centroids[i : i + 1], "sqeuclidean")[:, 0])
    return centroids


def _reseed_empty(X: np.ndarray, labels: np.ndarray, centroids: np.ndarray, j: int):
    # Keep k constant: move the empty centroid onto the point of the largest
    # cluster that lies farthest from the empty centroid's stale position.
    counts = np.bincount(labels, minlength=len(centroids))
    largest = int(np.argmax(counts))
    members = np.flatnonzero(labels == largest)
    d2 = cdist(X[members], centroids[j : j + 1], "sqeuclidean")[:, 0]
    return X[members[int(np.argmax(d2))]].copy()


def lloyd(
    points: np.ndarray,
    init_centroids: np.ndarray,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    seed: int | None = None,
) -> ClusterModel:
    """Alternate nearest-centroid assignment and mean update until the largest
    centroid displacement drops below ``tol``.

    Ties in the assignment go to the lowest cluster index; a cluster emptied
    by reassignment is reseeded (see ``_reseed_empty``). The within-cluster
    sum of squares is recorded per iteration and checked to be non-increasing.
    """
    X = np.asarray(points, dtype=float)
    C = np.array(init_centroids, dtype=float, copy=True)
    if C.size == 0:
        raise KMeansError("init_centroids must be non-empty")
    if tol <= 0:
        raise KMeansError("tol must be positive")
    k = C.shape[0]
    n = X.shape[0]
    history: list[float] = []
    iterations = 0
    for _ in range(max_iter):
        iterations += 1
        D2 = cdist(X, C, "sqeuclidean")
        labels = np.argmin(D2, axis=1)
        sse = float(D2[np.arange(n), labels].sum())
        if history and sse > history[-1] * (1 + 1e-10) + 1e-12:
            raise AssertionError(
                f"objective increased: {history[-1]} -> {sse}"
            )
        history.append(sse)
        newC = np.empty_like(C)
        for j in range(k):
            members = labels == j
            if members.any():
                newC[j] = X[members].mean(axis=0)
            else:
                newC[j] = _reseed_empty(X, labels, C, j)
        shift = float(np.sqrt(((newC - C) ** 2).sum(axis=1)).max())
        C = newC
        if shift < tol:
            break
    # Final pass so assignments are nearest-centroid consistent with C.
    D2 = cdist(X, C, "sqeuclidean")
    labels = np.argmin(D2, axis=1)
    sse = float(D2[np.arange(n), labels].sum())
    return ClusterModel(
        k=k,
        centroids=C,
        assignments=labels,
        rmse=float(np.sqrt(sse / n)),
        iterations=iterations,
        seed=seed,
        sse_history=history,
    )


def fit(
    points: np.ndarray,
    k: int,
    seed: int,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> ClusterModel:
    """seed_pp + lloyd with the RNG seeded from ``seed``."""
    rng = np.random.default_rng(seed)
    return lloyd(points, seed_pp(points, k, rng), tol=tol, max_iter=max_iter, seed=seed)


def rmse(points: np.ndarray, model: ClusterModel) -> float:
    """sqrt of the mean squared distance from each point to its centroid."""
    X = np.asarray(points, dtype=float)
    diffs = X - model.centroids[model.assignments]
    return float(np.sqrt((diffs**2).sum(axis=1).mean()))


def elbow_curve(
    points: np.ndarray,
    k_range: range,
    repeats: int = DEFAULT_REPEATS,
    base_seed: int = 0,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> ElbowCurve:
    """Minimum RMSE over ``repeats`` seeded runs for each k in ``k_range``."""
    X = np.asarray(points, dtype=float)
    ks = sorted(set(k_range))
    if not ks:
        raise KMeansError("empty k range")
    if ks[0] < 1 or ks[-1] > X.shape[0]:
        raise KMeansError(f"k range {ks[0]}..{ks[-1]} outside [1, {X.shape[0]}]")
    pts: list[tuple[int, float]] = []
    seeds: list[int] = []
    for k in ks:
        best = np.inf
        for r in range(repeats):
            s = derive_seed(base_seed, STREAM_ELBOW, k, r)
            seeds.append(s)
            model = fit(X, k, seed=s, tol=tol, max_iter=max_iter)
            best = min(best, model.rmse)
        pts.append((k, float(best)))
    return ElbowCurve(points=pts, repeats=repeats, seeds=seeds)


def pick_elbow(curve: ElbowCurve) -> int:
    """The k with the largest discrete second difference of RMSE over k,
    i.e. the sharpest flattening of the decline; ties go to the smallest k."""
    pts = curve.points
    if len(pts) < 3:
        raise KMeansError("elbow selection needs at least 3 curve points")
    ks = [k for k, _ in pts]
    if any(b - a != 1 for a, b in zip(ks, ks[1:])):
        raise KMeansError(f"elbow selection needs consecutive k values, got {ks}")
    values = [v for _, v in pts]
    best_k = None
    best_dd = -np.inf
    for i in range(1, len(pts) - 1):
        dd = values[i - 1] - 2 * values[i] + values[i + 1]
        if dd > best_dd:
            best_dd = dd
            best_k = ks[i]
    return int(best_k)
