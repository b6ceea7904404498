"""Synthetic data and brute-force oracles for tests and acceptance checks.

The silhouette oracle here is a second, deliberately separate implementation
(pure Python, no shared helpers with the quality module) so the two can check
each other.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .rng import STREAM_SYNTH, spawn

ORACLE_MAX_POINTS = 10
ORACLE_MAX_ROLES = 3


class TestkitError(ValueError):
    pass


@dataclass(frozen=True)
class SyntheticSpec:
    k_true: int
    users_per_cluster: int
    dims: int
    separation: float  # centre spacing over unit noise scale
    seed: int = 0
    clip_nonnegative: bool = False  # mimic count-like features

    def __post_init__(self):
        if self.k_true < 1 or self.users_per_cluster < 1 or self.dims < 1:
            raise TestkitError("counts must be positive")
        if self.separation <= 0:
            raise TestkitError("separation must be positive")


def _centers(k: int, dims: int, separation: float) -> np.ndarray:
    if k <= dims:
        # Scaled orthogonal corners: every pair exactly `separation` apart.
        C = np.zeros((k, dims))
        for i in range(k):
            C[i, i] = separation / math.sqrt(2.0)
        return C
    # Fall back to a line grid with spacing `separation`.
    C = np.zeros((k, dims))
    C[:, 0] = np.arange(k) * separation
    return C


def gen_clusters(spec: SyntheticSpec) -> tuple[dict[str, np.ndarray], dict[str, int]]:
    """Isotropic unit-noise Gaussian blobs; returns vectors keyed by synthetic
    user id plus the ground-truth blob index per user."""
    rng = spawn(spec.seed, STREAM_SYNTH)
    centers = _centers(spec.k_true, spec.dims, spec.separation)
    vectors: dict[str, np.ndarray] = {}
    labels: dict[str, int] = {}
    i = 0
    for blob in range(spec.k_true):
        noise = rng.standard_normal((spec.users_per_cluster, spec.dims))
        pts = centers[blob] + noise
        if spec.clip_nonnegative:
            pts = np.clip(pts, 0.0, None)
        for row in pts:
            uid = f"u{i:05d}"
            vectors[uid] = row
            labels[uid] = blob
            i += 1
    return vectors, labels


def true_centers(spec: SyntheticSpec) -> np.ndarray:
    return _centers(spec.k_true, spec.dims, spec.separation)


def write_vectors_csv(vectors: Mapping[str, np.ndarray], path) -> None:
    """Emit synthetic vectors in the feature-CSV shape the pipeline reads."""
    users = sorted(vectors)
    dims = len(next(iter(vectors.values()))) if users else 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user_id"] + [f"f{i:03d}" for i in range(dims)])
        for u in users:
            writer.writerow([u] + [repr(float(x)) for x in vectors[u]])


# ---------------------------------------------------------------------------
# Independent metric oracle (pure Python on purpose).


def _dist(a: Sequence[float], b: Sequence[float]) -> float:
    return math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))


def _mean(vecs: list[Sequence[float]]) -> list[float]:
    n = len(vecs)
    return [sum(v[i] for v in vecs) / n for i in range(len(vecs[0]))]


def oracle_avg_silhouette(
    members_by_role: Mapping[str, set[str] | frozenset[str]],
    vectors: Mapping[str, Sequence[float]],
) -> float:
    """Average of (ORMin - TRMax) / max(ORMin, TRMax) over all users, with
    singleton roles and the 0/0 case scoring 0."""
    roles = sorted(members_by_role)
    cents = {
        r: _mean([list(vectors[m]) for m in sorted(members_by_role[r])])
        for r in roles
        if members_by_role[r]
    }
    total = 0.0
    count = 0
    for r in roles:
        for u in sorted(members_by_role[r]):
            uv = list(vectors[u])
            others = [m for m in sorted(members_by_role[r]) if m != u]
            foreign = [cents[s] for s in roles if s != r and s in cents]
            if not foreign:
                raise TestkitError("oracle needs at least two occupied roles")
            om = min(_dist(uv, c) for c in foreign)
            if not others:
                se = 0.0
            else:
                tm = max(_dist(uv, list(vectors[m])) for m in others)
                se = 0.0 if (tm == 0.0 and om == 0.0) else (om - tm) / max(om, tm)
            total += se
            count += 1
    return total / count


def _assignments(n: int, k: int):
    """All label vectors using every label at least once."""
    for combo in itertools.product(range(k), repeat=n):
        if len(set(combo)) == k:
            yield combo


def oracle_best_partition(
    vectors: Mapping[str, Sequence[float]], k: int
) -> tuple[dict[str, set[str]], float]:
    """Exhaustively maximize the average silhouette over all assignments of
    the points to k non-empty labeled roles. Tiny instances only."""
    users = sorted(vectors)
    if len(users) > ORACLE_MAX_POINTS or k > ORACLE_MAX_ROLES:
        raise TestkitError(
            f"instance too large for enumeration: n={len(users)}, k={k}"
        )
    if k < 2:
        raise TestkitError("need at least two roles")
    best_assign: tuple[int, ...] | None = None
    best_value = -math.inf
    for combo in _assignments(len(users), k):
        members = {f"R{j}": {u for u, c in zip(users, combo) if c == j} for j in range(k)}
        value = oracle_avg_silhouette(members, vectors)
        if value > best_value:
            best_value = value
            best_assign = combo
    members = {
        f"R{j}": {u for u, c in zip(users, best_assign) if c == j} for j in range(k)
    }
    return members, best_value


def oracle_best_sse(points: np.ndarray, k: int) -> float:
    """Brute-force optimal k-means objective (sum of squared distances to
    cluster means) over all assignments into k non-empty clusters."""
    X = np.asarray(points, float)
    n = len(X)
    if n > 8:
        raise TestkitError(f"instance too large for enumeration: n={n}")
    best = math.inf
    for combo in _assignments(n, k):
        sse = 0.0
        for j in range(k):
            idx = [i for i, c in enumerate(combo) if c == j]
            block = X[idx]
            sse += float(((block - block.mean(axis=0)) ** 2).sum())
        best = min(best, sse)
    return best


def oracle_best_sse_assignment(points: np.ndarray, k: int) -> tuple[int, ...]:
    """The assignment achieving the brute-force optimal objective."""
    X = np.asarray(points, float)
    n = len(X)
    if n > 8:
        raise TestkitError(f"instance too large for enumeration: n={n}")
    best = math.inf
    best_combo: tuple[int, ...] | None = None
    for combo in _assignments(n, k):
        sse = 0.0
        for j in range(k):
            idx = [i for i, c in enumerate(combo) if c == j]
            block = X[idx]
            sse += float(((block - block.mean(axis=0)) ** 2).sum())
        if sse < best:
            best = sse
            best_combo = combo
    return best_combo


# ---------------------------------------------------------------------------
# Synthetic check-in logs for pipeline tests.

_SYNTH_CATEGORIES = (
    ("cat_food", "American Restaurant", "Food"),
    ("cat_travel", "Railway Station", "Travel & Transport"),
    ("cat_shop", "Department Store", "Shop & Service"),
    ("cat_home", "Home (private)", "Residence"),
    ("cat_park", "Park", "Outdoors & Recreation"),
    ("cat_office", "Office", "Professional & Other Places"),
    ("cat_art", "Art Gallery", "Arts & Entertainment"),
    ("cat_uni", "University", "College & University"),
    ("cat_event", "Music Festival", "Event"),
)


def synthetic_root_map() -> dict[str, str]:
    return {cat_id: root for cat_id, _name, root in _SYNTH_CATEGORIES}


def gen_checkin_tsv(
    n_users: int, rows_per_user: int, seed: int = 0, with_offset: bool = True
) -> str:
    """A synthetic TSV check-in log resolvable by ``synthetic_root_map``."""
    rng = spawn(seed, STREAM_SYNTH, 1)
    weekdays = ("Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun")
    months = ("Jan", "Feb", "Mar", "Apr", "May", "Jun")
    lines = []
    for u in range(n_users):
        uid = f"user{u:04d}"
        base_lat = 40.5 + rng.uniform(0, 0.4)
        base_lon = -74.2 + rng.uniform(0, 0.4)
        for r in range(rows_per_user):
            cat_id, cat_name, _root = _SYNTH_CATEGORIES[
                int(rng.integers(len(_SYNTH_CATEGORIES)))
            ]
            lat = base_lat + float(rng.normal(0, 0.02))
            lon = base_lon + float(rng.normal(0, 0.02))
            ts = (
                f"{weekdays[int(rng.integers(7))]} "
                f"{months[int(rng.integers(6))]} "
                f"{int(rng.integers(1, 29)):02d} "
                f"{int(rng.integers(24)):02d}:{int(rng.integers(60)):02d}:"
                f"{int(rng.integers(60)):02d} +0000 2012"
            )
            fields = [uid, f"poi{u:04d}{r:03d}", cat_id, cat_name, repr(lat), repr(lon)]
            if with_offset:
                fields.append("-240")
            fields.append(ts)
            lines.append("\t".join(fields))
    return "\n".join(lines) + "\n"
