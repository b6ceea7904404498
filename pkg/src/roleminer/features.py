"""Per-user context-view count matrices and their flat vector form.

Each user gets one counts matrix per configured (context, view) pair: rows are
context buckets (hour of day, home-distance level), columns are view labels
(root categories), and each accepted event increments exactly one cell.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .ingest import CheckIn, GeoPoint, RootCategoryMap, distance_bucket, haversine_km

TIME_AXIS = "time"
DISTANCE_AXIS = "distance"
ROOT_VIEW = "root"

NORMALIZE_MODES = ("none", "l1_global")


class FeatureError(ValueError):
    pass


@dataclass(frozen=True)
class ContextAxis:
    """An ordered set of context buckets, e.g. the 24 hours of a day."""

    name: str
    values: tuple[str, ...]

    def __post_init__(self):
        if not self.values or len(set(self.values)) != len(self.values):
            raise FeatureError(f"axis {self.name!r} needs unique, non-empty values")


@dataclass(frozen=True)
class ViewAxis:
    """An ordered set of view labels, e.g. the root categories."""

    name: str
    values: tuple[str, ...]

    def __post_init__(self):
        if not self.values or len(set(self.values)) != len(self.values):
            raise FeatureError(f"axis {self.name!r} needs unique, non-empty values")


def time_axis() -> ContextAxis:
    return ContextAxis(TIME_AXIS, tuple(f"h{h:02d}" for h in range(24)))


def distance_axis() -> ContextAxis:
    return ContextAxis(DISTANCE_AXIS, ("d0", "d1", "d2", "d3"))


def root_view(labels: Sequence[str]) -> ViewAxis:
    return ViewAxis(ROOT_VIEW, tuple(labels))


@dataclass(frozen=True)
class FeatureMatrix:
    """One user's counts over a (context, view) pair."""

    user_id: str
    context: ContextAxis
    view: ViewAxis
    counts: np.ndarray
    zero_total: bool = False  # set when normalization hit an all-zero matrix

    def __post_init__(self):
        expected = (len(self.context.values), len(self.view.values))
        if self.counts.shape != expected:
            raise FeatureError(
                f"counts shape {self.counts.shape} != axes shape {expected}"
            )
        if np.any(self.counts < 0):
            raise FeatureError("negative feature counts")


@dataclass
class FeatureSet:
    """All users' matrices, one per configured (context, view) pair."""

    contexts: list[ContextAxis]
    views: list[ViewAxis]
    matrices: dict[str, dict[tuple[str, str], FeatureMatrix]] = field(
        default_factory=dict
    )
    skipped_events: int = 0

    @property
    def pairs(self) -> list[tuple[str, str]]:
        return [(c.name, v.name) for c in self.contexts for v in self.views]

    def users(self) -> list[str]:
        return sorted(self.matrices)

    def matrix(self, user_id: str, pair: tuple[str, str]) -> FeatureMatrix:
        return self.matrices[user_id][pair]


def _context_index(axis: ContextAxis, c: CheckIn, home: GeoPoint | None) -> int:
    if axis.name == TIME_AXIS:
        return c.hour
    if axis.name == DISTANCE_AXIS:
        if home is None:
            raise FeatureError(f"user {c.user_id!r} has no home for distance context")
        return distance_bucket(haversine_km(home, c.point))
    raise FeatureError(f"unknown context axis {axis.name!r}")


def build_ufs(
    checkins: Iterable[CheckIn],
    contexts: Sequence[ContextAxis],
    views: Sequence[ViewAxis],
    root_map: RootCategoryMap,
    homes: Mapping[str, GeoPoint] | None = None,
    strict: bool = False,
) -> FeatureSet:
    """Count each user's events into one matrix per (context, view) pair.

    An event whose category does not resolve in ``root_map`` raises in strict
    mode and is otherwise skipped (and counted) across all pairs, so matrix
    totals stay equal to the per-user accepted event count.
    """
    homes = homes or {}
    view_index = {
        v.name: {label: i for i, label in enumerate(v.values)} for v in views
    }
    fs = FeatureSet(contexts=list(contexts), views=list(views))
    for c in checkins:
        root = root_map.resolve(c)
        if root is None:
            if strict:
                raise FeatureError(
                    f"category {c.category_id!r} / {c.category_name!r} "
                    "not in root map"
                )
            fs.skipped_events += 1
            continue
        per_user = fs.matrices.get(c.user_id)
        if per_user is None:
            per_user = {
                (ctx.name, v.name): FeatureMatrix(
                    c.user_id,
                    ctx,
                    v,
                    np.zeros((len(ctx.values), len(v.values))),
                )
                for ctx in contexts
                for v in views
            }
            fs.matrices[c.user_id] = per_user
        home = homes.get(c.user_id)
        for ctx in contexts:
            row = _context_index(ctx, c, home)
            for v in views:
                if v.name == ROOT_VIEW:
                    col = view_index[v.name].get(root)
                    if col is None:
                        raise FeatureError(f"root label {root!r} not in view axis")
                else:
                    raise FeatureError(f"unknown view axis {v.name!r}")
                per_user[(ctx.name, v.name)].counts[row, col] += 1
    return fs


def normalize(m: FeatureMatrix, mode: str = "l1_global") -> FeatureMatrix:
    """``l1_global`` scales entries to sum to 1; ``none`` is the identity.

    An all-zero matrix cannot be scaled and comes back unchanged with its
    ``zero_total`` flag set.
    """
    if mode not in NORMALIZE_MODES:
        raise FeatureError(f"unknown normalize mode {mode!r}")
    if mode == "none":
        return m
    total = float(m.counts.sum())
    if total == 0.0:
        return replace(m, zero_total=True)
    return replace(m, counts=m.counts / total)


def flatten(m: FeatureMatrix) -> np.ndarray:
    """Row-major vector of length |context| * |view|."""
    return m.counts.ravel().copy()


def unflatten(vec: np.ndarray, context: ContextAxis, view: ViewAxis) -> np.ndarray:
    return np.asarray(vec).reshape(len(context.values), len(view.values))


def cell_labels(context: ContextAxis, view: ViewAxis) -> list[str]:
    """Flattened column labels in row-major order, e.g. ``h17|Food``."""
    return [f"{c}|{v}" for c in context.values for v in view.values]


def pair_vectors(
    fs: FeatureSet, pair: tuple[str, str], mode: str = "l1_global"
) -> dict[str, np.ndarray]:
    """Flattened (optionally normalized) vectors for one pair, keyed by user."""
    return {
        u: flatten(normalize(fs.matrix(u, pair), mode)) for u in fs.users()
    }


def write_feature_csv(
    fs: FeatureSet, pair: tuple[str, str], path, mode: str = "l1_global"
) -> None:
    """One CSV per pair: row per user (sorted), columns are cell labels."""
    ctx = next(c for c in fs.contexts if c.name == pair[0])
    view = next(v for v in fs.views if v.name == pair[1])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user_id"] + cell_labels(ctx, view))
        for user in fs.users():
            vec = flatten(normalize(fs.matrix(user, pair), mode))
            writer.writerow([user] + [repr(float(x)) for x in vec])


def write_feature_meta(fs: FeatureSet, path, mode: str) -> None:
    meta = {
        "contexts": [{"name": c.name, "values": list(c.values)} for c in fs.contexts],
        "views": [{"name": v.name, "values": list(v.values)} for v in fs.views],
        "normalization": mode,
        "user_count": len(fs.matrices),
        "skipped_events": fs.skipped_events,
        "event_counts": {
            u: int(fs.matrix(u, fs.pairs[0]).counts.sum()) for u in fs.users()
        },
    }
    with open(path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_feature_csv(path) -> tuple[list[str], list[str], np.ndarray]:
    """Read a feature CSV back as (user_ids, column_labels, matrix)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "user_id":
            raise FeatureError(f"{path}: first column must be user_id")
        labels = header[1:]
        users: list[str] = []
        rows: list[list[float]] = []
        for row in reader:
            if len(row) != len(header):
                raise FeatureError(
                    f"{path}: row for {row[0] if row else '?'} has "
                    f"{len(row) - 1} cells, expected {len(labels)}"
                )
            users.append(row[0])
            rows.append([float(x) for x in row[1:]])
    if len(set(users)) != len(users):
        dup = sorted({u for u in users if users.count(u) > 1})
        raise FeatureError(f"{path}: duplicate user_id rows: {dup[:3]}")
    return users, labels, np.array(rows) if rows else np.empty((0, len(labels)))
