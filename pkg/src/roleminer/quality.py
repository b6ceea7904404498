"""Role partition quality: centroids, silhouette variant, randomness.

The silhouette used throughout is (ORMin - TRMax) / max(ORMin, TRMax), where
TRMax is the farthest co-member of the user's role and ORMin the nearest
foreign role centroid. This is not the classical mean-based silhouette; the
classical one is deliberately absent from the pipeline.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist


class QualityError(ValueError):
    pass


@dataclass
class Partition:
    """Disjoint role member lists covering the user set, plus their vectors."""

    roles: list[str]
    members: dict[str, set[str]]
    vectors: dict[str, np.ndarray]

    def validate(self) -> None:
        if set(self.members) != set(self.roles):
            raise QualityError("member lists do not match the role list")
        seen: set[str] = set()
        for role in self.roles:
            dup = seen & self.members[role]
            if dup:
                raise QualityError(f"users in multiple roles: {sorted(dup)}")
            seen |= self.members[role]
        if seen != set(self.vectors):
            missing = set(self.vectors) ^ seen
            raise QualityError(f"member lists do not cover the user set: {sorted(missing)}")

    def users(self) -> list[str]:
        return sorted(self.vectors)

    def role_of(self, user: str) -> str:
        for role in self.roles:
            if user in self.members[role]:
                return role
        raise QualityError(f"user {user!r} not in any role")


@dataclass
class UserSilhouette:
    tr_max: float | None  # None: the user's role has no other member
    or_min: float
    se: float


@dataclass
class SilhouetteBreakdown:
    per_user: dict[str, UserSilhouette] = field(default_factory=dict)
    average: float = 0.0


def centroid(vectors: Iterable[np.ndarray] | np.ndarray) -> np.ndarray:
    arr = np.asarray(vectors if isinstance(vectors, np.ndarray) else list(vectors), float)
    if arr.size == 0:
        raise QualityError("centroid of an empty set")
    return arr.mean(axis=0)


def tr_max(
    user: str, role_members: Iterable[str], vectors: Mapping[str, np.ndarray]
) -> float | None:
    """Max distance from the user to the role's other members; None if alone."""
    u = vectors[user]
    others = [m for m in role_members if m != user]
    if not others:
        return None
    return float(max(np.linalg.norm(u - vectors[m]) for m in others))


def or_min(user_vec: np.ndarray, other_centroids: Sequence[np.ndarray]) -> float:
    """Min distance from the user to the other roles' centroids."""
    if len(other_centroids) == 0:
        raise QualityError("or_min needs at least one other role")
    return float(min(np.linalg.norm(user_vec - c) for c in other_centroids))


def _se(tm: float | None, om: float) -> float:
    if tm is None:
        return 0.0
    if tm == 0.0 and om == 0.0:
        return 0.0
    return (om - tm) / max(om, tm)


def _role_centroids(
    partition: Partition, centroids: Mapping[str, np.ndarray] | None
) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    for role in partition.roles:
        if centroids is not None and role in centroids:
            out[role] = np.asarray(centroids[role], float)
        elif partition.members[role]:
            idx = sorted(partition.members[role])
            out[role] = np.stack([partition.vectors[m] for m in idx]).mean(axis=0)
    return out


def silhouette(
    user: str,
    partition: Partition,
    centroids: Mapping[str, np.ndarray] | None = None,
) -> float:
    """Silhouette of one user within its role; singleton roles score 0."""
    if len(partition.roles) < 2:
        raise QualityError("silhouette undefined for a single-role partition")
    role = partition.role_of(user)
    cents = _role_centroids(partition, centroids)
    others = [cents[r] for r in partition.roles if r != role and r in cents]
    om = or_min(partition.vectors[user], others)
    tm = tr_max(user, partition.members[role], partition.vectors)
    return _se(tm, om)


def silhouette_breakdown(
    partition: Partition,
    centroids: Mapping[str, np.ndarray] | None = None,
) -> SilhouetteBreakdown:
    """Per-user TRMax / ORMin / Se plus their arithmetic mean."""
    if len(partition.roles) < 2:
        raise QualityError("silhouette undefined for a single-role partition")
    users = partition.users()
    if not users:
        raise QualityError("empty partition")
    index = {u: i for i, u in enumerate(users)}
    X = np.stack([partition.vectors[u] for u in users])
    D = cdist(X, X)

    cents = _role_centroids(partition, centroids)
    cent_roles = [r for r in partition.roles if r in cents]
    if len(cent_roles) < 2:
        raise QualityError("fewer than two roles have a computable centroid")
    C = np.stack([cents[r] for r in cent_roles])
    DC = cdist(X, C)
    cent_col = {r: j for j, r in enumerate(cent_roles)}

    breakdown = SilhouetteBreakdown()
    total = 0.0
    for role in partition.roles:
        member_idx = np.array(sorted(index[m] for m in partition.members[role]), int)
        other_cols = [cent_col[r] for r in cent_roles if r != role]
        if not other_cols:
            raise QualityError(f"no foreign centroid for role {role!r}")
        for u in sorted(partition.members[role]):
            i = index[u]
            if len(member_idx) <= 1:
                tm = None
            else:
                tm = float(D[i, member_idx].max())  # self-distance 0 never wins
            om = float(DC[i, other_cols].min())
            se = _se(tm, om)
            breakdown.per_user[u] = UserSilhouette(tr_max=tm, or_min=om, se=se)
            total += se
    breakdown.average = total / len(users)
    return breakdown


def avg_silhouette(
    partition: Partition,
    centroids: Mapping[str, np.ndarray] | None = None,
) -> float:
    """Arithmetic mean of per-user silhouettes."""
    return silhouette_breakdown(partition, centroids).average


def in_count(before: set[str], after: set[str]) -> int:
    return len(set(before) & set(after))


def randomness(before: Partition, after: Partition) -> int:
    """Membership churn between two partitions with matched role identities:
    per role, users who left plus users who arrived, summed over roles."""
    if set(before.roles) != set(after.roles):
        raise QualityError(
            f"role lists differ: {sorted(before.roles)} vs {sorted(after.roles)}"
        )
    b_users = set().union(*before.members.values()) if before.members else set()
    a_users = set().union(*after.members.values()) if after.members else set()
    if b_users != a_users:
        raise QualityError("partitions cover different user sets")
    total = 0
    for role in before.roles:
        inc = in_count(before.members[role], after.members[role])
        total += (len(before.members[role]) - inc) + (len(after.members[role]) - inc)
    return total


def randomness_detail(before: Partition, after: Partition) -> dict:
    """Randomness plus the per-role intersection sizes behind it."""
    total = randomness(before, after)
    per_role = {
        role: in_count(before.members[role], after.members[role])
        for role in sorted(before.roles)
    }
    return {"per_role_in": per_role, "total": total}


def align_partition(reference: Partition, other: Partition) -> Partition:
    """Relabel ``other``'s roles onto ``reference``'s by maximum-weight
    bipartite matching on member overlap (cluster indices are arbitrary
    between independent runs, so churn is meaningful only after alignment)."""
    if len(reference.roles) != len(other.roles):
        raise QualityError("cannot align partitions with different role counts")
    overlap = np.zeros((len(reference.roles), len(other.roles)))
    for i, r in enumerate(reference.roles):
        for j, s in enumerate(other.roles):
            overlap[i, j] = len(reference.members[r] & other.members[s])
    rows, cols = linear_sum_assignment(overlap, maximize=True)
    members = {
        reference.roles[i]: set(other.members[other.roles[j]])
        for i, j in zip(rows, cols)
    }
    return Partition(
        roles=list(reference.roles), members=members, vectors=dict(other.vectors)
    )


def write_silhouette_csv(breakdown: SilhouetteBreakdown, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user_id", "tr_max", "or_min", "se"])
        for user in sorted(breakdown.per_user):
            row = breakdown.per_user[user]
            writer.writerow(
                [
                    user,
                    "" if row.tr_max is None else repr(row.tr_max),
                    repr(row.or_min),
                    repr(row.se),
                ]
            )


def write_randomness_json(detail: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(detail, fh, indent=2, sort_keys=True)
        fh.write("\n")
