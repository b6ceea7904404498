"""Greedy silhouette-rewarded role stabilization.

Each round walks the user list, computes the hypothetical silhouette of the
user in every role against a reference snapshot, moves the user to the role
with the best reward, and blends the reward into a user-role state matrix.
The loop stops when the round's average silhouette clears ``gamma`` while
membership churn against the previous round stays below ``delta``.

By default rewards are evaluated against the previous round's memberships and
centroids (a frozen snapshot), which makes a round a well-defined map from
partition to partition regardless of processing order. The literal
assign-and-update-centroid-as-you-go variant is available via
``reference="incremental"`` for fidelity experiments.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from time import perf_counter
from typing import Mapping

import numpy as np
from scipy.spatial.distance import cdist

from .quality import Partition, QualityError, silhouette_breakdown
from .rng import STREAM_STABILIZE, spawn

ORDER_POLICIES = ("sorted", "shuffle")
REFERENCE_POLICIES = ("frozen", "incremental")


class StabilizeError(ValueError):
    pass


@dataclass
class StabilizeConfig:
    alpha: float = 1.0
    beta: float = 0.5
    gamma: float = 0.7
    delta: float = 0.0  # absolute churn count; convergence needs rand < delta
    max_rounds: int = 500
    order: str = "sorted"
    seed: int = 0
    reference: str = "frozen"

    def validate(self) -> None:
        if not 0.0 <= self.beta <= 1.0:
            raise StabilizeError(f"beta must be in [0, 1], got {self.beta}")
        if not -1.0 < self.gamma < 1.0:
            raise StabilizeError(f"gamma must be in (-1, 1), got {self.gamma}")
        if self.delta < 0:
            raise StabilizeError(f"delta must be >= 0, got {self.delta}")
        if self.max_rounds < 1:
            raise StabilizeError(f"max_rounds must be >= 1, got {self.max_rounds}")
        if self.order not in ORDER_POLICIES:
            raise StabilizeError(f"order must be one of {ORDER_POLICIES}")
        if self.reference not in REFERENCE_POLICIES:
            raise StabilizeError(f"reference must be one of {REFERENCE_POLICIES}")

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "gamma": self.gamma,
            "delta": self.delta,
            "max_rounds": self.max_rounds,
            "order": self.order,
            "seed": self.seed,
            "reference": self.reference,
        }


@dataclass
class StateMatrix:
    """User-role membership values: rows follow ``users``, columns ``roles``."""

    values: np.ndarray
    users: list[str]
    roles: list[str]
    round: int = 0

    def row_of(self, user: str) -> int:
        return self.users.index(user)


@dataclass
class RoleSnapshot:
    """Reference memberships and centroids used to score one round's moves.

    Every role carries a centroid: an emptied role keeps the last centroid it
    had, so the role list and the churn metric stay well-defined.
    """

    roles: list[str]
    members: dict[str, set[str]]
    centroids: dict[str, np.ndarray]
    vectors: Mapping[str, np.ndarray]


@dataclass
class RoundTrace:
    round: int
    avg_silhouette: float | None  # None: fewer than two roles had members
    randomness: int
    moved: int
    duration_s: float


@dataclass
class StabilizationReport:
    config: StabilizeConfig
    rounds: list[RoundTrace]
    converged: bool
    rounds_used: int
    final: Partition
    state: StateMatrix


def init_state(partition: Partition, alpha: float) -> StateMatrix:
    """Zero matrix with ``alpha`` at each user's membership cell."""
    partition.validate()
    users = partition.users()
    roles = list(partition.roles)
    values = np.zeros((len(users), len(roles)))
    row = {u: i for i, u in enumerate(users)}
    for j, role in enumerate(roles):
        for u in partition.members[role]:
            values[row[u], j] = alpha
    return StateMatrix(values=values, users=users, roles=roles)


def make_snapshot(
    partition: Partition,
    fallback_centroids: Mapping[str, np.ndarray] | None = None,
) -> RoleSnapshot:
    centroids: dict[str, np.ndarray] = {}
    for role in partition.roles:
        if partition.members[role]:
            idx = sorted(partition.members[role])
            centroids[role] = np.stack([partition.vectors[m] for m in idx]).mean(axis=0)
        elif fallback_centroids is not None and role in fallback_centroids:
            centroids[role] = np.asarray(fallback_centroids[role], float)
        else:
            raise StabilizeError(
                f"role {role!r} is empty and has no frozen centroid to fall back on"
            )
    return RoleSnapshot(
        roles=list(partition.roles),
        members={r: set(partition.members[r]) for r in partition.roles},
        centroids=centroids,
        vectors=partition.vectors,
    )


def _se_vec(tm: np.ndarray, om: np.ndarray) -> np.ndarray:
    denom = np.maximum(om, tm)
    safe = np.where(denom == 0.0, 1.0, denom)
    return np.where(denom == 0.0, 0.0, (om - tm) / safe)


def instant_rewards(user: str, snapshot: RoleSnapshot) -> np.ndarray:
    """Hypothetical silhouette of ``user`` in each role of the snapshot.

    TRMax is taken against the role's reference members (minus the user);
    ORMin against every other role's reference centroid. A role where the
    user would sit alone rewards 0.
    """
    if len(snapshot.roles) < 2:
        raise StabilizeError("rewards need at least two roles")
    u = np.asarray(snapshot.vectors[user], float)
    rewards = np.zeros(len(snapshot.roles))
    cents = [snapshot.centroids[r] for r in snapshot.roles]
    for j, role in enumerate(snapshot.roles):
        others = [m for m in sorted(snapshot.members[role]) if m != user]
        if not others:
            continue  # user would sit alone: reward 0
        om = min(
            float(np.linalg.norm(u - c)) for jj, c in enumerate(cents) if jj != j
        )
        tm = max(float(np.linalg.norm(u - snapshot.vectors[m])) for m in others)
        if not (tm == 0.0 and om == 0.0):
            rewards[j] = (om - tm) / max(om, tm)
    return rewards


def greedy_select(rewards: np.ndarray, state_row: np.ndarray) -> int:
    """Argmax reward; ties break to the larger state value, then lower index."""
    rewards = np.asarray(rewards)
    if rewards.size == 0:
        raise StabilizeError("empty reward vector")
    tied = np.flatnonzero(rewards == rewards.max())
    if len(tied) > 1:
        state_row = np.asarray(state_row)
        tied = tied[state_row[tied] == state_row[tied].max()]
    return int(tied[0])


def update_state(
    state: StateMatrix, i: int, j: int, reward: float, beta: float
) -> float:
    """EMA blend of the reward into one state cell; returns the new value."""
    state.values[i, j] = (1.0 - beta) * state.values[i, j] + beta * reward
    return float(state.values[i, j])


def _reward_matrix(
    users: list[str], X: np.ndarray, snapshot: RoleSnapshot
) -> np.ndarray:
    """All users' reward vectors against one frozen snapshot."""
    index = {u: i for i, u in enumerate(users)}
    D = cdist(X, X)
    C = np.stack([snapshot.centroids[r] for r in snapshot.roles])
    DC = cdist(X, C)
    n, k = len(users), len(snapshot.roles)
    rewards = np.zeros((n, k))
    for j, role in enumerate(snapshot.roles):
        other = [jj for jj in range(k) if jj != j]
        om = DC[:, other].min(axis=1)
        m_idx = np.array(sorted(index[m] for m in snapshot.members[role]), int)
        if len(m_idx) == 0:
            continue  # hypothetical singleton for everyone: reward 0
        tm = D[:, m_idx].max(axis=1)  # self-distance 0 never wins the max
        col = _se_vec(tm, om)
        if len(m_idx) == 1:
            col[m_idx[0]] = 0.0  # sole member would stay alone
        rewards[:, j] = col
    return rewards


@dataclass
class RoundResult:
    partition: Partition
    centroids: dict[str, np.ndarray]
    randomness: int
    avg_silhouette: float | None
    moved: int


def _processing_order(n: int, config: StabilizeConfig, round_no: int) -> np.ndarray:
    if config.order == "shuffle":
        return spawn(config.seed, STREAM_STABILIZE, round_no).permutation(n)
    return np.arange(n)


def run_round(
    previous: Partition,
    state: StateMatrix,
    config: StabilizeConfig,
    frozen_centroids: Mapping[str, np.ndarray] | None = None,
    round_no: int = 1,
) -> RoundResult:
    """One full pass assigning every user greedily by instant reward."""
    if len(previous.roles) < 2:
        raise StabilizeError("stabilization needs at least two roles")
    users = state.users
    roles = state.roles
    X = np.stack([previous.vectors[u] for u in users])
    snapshot = make_snapshot(previous, frozen_centroids)
    order = _processing_order(len(users), config, round_no)

    new_members: dict[str, set[str]] = {r: set() for r in roles}
    if config.reference == "frozen":
        rewards = _reward_matrix(users, X, snapshot)
        for i in order:
            j = greedy_select(rewards[i], state.values[i])
            new_members[roles[j]].add(users[i])
            update_state(state, i, j, float(rewards[i, j]), config.beta)
    else:
        # Literal variant: centroids track the lists being built this round;
        # roles not yet populated fall back to the previous round's centroid.
        sums = {r: np.zeros(X.shape[1]) for r in roles}
        for i in order:
            user = users[i]
            live = RoleSnapshot(
                roles=roles,
                members=new_members,
                centroids={
                    r: (
                        sums[r] / len(new_members[r])
                        if new_members[r]
                        else snapshot.centroids[r]
                    )
                    for r in roles
                },
                vectors=previous.vectors,
            )
            vec = instant_rewards(user, live)
            j = greedy_select(vec, state.values[i])
            new_members[roles[j]].add(user)
            sums[roles[j]] += X[i]
            update_state(state, i, j, float(vec[j]), config.beta)

    state.round += 1
    new_partition = Partition(
        roles=list(roles),
        members=new_members,
        vectors=previous.vectors,
    )
    churn = 0
    moved = 0
    for role in roles:
        inc = len(previous.members[role] & new_members[role])
        churn += (len(previous.members[role]) - inc) + (len(new_members[role]) - inc)
        moved += len(previous.members[role]) - inc
    try:
        avg_se = silhouette_breakdown(new_partition).average
    except QualityError:
        avg_se = None  # all users collapsed into fewer than two roles
    next_centroids = {
        r: (
            np.stack([previous.vectors[m] for m in sorted(new_members[r])]).mean(axis=0)
            if new_members[r]
            else snapshot.centroids[r]
        )
        for r in roles
    }
    return RoundResult(
        partition=new_partition,
        centroids=next_centroids,
        randomness=churn,
        avg_silhouette=avg_se,
        moved=moved,
    )


def stabilize(
    initial: Partition,
    config: StabilizeConfig,
    initial_centroids: Mapping[str, np.ndarray] | None = None,
) -> StabilizationReport:
    """Run rounds until average silhouette > gamma and churn < delta, or the
    round cap is hit; non-convergence is reported, not raised."""
    initial.validate()
    config.validate()
    state = init_state(initial, config.alpha)
    prev = initial
    centroids = initial_centroids
    trace: list[RoundTrace] = []
    converged = False
    for round_no in range(1, config.max_rounds + 1):
        t0 = perf_counter()
        result = run_round(prev, state, config, centroids, round_no)
        trace.append(
            RoundTrace(
                round=round_no,
                avg_silhouette=result.avg_silhouette,
                randomness=result.randomness,
                moved=result.moved,
                duration_s=perf_counter() - t0,
            )
        )
        prev = result.partition
        centroids = result.centroids
        if (
            result.avg_silhouette is not None
            and result.avg_silhouette > config.gamma
            and result.randomness < config.delta
        ):
            converged = True
            break
    return StabilizationReport(
        config=config,
        rounds=trace,
        converged=converged,
        rounds_used=len(trace),
        final=prev,
        state=state,
    )


def report_to_dict(report: StabilizationReport) -> dict:
    """JSON form of a report. Round durations are timing, not results, and
    live in the run manifest instead so outputs stay byte-reproducible."""
    assignments = {
        u: role for role in report.final.roles for u in report.final.members[role]
    }
    return {
        "config": report.config.to_dict(),
        "converged": report.converged,
        "rounds_used": report.rounds_used,
        "rounds": [
            {
                "round": t.round,
                "avg_silhouette": t.avg_silhouette,
                "randomness": t.randomness,
                "moved": t.moved,
            }
            for t in report.rounds
        ],
        "roles": list(report.final.roles),
        "final_assignments": {u: assignments[u] for u in sorted(assignments)},
    }


def write_state_csv(state: StateMatrix, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user_id"] + list(state.roles))
        for i, user in enumerate(state.users):
            writer.writerow([user] + [repr(float(x)) for x in state.values[i]])


def write_report_json(report: StabilizationReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(report_to_dict(report), fh, indent=2, sort_keys=True)
        fh.write("\n")
