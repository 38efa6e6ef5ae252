"""Distance-based auction plus consensus task allocation.

Each drone greedily claims its best-scoring visible target whenever it
holds no claim; a consensus stage then shares claim tables and resolves
conflicts so that every observable target ends up with exactly two
distinct drones.  Released drones receive additional reward on the
under-subscribed targets, which steers the next auction round.

Rounds are synchronous units.  Within a round the auction stage is
simultaneous, while the consensus stage sweeps drones in ascending id
order with each drone seeing the updates of earlier drones - a
deterministic serialization of the per-drone asynchronous process.  The
sweep is what lets an over-subscribed target shed claimants one at a
time instead of all at once.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import AssignmentError, ConfigurationError, ProtocolError

# Measured distances below this floor would blow up the 1/d reward.
MIN_SCORE_DISTANCE = 1e-6


@dataclass
class TaskTable:
    """One drone's belief of which drone claims which target.

    X[j, g] == 1 means "drone g claims target j" in this drone's view.
    extra_reward[j] is the additional reward this drone has accumulated
    for target j after releasing conflicting claims; it only grows.
    """

    X: np.ndarray  # (M, N) uint8
    extra_reward: np.ndarray  # (M,) float
    iteration: int = 0
    last_claim: int | None = None

    @classmethod
    def empty(cls, n_targets: int, n_drones: int) -> "TaskTable":
        return cls(
            X=np.zeros((n_targets, n_drones), dtype=np.uint8),
            extra_reward=np.zeros(n_targets),
        )

    def copy(self) -> "TaskTable":
        return TaskTable(
            X=self.X.copy(),
            extra_reward=self.extra_reward.copy(),
            iteration=self.iteration,
            last_claim=self.last_claim,
        )

    def claims_on(self, target: int) -> int:
        return int(self.X[target, :].sum())

    def own_claim(self, drone: int) -> int | None:
        rows = np.flatnonzero(self.X[:, drone])
        return int(rows[0]) if rows.size else None

    def table_hash(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.X).tobytes())
        return h.hexdigest()[:16]


@dataclass
class ScoreVector:
    """Reward scores of one drone over its visible targets.

    The base reward is the inverse measured distance; the total adds the
    drone's extra rewards from the conflict-release rule.
    """

    drone_id: int
    base: dict[int, float]  # target id -> 1/d reward, visible targets only

    @classmethod
    def from_distances(cls, drone_id: int, distances: dict[int, float]) -> "ScoreVector":
        base = {j: 1.0 / max(d, MIN_SCORE_DISTANCE) for j, d in distances.items()}
        return cls(drone_id=drone_id, base=base)

    @property
    def visible(self) -> set[int]:
        return set(self.base)

    def total(self, target: int, table: TaskTable) -> float:
        return self.base[target] + float(table.extra_reward[target])

    def best_target(self, table: TaskTable) -> int | None:
        """Highest-scoring visible target; ties break to the lowest id."""
        if not self.base:
            return None
        return min(self.base, key=lambda j: (-self.total(j, table), j))


def auction_step(drone_id: int, table: TaskTable, scores: ScoreVector) -> TaskTable:
    """Claim the best visible target if this drone currently holds no claim.

    No-op when the drone already has a claim or sees no targets.
    """
    out = table.copy()
    if out.own_claim(drone_id) is not None:
        return out
    j_star = scores.best_target(out)
    if j_star is None:
        return out
    out.X[j_star, drone_id] = 1
    out.last_claim = j_star
    return out


def consensus_step(
    drone_id: int,
    own: TaskTable,
    received: dict[int, TaskTable],
    scores: ScoreVector,
    eps_tilde: float = 1.5,
) -> TaskTable:
    """Merge received claim tables into this drone's view, then resolve conflicts.

    Columns owned by direct neighbors are copied verbatim from the
    owner's table, so claim releases propagate (an elementwise max could
    only ever add claims).  Columns of drones not heard from directly are
    max-merged as relayed information.

    A drone releases its own claim when it sees more than one target, its
    claimed target has more than two claimants, and some visible target
    has at most two; each such under-subscribed target then gains extra
    reward proportional to the score gap.  Extra rewards never decrease.
    """
    if eps_tilde <= 1.0:
        raise ConfigurationError(f"reward adjustment factor must exceed 1, got {eps_tilde}")
    out = own.copy()
    n_targets, n_drones = out.X.shape
    for g, tab in received.items():
        if tab.X.shape != (n_targets, n_drones):
            raise ProtocolError(
                f"table from drone {g} has shape {tab.X.shape}, expected {(n_targets, n_drones)}"
            )

    # Owner-authoritative columns for drones heard from directly.
    for g, tab in received.items():
        out.X[:, g] = tab.X[:, g]
    # Relayed columns: max-merge, never dropping claims we only know second-hand.
    direct = set(received) | {drone_id}
    for g in range(n_drones):
        if g in direct:
            continue
        for tab in received.values():
            np.maximum(out.X[:, g], tab.X[:, g], out=out.X[:, g])

    j_star = out.last_claim
    if (
        j_star is not None
        and out.X[j_star, drone_id] == 1
        and len(scores.visible) > 1
        and out.claims_on(j_star) > 2
    ):
        under = [h for h in sorted(scores.visible) if out.claims_on(h) <= 2]
        if under:
            out.X[j_star, drone_id] = 0
            c_star = scores.total(j_star, out)
            for h in under:
                boost = eps_tilde * (c_star - scores.total(h, out))
                out.extra_reward[h] = max(out.extra_reward[h], boost)
            out.last_claim = None
    out.iteration += 1
    return out


@dataclass
class AssignmentResult:
    """Converged pairing plus the per-round trace of the allocation run."""

    pairs: dict[int, tuple[int, int]]  # target id -> (drone i, drone g), i < g
    rounds: int
    trace: list[dict] = field(default_factory=list)


def _deficient_targets(tables: list[TaskTable], n_targets: int) -> list[int]:
    bad = []
    for j in range(n_targets):
        claimants = [g for g, tab in enumerate(tables) if tab.X[j, g] == 1]
        if len(claimants) != 2:
            bad.append(j)
    return bad


def run_assignment(
    distances: dict[tuple[int, int], float],
    n_drones: int,
    n_targets: int,
    neighbors: dict[int, set[int]],
    eps_tilde: float = 1.5,
    max_rounds: int | None = None,
) -> AssignmentResult:
    """Run auction/consensus rounds until each target has exactly two drones.

    distances maps visible (drone, target) pairs to the measured mean
    range at assignment time.  Raises AssignmentError, naming the
    deficient targets, when the round cap is hit or when a full round
    passes without any table changing while the allocation is incomplete.
    """
    if max_rounds is None:
        max_rounds = 10 * n_drones
    scores = [
        ScoreVector.from_distances(i, {j: d for (di, j), d in distances.items() if di == i})
        for i in range(n_drones)
    ]
    tables = [TaskTable.empty(n_targets, n_drones) for _ in range(n_drones)]
    trace: list[dict] = []

    def terminal() -> bool:
        for i in range(n_drones):
            for j in scores[i].visible:
                if tables[i].claims_on(j) != 2:
                    return False
        return True

    rounds_used = 0
    for rnd in range(max_rounds):
        rounds_used = rnd + 1
        before = [(t.X.copy(), t.extra_reward.copy()) for t in tables]
        # Auction stage: simultaneous; every unassigned drone claims its best target.
        for i in range(n_drones):
            tables[i] = auction_step(i, tables[i], scores[i])
        # Consensus stage: ascending-id sweep, later drones see earlier updates.
        for i in range(n_drones):
            received = {g: tables[g] for g in sorted(neighbors.get(i, set()))}
            tables[i] = consensus_step(i, tables[i], received, scores[i], eps_tilde)
            trace.append(
                {
                    "round": rnd,
                    "drone": i,
                    "claimed": tables[i].own_claim(i),
                    "table_hash": tables[i].table_hash(),
                }
            )
        if terminal():
            break
        unchanged = all(
            np.array_equal(bx, tables[i].X) and np.array_equal(be, tables[i].extra_reward)
            for i, (bx, be) in enumerate(before)
        )
        if unchanged:
            bad = _deficient_targets(tables, n_targets)
            raise AssignmentError(
                f"allocation stalled after {rnd + 1} rounds; targets without two drones: {bad}",
                unassigned=tuple(bad),
            )
    else:
        bad = _deficient_targets(tables, n_targets)
        raise AssignmentError(
            f"allocation hit the {max_rounds}-round cap; targets without two drones: {bad}",
            unassigned=tuple(bad),
        )

    pairs: dict[int, tuple[int, int]] = {}
    for j in range(n_targets):
        claimants = sorted(g for g, tab in enumerate(tables) if tab.X[j, g] == 1)
        if len(claimants) != 2:
            raise AssignmentError(
                f"target {j} converged with {len(claimants)} drones instead of two",
                unassigned=(j,),
            )
        pairs[j] = (claimants[0], claimants[1])
    return AssignmentResult(pairs=pairs, rounds=rounds_used, trace=trace)
