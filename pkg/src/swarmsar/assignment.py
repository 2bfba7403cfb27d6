"""Survey-point assignment: greedy workload-penalised baseline and partition checks."""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_non_negative, check_point_ids, check_positions
from .fire_world import SurveySet

__all__ = [
    "Assignment",
    "GreedyParams",
    "VerdictKind",
    "ValidationVerdict",
    "ContractError",
    "MISSION_EXTRA",
    "MISSION_MISSING",
    "ROUTE_EXTRA",
    "ROUTE_MISSING",
    "workload_penalty",
    "assignment_metric",
    "GreedyAssigner",
    "greedy_assign",
    "validate_partition",
    "validate_assignment",
    "correction_message",
]

MISSION_EXTRA = (
    "You are hallucinating, creating more survey points than required. "
    "Do not invent, modify, or add any new points."
)
MISSION_MISSING = (
    "You have not assigned all survey points to UAVs. "
    "You must allocate all survey points to UAVs."
)
ROUTE_EXTRA = (
    "You have used more survey points than required. "
    "Do not invent, modify, or add any new points."
)
ROUTE_MISSING = (
    "You have generated a flight route not including all assigned survey points. "
    "You must visit every assigned survey point."
)

_MESSAGES = {
    "mission": (MISSION_EXTRA, MISSION_MISSING),
    "route": (ROUTE_EXTRA, ROUTE_MISSING),
}


class ContractError(RuntimeError):
    """A caller broke an operation's precondition."""


@dataclass(frozen=True)
class Assignment:
    """Ordered survey-point ids per UAV; slot ``k`` belongs to ``uav_ids[k]``."""

    per_uav: tuple[tuple[int, ...], ...]
    uav_ids: tuple[int, ...] | None = None

    def __post_init__(self):
        per_uav = tuple(tuple(int(i) for i in ids) for ids in self.per_uav)
        if not per_uav:
            raise ValueError("an assignment needs at least one UAV")
        object.__setattr__(self, "per_uav", per_uav)
        if self.uav_ids is None:
            object.__setattr__(self, "uav_ids", tuple(range(len(per_uav))))
        else:
            uav_ids = tuple(int(u) for u in self.uav_ids)
            if len(uav_ids) != len(per_uav):
                raise ValueError("uav_ids must match the number of id lists")
            object.__setattr__(self, "uav_ids", uav_ids)

    @property
    def uav_count(self) -> int:
        return len(self.per_uav)

    @property
    def counts(self) -> list[int]:
        return [len(ids) for ids in self.per_uav]

    @property
    def total(self) -> int:
        return sum(self.counts)

    def for_uav(self, uav_id: int) -> tuple[int, ...]:
        return self.per_uav[self.uav_ids.index(uav_id)]

    def to_wire(self) -> dict[str, list[int]]:
        return {f"uav_{u}": list(ids) for u, ids in zip(self.uav_ids, self.per_uav)}


@dataclass(frozen=True)
class GreedyParams:
    lam: float = 1.0
    B: float = 800.0

    def __post_init__(self):
        check_non_negative(self.lam, "lam")
        check_non_negative(self.B, "B")


class VerdictKind(str, enum.Enum):
    VALID = "Valid"
    EXTRA_OR_INVENTED = "ExtraOrInvented"
    MISSING = "Missing"
    BOTH = "Both"


@dataclass(frozen=True)
class ValidationVerdict:
    kind: VerdictKind
    extra_ids: tuple[int, ...] = ()
    missing_ids: tuple[int, ...] = ()
    duplicate_ids: tuple[int, ...] = ()
    unknown_ids: tuple[int, ...] = ()
    # cardinality comparison kept for traceability
    assigned_total: int = 0
    expected_total: int = 0

    @property
    def is_valid(self) -> bool:
        return self.kind is VerdictKind.VALID

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "extra_ids": list(self.extra_ids),
            "missing_ids": list(self.missing_ids),
            "assigned_total": self.assigned_total,
            "expected_total": self.expected_total,
        }


def workload_penalty(counts, i: int, B: float = 800.0) -> float:
    """Excess of UAV ``i``'s load over the fleet mean, scaled by ``B``."""
    counts = list(counts)
    if not counts:
        raise ValueError("counts must not be empty")
    if not 0 <= i < len(counts):
        raise IndexError(f"UAV index {i} out of range for {len(counts)} UAVs")
    mean = sum(counts) / len(counts)
    return max(0.0, counts[i] - mean) * B


def assignment_metric(distance: float, penalty: float, lam: float) -> float:
    if distance < 0:
        raise ValueError("distance must be >= 0")
    return distance + lam * penalty


class GreedyAssigner(ClusterMixin, BaseEstimator):
    """Greedy survey-point assignment with a workload penalty.

    Each iteration scores every (UAV, unassigned point) pair by the distance
    from the UAV's current position plus ``lam`` times its workload penalty
    and commits the cheapest pair. The chosen UAV then moves to that point.
    Ties go to the lower UAV index, then the lower point id.

    Parameters
    ----------
    uav_positions : array-like of shape (n_uavs, 2)
        Launch positions in meters.
    lam : float, default=1.0
        Weight of the workload penalty.
    B : float, default=800.0
        Penalty coefficient per point above the fleet mean.

    Attributes
    ----------
    labels_ : ndarray of shape (n_points,)
        Slot index of the UAV that received each input point.
    assignment_ : Assignment
        Point ids per UAV in the order they were assigned.
    """

    def __init__(self, uav_positions=None, lam=1.0, B=800.0):
        self.uav_positions = uav_positions
        self.lam = lam
        self.B = B

    def fit(self, X, y=None, point_ids=None):
        X = check_positions(X, "X")
        ids = check_point_ids(point_ids, len(X))
        uavs = check_positions(self.uav_positions, "uav_positions")
        check_non_negative(self.lam, "lam")
        check_non_negative(self.B, "B")

        order = np.argsort(ids, kind="stable")
        pts = X[order]
        sorted_ids = ids[order]
        n_uavs = len(uavs)

        current = uavs.copy()
        counts = np.zeros(n_uavs)
        remaining = np.ones(len(pts), dtype=bool)
        per_uav: list[list[int]] = [[] for _ in range(n_uavs)]
        labels = np.empty(len(pts), dtype=int)

        for _ in range(len(pts)):
            cols = np.flatnonzero(remaining)
            d = np.hypot(pts[cols, 0][None, :] - current[:, 0:1], pts[cols, 1][None, :] - current[:, 1:2])
            penalty = np.maximum(0.0, counts - counts.mean()) * self.B
            cost = d + self.lam * penalty[:, None]
            # row-major argmin: lowest UAV index first, then lowest point id
            u, k = np.unravel_index(int(np.argmin(cost)), cost.shape)
            j = cols[k]
            per_uav[u].append(int(sorted_ids[j]))
            labels[j] = u
            counts[u] += 1
            current[u] = pts[j]
            remaining[j] = False

        self.labels_ = np.empty(len(pts), dtype=int)
        self.labels_[order] = labels
        self.assignment_ = Assignment(tuple(tuple(a) for a in per_uav))
        self.n_uavs_ = n_uavs
        return self

    def predict_assignment(self) -> Assignment:
        check_is_fitted(self, "assignment_")
        return self.assignment_


def greedy_assign(uav_positions, survey: SurveySet, params: GreedyParams = GreedyParams()) -> Assignment:
    if len(survey) == 0:
        raise ValueError("survey set is empty")
    est = GreedyAssigner(uav_positions, lam=params.lam, B=params.B)
    est.fit(survey.positions, point_ids=survey.ids)
    return est.assignment_


def validate_partition(id_lists, expected_ids) -> ValidationVerdict:
    """Set-equality check of ``id_lists`` against ``expected_ids``.

    Duplicates and ids outside ``expected_ids`` count as extra; expected ids
    that never appear count as missing.
    """
    expected = set(int(i) for i in expected_ids)
    seen = Counter(int(i) for ids in id_lists for i in ids)
    duplicates = sorted(i for i, n in seen.items() if n > 1 and i in expected)
    unknown = sorted(i for i in seen if i not in expected)
    extra = sorted(set(duplicates) | set(unknown))
    missing = sorted(expected - set(seen))
    if extra and missing:
        kind = VerdictKind.BOTH
    elif extra:
        kind = VerdictKind.EXTRA_OR_INVENTED
    elif missing:
        kind = VerdictKind.MISSING
    else:
        kind = VerdictKind.VALID
    return ValidationVerdict(
        kind,
        tuple(extra),
        tuple(missing),
        tuple(duplicates),
        tuple(unknown),
        assigned_total=sum(seen.values()),
        expected_total=len(expected),
    )


def validate_assignment(assignment: Assignment, survey) -> ValidationVerdict:
    expected = survey.ids if isinstance(survey, SurveySet) else survey
    return validate_partition(assignment.per_uav, expected)


def correction_message(verdict: ValidationVerdict, context: str = "mission") -> str:
    """Correction text to append to a planner prompt after a failed check."""
    if verdict.is_valid:
        raise ContractError("no correction exists for a valid verdict")
    try:
        extra_msg, missing_msg = _MESSAGES[context]
    except KeyError:
        raise ValueError(f"context must be 'mission' or 'route', got {context!r}") from None
    if verdict.kind is VerdictKind.EXTRA_OR_INVENTED:
        return extra_msg
    if verdict.kind is VerdictKind.MISSING:
        return missing_msg
    return extra_msg + "\n" + missing_msg
