"""Open-path flight routes over assigned survey points (nearest neighbour + 2-opt)."""

from __future__ import annotations

import math
from dataclasses import dataclass

from sklearn.base import BaseEstimator

from ._validation import check_point_ids, check_positions
from .assignment import ValidationVerdict, validate_partition
from .fire_world import SurveyPoint

__all__ = [
    "Route",
    "RouteConsistencyError",
    "nn_route",
    "two_opt",
    "route_length",
    "validate_route",
    "plan_route",
    "RoutePlanner",
]


class RouteConsistencyError(ValueError):
    """A route refers to a waypoint id with no known position."""


@dataclass(frozen=True)
class Route:
    uav_index: int
    waypoints: tuple[int, ...]
    start: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "waypoints", tuple(int(w) for w in self.waypoints))
        object.__setattr__(self, "start", (float(self.start[0]), float(self.start[1])))

    def __len__(self):
        return len(self.waypoints)


def _dist(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def nn_route(start, assigned, uav_index: int = 0) -> Route:
    """Chain from ``start`` to the nearest unvisited point; ties to the lower id."""
    remaining = sorted(assigned, key=lambda p: p.id)
    here = (float(start[0]), float(start[1]))
    order = []
    while remaining:
        best = min(range(len(remaining)), key=lambda k: (_dist(here, remaining[k].position), remaining[k].id))
        p = remaining.pop(best)
        order.append(p.id)
        here = p.position
    return Route(uav_index, tuple(order), start)


def route_length(route: Route, positions) -> float:
    """Sum of leg lengths from the start through every waypoint, in meters."""
    here = route.start
    total = 0.0
    for w in route.waypoints:
        try:
            nxt = positions[w]
        except KeyError:
            raise RouteConsistencyError(f"waypoint {w} has no known position") from None
        nxt = nxt.position if isinstance(nxt, SurveyPoint) else nxt
        total += _dist(here, nxt)
        here = nxt
    return total


def two_opt(route: Route, positions, max_passes: int = 20) -> Route:
    """Improve an open route by segment reversal; the start stays fixed.

    A pass scans every segment and applies each strictly improving reversal
    immediately. Stops after a pass with no improvement or ``max_passes``.
    """
    pos = {}
    for w in route.waypoints:
        if w not in positions:
            raise RouteConsistencyError(f"waypoint {w} has no known position")
        p = positions[w]
        pos[w] = p.position if isinstance(p, SurveyPoint) else (float(p[0]), float(p[1]))

    tour = list(route.waypoints)
    n = len(tour)
    if n < 2:
        return route

    def at(k):
        return route.start if k < 0 else pos[tour[k]]

    for _ in range(max_passes):
        improved = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                a, b, c = at(i - 1), at(i), at(j)
                before = _dist(a, b)
                after = _dist(a, c)
                if j + 1 < n:
                    d = at(j + 1)
                    before += _dist(c, d)
                    after += _dist(b, d)
                if after < before - 1e-9:
                    tour[i : j + 1] = tour[i : j + 1][::-1]
                    improved = True
        if not improved:
            break
    return Route(route.uav_index, tuple(tour), route.start)


def validate_route(route: Route, assigned) -> ValidationVerdict:
    """Set-equality verdict between the route's waypoints and the assigned ids."""
    return validate_partition([route.waypoints], assigned)


def plan_route(start, assigned, uav_index: int = 0, max_passes: int = 20) -> Route:
    """Nearest-neighbour chain polished by 2-opt."""
    route = nn_route(start, assigned, uav_index)
    return two_opt(route, {p.id: p.position for p in assigned}, max_passes)


class RoutePlanner(BaseEstimator):
    """Estimator wrapper around :func:`plan_route`.

    ``fit(X, point_ids=...)`` orders the rows of ``X``; the visiting order is
    exposed as ``order_`` (row indices) and ``route_``.
    """

    def __init__(self, start=(0.0, 0.0), max_passes=20, uav_index=0):
        self.start = start
        self.max_passes = max_passes
        self.uav_index = uav_index

    def fit(self, X, y=None, point_ids=None):
        X = check_positions(X, "X", allow_empty=True)
        ids = check_point_ids(point_ids, len(X))
        points = [SurveyPoint(int(i), float(x), float(y_)) for i, (x, y_) in zip(ids, X)]
        self.route_ = plan_route(tuple(self.start), points, self.uav_index, self.max_passes)
        row_of = {int(i): k for k, i in enumerate(ids)}
        self.order_ = [row_of[w] for w in self.route_.waypoints]
        return self

    def transform(self, X):
        """Rows of ``X`` in fitted visiting order."""
        X = check_positions(X, "X", allow_empty=True)
        return X[self.order_]

    def fit_transform(self, X, y=None, point_ids=None):
        return self.fit(X, point_ids=point_ids).transform(X)
