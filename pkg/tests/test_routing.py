import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import best_open_path, path_length
from swarmsar.assignment import VerdictKind
from swarmsar.fire_world import SurveyPoint
from swarmsar.routing import (
    Route,
    RouteConsistencyError,
    RoutePlanner,
    nn_route,
    plan_route,
    route_length,
    two_opt,
    validate_route,
)


def points_of(coords, first_id=1):
    return [SurveyPoint(first_id + k, float(x), float(y)) for k, (x, y) in enumerate(coords)]


def random_points(seed, m, span=2000.0):
    rng = np.random.default_rng(seed)
    return points_of(rng.uniform(0, span, (m, 2)), first_id=0)


def test_nn_on_collinear_points():
    pts = points_of([(900, 0), (450, 0), (1350, 0)])
    assert nn_route((0, 0), pts).waypoints == (2, 1, 3)


def test_nn_single_point():
    assert nn_route((5, 5), points_of([(0, 0)])).waypoints == (1,)


def test_nn_tie_goes_to_lower_id():
    pts = points_of([(0, 100), (100, 0)])
    assert nn_route((0, 0), pts).waypoints[0] == 1


def test_nn_within_half_again_of_optimum():
    pts = random_points(3, 7)
    pos = {p.id: p.position for p in pts}
    nn = route_length(nn_route((0, 0), pts), pos)
    best, _ = best_open_path((0, 0), pos)
    assert nn <= 1.5 * best + 1e-9


@pytest.mark.parametrize(
    "waypoints, expected",
    [((1, 2, 3), 1350.0), ((), 0.0), ((4,), 500.0)],
)
def test_route_length(waypoints, expected):
    pos = {1: (450, 0), 2: (900, 0), 3: (1350, 0), 4: (300, 400)}
    assert route_length(Route(0, waypoints, (0, 0)), pos) == pytest.approx(expected)


def test_route_length_ignores_labels():
    pos = {1: (450, 0), 2: (900, 450), 3: (0, 900)}
    relabelled = {10 * k: xy for k, xy in pos.items()}
    a = route_length(Route(0, (1, 2, 3), (0, 0)), pos)
    b = route_length(Route(0, (10, 20, 30), (0, 0)), relabelled)
    assert a == b


def test_route_length_unknown_waypoint():
    with pytest.raises(RouteConsistencyError):
        route_length(Route(0, (1, 9), (0, 0)), {1: (0, 0)})


def test_two_opt_uncrosses_square():
    pos = {1: (100, 100), 2: (0, 100), 3: (100, 0)}
    crossed = Route(0, (1, 2, 3), (0, 0))
    assert route_length(crossed, pos) == pytest.approx(100 + 200 * math.sqrt(2))
    fixed = two_opt(crossed, pos)
    assert route_length(fixed, pos) == pytest.approx(300.0)
    assert route_length(fixed, pos) == pytest.approx(best_open_path((0, 0), pos)[0])


def test_two_opt_leaves_optimal_route_alone():
    pos = {1: (450, 0), 2: (900, 0), 3: (1350, 0)}
    route = Route(2, (1, 2, 3), (0, 0))
    assert two_opt(route, pos) == route


@pytest.mark.parametrize("seed", range(10))
def test_two_opt_never_lengthens(seed):
    pts = random_points(seed, 8)
    pos = {p.id: p.position for p in pts}
    rng = np.random.default_rng(seed + 100)
    start = Route(0, tuple(int(i) for i in rng.permutation(8)), (0, 0))
    out = two_opt(start, pos)
    assert sorted(out.waypoints) == sorted(start.waypoints)
    assert route_length(out, pos) <= route_length(start, pos) + 1e-9
    assert two_opt(out, pos) == out


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 7))
def test_planned_route_against_enumeration(seed, m):
    pts = random_points(seed, m)
    pos = {p.id: p.position for p in pts}
    route = plan_route((0, 0), pts)
    assert validate_route(route, pos).is_valid
    best, _ = best_open_path((0, 0), pos)
    length = route_length(route, pos)
    assert best - 1e-6 <= length <= 1.5 * best + 1e-6
    assert length == pytest.approx(path_length((0, 0), [pos[w] for w in route.waypoints]))


def test_validate_route_examples():
    assigned = {1, 2, 3}
    assert validate_route(Route(0, (3, 1, 2), (0, 0)), assigned).kind is VerdictKind.VALID
    assert validate_route(Route(0, (1, 2), (0, 0)), assigned).kind is VerdictKind.MISSING
    assert validate_route(Route(0, (1, 2, 3, 3), (0, 0)), assigned).kind is VerdictKind.EXTRA_OR_INVENTED
    assert validate_route(Route(0, (1, 2, 7), (0, 0)), assigned).kind is VerdictKind.BOTH


def test_route_planner_estimator():
    X = np.array([[1350.0, 0.0], [450.0, 0.0], [900.0, 0.0]])
    est = RoutePlanner(start=(0, 0)).fit(X, point_ids=[7, 3, 5])
    assert est.route_.waypoints == (3, 5, 7)
    assert est.order_ == [1, 2, 0]
    assert est.transform(X)[:, 0].tolist() == [450.0, 900.0, 1350.0]
    assert RoutePlanner().fit_transform(np.empty((0, 2))).shape == (0, 2)
