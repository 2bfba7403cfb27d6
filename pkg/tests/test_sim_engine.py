import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swarmsar.config import ScenarioConfig
from swarmsar.fire_world import FireMask, SurveyPoint, SurveySet, blob_mask, generate_survey_points
from swarmsar.routing import route_length
from swarmsar.sim_engine import (
    DEPLETED,
    IDLE,
    World,
    coverage_rate,
    detect_survivors,
    on_boundary_update,
    power_draw,
    run,
)

DEFAULTS = ScenarioConfig(uav_count=1)


def column_mask(height=3):
    """One column of 450 m cells whose centres sit at (0, 450), (0, 900), ..."""
    return FireMask(np.ones((height, 1), dtype=bool), 450.0, (-225.0, 225.0))


def small_config(**kw):
    base = dict(uav_count=1, launch_x=0.0, launch_y=0.0, planner="greedy")
    return ScenarioConfig(**{**base, **kw})


def world_for(config, mask):
    survey = generate_survey_points(mask, config.cell_size)
    w = World(config, mask, survey, config.launch_position)
    w.dispatch()
    return w


def fly_until_done(world, dt=1.0, limit=100_000):
    for _ in range(limit):
        if world.finished:
            return world
        world.step(dt)
    raise AssertionError("mission did not finish")


@pytest.mark.parametrize("speed, infer, watts", [(15, False, 170.0), (0, True, 55.0), (10, False, 130.0)])
def test_power_draw(speed, infer, watts):
    assert power_draw(speed, infer, DEFAULTS) == watts


def test_power_draw_rejects_negative_speed():
    with pytest.raises(ValueError):
        power_draw(-1, False, DEFAULTS)


def test_capacity_from_charge():
    assert DEFAULTS.capacity_j == pytest.approx(511_488.0)


# step


def test_step_arrives_exactly_on_waypoint():
    w = world_for(small_config(), column_mask())
    w.step(30.0)
    u = w.uavs[0]
    assert u.position == (0.0, 450.0)
    assert w.visited == {0}
    assert u.energy_consumed == pytest.approx(170 * 30)


def test_remaining_dt_carries_to_next_leg():
    w = world_for(small_config(), column_mask())
    w.step(45.0)
    assert w.uavs[0].position == pytest.approx((0.0, 675.0))
    assert w.visited == {0}


def test_depleted_uav_does_not_change():
    w = world_for(small_config(), column_mask())
    w.step(10.0)
    u = w.uavs[0]
    u.status = DEPLETED
    before = (u.position, u.energy, u.distance, set(u.visited))
    w.step(30.0)
    assert (u.position, u.energy, u.distance, u.visited) == before
    assert w.time == 40.0


def test_depletion_at_exact_instant():
    w = world_for(small_config(battery_energy_j=1700.0), column_mask())
    w.step(30.0)
    u = w.uavs[0]
    assert u.status == DEPLETED
    assert u.depleted_at == 10.0
    assert u.energy == 0.0
    assert u.position == pytest.approx((0.0, 150.0))
    assert w.visited == set()


def test_step_rejects_non_positive_dt():
    w = world_for(small_config(), column_mask())
    with pytest.raises(ValueError):
        w.step(0.0)


# boundary updates


def test_unchanged_mask_replans_only_unvisited():
    w = world_for(small_config(), column_mask(4))
    w.step(30.0)
    survey_before = w.survey
    on_boundary_update(w, column_mask(4))
    assert w.survey.points == survey_before.points
    assert w.visited == {0}
    assert sorted(w.assignment.for_uav(0)) == [1, 2, 3]


def test_grown_mask_adds_new_ids():
    burning = np.zeros((6, 6), dtype=bool)
    burning[1:3, 1:3] = True
    w = world_for(small_config(uav_count=2), FireMask(burning.copy(), 450.0))
    w.step(20.0)
    burning[3:5, 1:3] = True
    old_ids = set(w.survey.ids)
    on_boundary_update(w, FireMask(burning, 450.0))
    assert len(w.survey) == len(old_ids) + 4
    planned = set(sum(w.assignment.per_uav, ()))
    assert (set(w.survey.ids) - old_ids) <= planned
    assert planned == set(w.survey.ids) - w.visited


def test_depleted_uav_excluded_from_replan():
    rng = np.random.default_rng(4)
    w = world_for(small_config(uav_count=3), FireMask(rng.random((8, 8)) < 0.5, 450.0))
    w.step(40.0)
    w.uavs[1].status = DEPLETED
    on_boundary_update(w, w.mask)
    assert w.assignment.uav_ids == (0, 2)
    assert w.uavs[1].route is None
    planned = sum(w.assignment.per_uav, ())
    assert sorted(planned) == sorted(set(w.survey.ids) - w.visited)


# detection and coverage


@pytest.mark.parametrize("distance, seen", [(1000.0, True), (1600.0, False), (1500.0, True)])
def test_detect_survivors(distance, seen):
    assert (detect_survivors((0.0, 0.0), [(0.0, distance)], 1500.0) == [0]) is seen


def test_detect_rejects_zero_range():
    with pytest.raises(ValueError):
        detect_survivors((0, 0), [], 0.0)


def survey_of_n(n):
    return SurveySet(0, tuple(SurveyPoint(i, float(i), 0.0) for i in range(n)))


@pytest.mark.parametrize("visited, expected", [(range(150), 0.5), (range(300), 1.0), ((), 0.0)])
def test_coverage_rate(visited, expected):
    assert coverage_rate(set(visited), survey_of_n(300)) == expected


def test_coverage_ignores_ids_outside_survey():
    assert coverage_rate({0, 1, 999}, survey_of_n(4)) == 0.5


def test_coverage_of_empty_survey_is_an_error():
    with pytest.raises(ValueError):
        coverage_rate(set(), survey_of_n(0))


# whole runs


def test_three_collinear_points():
    result = run(small_config(), [column_mask()])
    (rec,) = result.metrics.records
    assert rec["mission_completion_time_s"] == pytest.approx(90.0, abs=1.0)
    assert rec["coverage_rate"] == 1.0
    assert rec["uavs"][0]["distance_m"] == pytest.approx(1350.0)


def test_battery_for_sixty_seconds_covers_two_thirds():
    result = run(small_config(battery_energy_j=60 * 170.0), [column_mask()])
    (rec,) = result.metrics.records
    assert rec["coverage_rate"] == pytest.approx(2 / 3)
    assert rec["uavs"][0]["status"] == DEPLETED
    assert not rec["completed"]
    assert result.metrics.summary["all_complete"] is False


def test_survivors_found_at_waypoints():
    result = run(small_config(survivors=[[1400.0, 900.0], [4000.0, 900.0]]), [column_mask()])
    found = result.metrics.summary["detections"]
    assert [d["survivor"] for d in found] == [0]
    assert found[0]["point"] == 0


def test_seeded_run_is_byte_identical():
    config = ScenarioConfig(uav_count=4, seed=11, fire_target_points=60, fire_updates=2, fire_extent=8000.0)
    a, b = run(config), run(config)
    assert a.metrics.to_jsonl() == b.metrics.to_jsonl()
    assert a.frames_jsonl() == b.frames_jsonl()


def test_frame_fields():
    result = run(small_config(), [column_mask()])
    frames = [f for f in result.frames if f["kind"] == "frame"]
    assert frames[0]["t_s"] == 0.0
    assert set(frames[0]["uavs"][0]) == {"index", "x_m", "y_m", "energy_j", "status"}
    assert frames[-1]["visited_count"] == frames[-1]["survey_total"] == 3
    assert [f["t_s"] for f in frames[:3]] == [0.0, 5.0, 10.0]


# properties


@pytest.mark.parametrize("seed", range(3))
def test_energy_ledger_balances(seed):
    config = small_config(uav_count=3, inference_latency=4.0, dwell_time=2.0, seed=seed)
    w = world_for(config, blob_mask(3000.0, seed, extent_m=9000.0))
    fly_until_done(w, dt=0.7)
    for _ in range(5):
        w.step(1.3)  # some idle time too
    for u in w.uavs:
        assert u.energy_consumed == pytest.approx(u.ledger_j, rel=1e-6)
        assert 0.0 <= u.energy <= u.capacity


def test_endurance_closed_form():
    far = FireMask(np.ones((1, 1), dtype=bool), 450.0, (-225.0, 100_000.0))
    w = world_for(small_config(), far)
    while w.uavs[0].status != DEPLETED:
        w.step()
    assert w.uavs[0].depleted_at == pytest.approx(511_488.0 / 170.0, abs=1.0)
    assert w.uavs[0].depleted_at == pytest.approx(3008.75)


def test_dynamic_coverage_never_drops():
    mask = blob_mask(2500.0, 2, extent_m=9000.0)
    config = small_config(uav_count=2, mode="dynamic", update_interval=120.0)
    result = run(config, [mask, mask, mask])
    ratios = [f["visited_count"] / f["survey_total"] for f in result.frames if f["kind"] == "frame"]
    assert all(a <= b for a, b in zip(ratios, ratios[1:]))
    assert ratios[-1] == 1.0


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_single_uav_completion_is_length_over_speed(seed):
    mask = blob_mask(1800.0, seed, extent_m=6000.0)
    w = world_for(small_config(launch_x=-500.0, launch_y=-3500.0, battery_energy_j=5e6), mask)
    length = route_length(w.uavs[0].route, w.survey.by_id())
    fly_until_done(w, dt=1.0)
    assert w.completed_at == pytest.approx(length / 15.0, rel=1e-9)
    assert w.uavs[0].status == IDLE


def test_more_uavs_finish_sooner():
    config = ScenarioConfig(uav_count=8, seed=3, fire_updates=1)
    eight = run(config).metrics.summary["max_completion_time_s"]
    twelve = run(config.replace(uav_count=12)).metrics.summary["max_completion_time_s"]
    assert twelve <= eight


@pytest.mark.parametrize("seed", range(3))
def test_no_teleportation(seed):
    config = small_config(uav_count=4, seed=seed, inference_latency=3.0, battery_energy_j=5e6)
    w = world_for(config, blob_mask(3000.0, seed, extent_m=9000.0))
    grown = blob_mask(3600.0, seed, extent_m=9000.0)
    for k in range(20_000):
        before = [u.position for u in w.uavs]
        w.step(1.0)
        for p, u in zip(before, w.uavs):
            assert math.dist(p, u.position) <= 15.0 * 1.0 + 1e-9
        if k == 200:
            on_boundary_update(w, grown)
        if w.finished and k > 200:
            break
    assert w.coverage() == 1.0
