"""The nine acceptance criteria, each checked at its tolerance and runtime bound."""

import time
from contextlib import contextmanager

import numpy as np
import pytest

from oracles import best_open_path, boundary_scan, greedy_trace
from swarmsar.assignment import (
    MISSION_EXTRA,
    MISSION_MISSING,
    ROUTE_EXTRA,
    ROUTE_MISSING,
    GreedyParams,
    assignment_metric,
    greedy_assign,
    validate_assignment,
    workload_penalty,
)
from swarmsar.cli import main
from swarmsar.config import ScenarioConfig
from swarmsar.fire_world import (
    FireMask,
    FireSpreadParams,
    SurveyPoint,
    SurveySet,
    extract_boundary,
    generate_survey_points,
    step_fire,
)
from swarmsar.planner_gateway import (
    ClusterPlanner,
    FaultInjectedPlanner,
    GreedyPlanner,
    HeuristicRoutePlanner,
    UavDescriptor,
    build_mission_prompt,
    build_route_prompt,
    plan_route_with_validation,
    plan_with_validation,
)
from swarmsar.routing import plan_route, route_length
from swarmsar.sim_engine import DEPLETED, World, build_masks, run

LARGE_FIRE = ScenarioConfig(uav_count=8, fire_updates=1)  # the ~300-point final index


@contextmanager
def within(seconds):
    start = time.perf_counter()
    yield
    elapsed = time.perf_counter() - start
    assert elapsed < seconds, f"took {elapsed:.1f} s, bound is {seconds} s"


def completion_minutes(config):
    return run(config).metrics.summary["max_completion_time_s"] / 60.0


@pytest.mark.criterion(1, "penalty and metric arithmetic")
def test_penalty_and_metric_arithmetic():
    with within(1):
        assert workload_penalty([5, 3, 1], 0, 800) == 1600
        assert workload_penalty([3, 3, 3], 0, 800) == 0
        assert workload_penalty([1, 3, 5], 0, 800) == 0
        assert assignment_metric(1000, 1600, 1) == 2600
        assert assignment_metric(1000, 0, 1) == 1000
        assert assignment_metric(500, 800, 0.5) == 900


@pytest.mark.criterion(2, "greedy equals brute-force re-evaluation on 100 instances")
def test_greedy_oracle_equivalence():
    with within(10):
        exact = 0
        for seed in range(100):
            rng = np.random.default_rng(1000 + seed)
            n, m = int(rng.integers(1, 5)), int(rng.integers(1, 13))
            uavs = rng.uniform(0, 5000, (n, 2))
            coords = rng.uniform(0, 5000, (m, 2))
            ids = [int(i) for i in rng.permutation(500)[:m]]
            survey = SurveySet(0, tuple(SurveyPoint(i, *xy) for i, xy in zip(ids, coords)))
            got = greedy_assign(uavs, survey, GreedyParams(1.0, 800.0))
            want = greedy_trace(uavs.tolist(), dict(zip(ids, map(tuple, coords))), 1.0, 800.0)
            exact += [list(a) for a in got.per_uav] == want
        assert exact == 100


@pytest.mark.criterion(3, "validation loop corrections, retry budget and fallback")
def test_validation_loop_conformance():
    with within(5):
        survey = SurveySet(0, tuple(SurveyPoint(i, float(x), float(y)) for i, (x, y) in
                                    enumerate(np.random.default_rng(0).uniform(0, 4000, (20, 2)), 1)))
        uavs = [UavDescriptor(k, 1000.0 * k, 0.0) for k in range(3)]
        prompt = build_mission_prompt("", uavs, survey)
        route_prompt = build_route_prompt(survey.points[:6], start=(0, 0))

        seen = {}
        for fault, key in (("invent", "extra"), ("drop", "missing")):
            ep = plan_with_validation(FaultInjectedPlanner(ClusterPlanner(), fault, attempts={1}), prompt, survey)
            seen["mission_" + key] = ep.final_prompt.correction_history[0]
            rep = plan_route_with_validation(FaultInjectedPlanner(HeuristicRoutePlanner(), fault, attempts={1}),
                                             route_prompt)
            seen["route_" + key] = rep.final_prompt.correction_history[0]
        assert seen == {
            "mission_extra": MISSION_EXTRA,
            "mission_missing": MISSION_MISSING,
            "route_extra": ROUTE_EXTRA,
            "route_missing": ROUTE_MISSING,
        }

        for retries in (0, 1, 3, 5):
            ep = plan_with_validation(FaultInjectedPlanner(ClusterPlanner(), "duplicate"), prompt, survey, retries)
            assert ep.attempts == retries + 1 and ep.fallback_used
            assert ep.final_assignment == GreedyPlanner().propose(ep.final_prompt, survey)

        for seed in range(60):
            fault = ("duplicate", "drop", "invent", "garbage")[seed % 4]
            planner = FaultInjectedPlanner(ClusterPlanner(), fault, probability=0.6, seed=seed)
            ep = plan_with_validation(planner, prompt, survey, max_retries=seed % 4)
            assert validate_assignment(ep.final_assignment, survey).is_valid


@pytest.mark.criterion(4, "2-opt over nearest neighbour within 1.25x of optimum on 48/50")
def test_routing_optimality_band():
    with within(30):
        inside = 0
        for seed in range(50):
            rng = np.random.default_rng(2000 + seed)
            m = int(rng.integers(2, 9))
            pts = [SurveyPoint(i, *xy) for i, xy in enumerate(rng.uniform(0, 4000, (m, 2)))]
            start = tuple(rng.uniform(0, 4000, 2))
            pos = {p.id: p.position for p in pts}
            length = route_length(plan_route(start, pts), pos)
            optimum, _ = best_open_path(start, pos)
            inside += length <= 1.25 * optimum + 1e-9
        assert inside >= 48


@pytest.mark.criterion(5, "kinematics and energy exactness")
def test_kinematics_and_energy():
    with within(5):
        column = FireMask(np.ones((3, 1), dtype=bool), 450.0, (-225.0, 225.0))
        config = ScenarioConfig(uav_count=1, launch_x=0.0, launch_y=0.0, planner="greedy")
        (rec,) = run(config, [column]).metrics.records
        assert rec["mission_completion_time_s"] == pytest.approx(90.0, abs=config.dt)
        assert rec["coverage_rate"] == 1.0

        far = FireMask(np.ones((1, 1), dtype=bool), 450.0, (-225.0, 1e5))
        survey = generate_survey_points(far, 450.0)
        world = World(config, far, survey, (0.0, 0.0))
        world.dispatch()
        while world.uavs[0].status != DEPLETED:
            world.step()
        u = world.uavs[0]
        assert config.capacity_j == pytest.approx(511_488.0)
        assert u.depleted_at == pytest.approx(3008.75, abs=config.dt)
        assert u.energy_consumed == pytest.approx(u.ledger_j, rel=1e-6)

        busy = ScenarioConfig(uav_count=4, seed=5, dwell_time=3.0, inference_latency=2.0, fire_updates=2,
                              fire_target_points=80, fire_extent=9000.0, mode="dynamic", update_interval=200.0)
        result = run(busy)
        for r in result.metrics.records:
            for u in r["uavs"]:
                assert u["energy_consumed_j"] <= busy.capacity_j
        blob = build_masks(busy)[0]
        fleet = World(busy, blob, generate_survey_points(blob, 450.0), (0.0, 0.0))
        fleet.dispatch()
        for _ in range(2000):
            fleet.step(0.9)
        for u in fleet.uavs:
            assert u.energy_consumed == pytest.approx(u.ledger_j, rel=1e-6)


@pytest.mark.criterion(6, "full coverage with ample battery; cluster >= greedy under tight battery")
def test_coverage_property():
    with within(120):
        for n in (8, 12):
            result = run(ScenarioConfig(uav_count=n, seed=1, mode="snapshot"))
            assert all(c == 1.0 for c in result.metrics.coverage())
            assert 270 <= result.metrics.records[-1]["survey_total"] <= 330

        wins = 0
        for seed in range(1, 21):
            tight = ScenarioConfig(uav_count=8, seed=seed, battery_capacity_mah=5000.0, fire_updates=1)
            cluster = run(tight.replace(planner="cluster")).metrics.summary["mean_coverage"]
            greedy = run(tight.replace(planner="greedy")).metrics.summary["mean_coverage"]
            wins += cluster >= greedy
        assert wins >= 16


@pytest.mark.criterion(7, "completion-time trends on the 300-point scenario")
def test_completion_time_trends():
    with within(300):
        greedy8, cluster8, cluster12 = [], [], []
        for seed in range(1, 11):
            base = LARGE_FIRE.replace(seed=seed)
            greedy8.append(completion_minutes(base.replace(planner="greedy")))
            cluster8.append(completion_minutes(base.replace(planner="cluster")))
            cluster12.append(completion_minutes(base.replace(planner="cluster", uav_count=12)))
        assert all(19.0 <= g <= 40.0 for g in greedy8), greedy8
        assert np.mean(cluster8) <= np.mean(greedy8)
        assert all(b < a for a, b in zip(cluster8, cluster12))


@pytest.mark.criterion(8, "same seed and manifest give byte-identical outputs")
def test_determinism(tmp_path):
    with within(60):
        scenario = tmp_path / "large_fire.toml"
        scenario.write_text("uav.count = 8\nsim.seed = 11\n")
        a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
        assert main(["run", "--scenario", str(scenario), "--out", str(a)]) == 0
        assert main(["run", "--scenario", str(scenario), "--out", str(b)]) == 0
        assert main(["run", "--scenario", str(a / "manifest.json"), "--out", str(c)]) == 0
        for name in ("metrics.jsonl", "frames.jsonl"):
            assert (a / name).read_bytes() == (b / name).read_bytes() == (c / name).read_bytes()


@pytest.mark.criterion(9, "boundary oracle on 200 masks; spread monotone on 100 trajectories")
def test_fire_world_oracles():
    with within(10):
        rng = np.random.default_rng(9)
        for _ in range(200):
            h, w = rng.integers(1, 13, 2)
            burning = rng.random((h, w)) < rng.uniform(0.05, 0.95)
            assert extract_boundary(FireMask(burning, 1.0)) == boundary_scan(burning.tolist())

        for seed in range(100):
            r = np.random.default_rng(seed)
            mask = FireMask(r.random((12, 12)) < 0.05, 10.0)
            params = FireSpreadParams(float(r.uniform(0, 1)), int(r.choice([4, 8])), 1)
            for k in range(8):
                grown = step_fire(mask, params, rng_seed=seed * 100 + k)
                assert np.all(grown.burning[mask.burning])
                assert grown.burning_count >= mask.burning_count
                mask = grown
