"""Time-stepped swarm mission simulation with energy accounting and re-planning."""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .assignment import GreedyParams
from .config import ScenarioConfig
from .fire_world import (
    FireMask,
    FireSpreadParams,
    SurveySet,
    blob_sequence,
    extract_boundary,
    generate_survey_points,
    load_mask,
    spread_sequence,
)
from .planner_gateway import (
    FaultInjectedPlanner,
    GreedyPlanner,
    HeuristicRoutePlanner,
    UavDescriptor,
    build_mission_prompt,
    build_route_prompt,
    make_planner,
    plan_route_with_validation,
    plan_with_validation,
)
from .remote import ChatCompletionClient, EndpointConfig
from .routing import Route

__all__ = [
    "ENROUTE",
    "DWELLING",
    "IDLE",
    "DEPLETED",
    "UavState",
    "World",
    "MetricsReport",
    "SimulationResult",
    "power_draw",
    "detect_survivors",
    "coverage_rate",
    "step",
    "on_boundary_update",
    "build_masks",
    "resolve_launch",
    "run",
]

ENROUTE = "enRoute"
DWELLING = "dwelling"
IDLE = "idle"
DEPLETED = "depleted"

_EPS = 1e-12


def power_draw(speed: float, inference_active: bool, config) -> float:
    """Electrical power in watts: base + per-m/s flight term + LLM idle or inference."""
    if speed < 0:
        raise ValueError("speed must be >= 0")
    llm = config.power_llm_infer if inference_active else config.power_llm_idle
    return config.power_base + config.power_flight_per_mps * speed + llm


def detect_survivors(position, survivors, detection_range: float) -> list[int]:
    """Indices of survivors within ``detection_range`` meters (inclusive)."""
    if not detection_range > 0:
        raise ValueError("detection range must be > 0")
    x, y = position
    return [k for k, (sx, sy) in enumerate(survivors) if math.hypot(sx - x, sy - y) <= detection_range]


def coverage_rate(visited, survey) -> float:
    ids = survey.ids if isinstance(survey, SurveySet) else list(survey)
    if not ids:
        raise ValueError("coverage is undefined for an empty survey set")
    visited = set(visited)
    return sum(1 for i in ids if i in visited) / len(ids)


@dataclass
class UavState:
    index: int
    x: float
    y: float
    energy: float
    capacity: float
    status: str = IDLE
    route: Route | None = None
    cursor: int = 0
    inference_remaining: float = 0.0
    dwell_remaining: float = 0.0
    distance: float = 0.0
    ledger_j: float = 0.0  # sum of power x duration over every phase
    visited: set = field(default_factory=set)
    depleted_at: float | None = None

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)

    @property
    def inference_active(self) -> bool:
        return self.inference_remaining > 0

    @property
    def energy_consumed(self) -> float:
        return self.capacity - self.energy

    @property
    def busy(self) -> bool:
        if self.status == DEPLETED:
            return False
        pending = self.route is not None and self.cursor < len(self.route.waypoints)
        return pending or self.inference_remaining > 0 or self.dwell_remaining > 0

    def next_waypoint(self):
        if self.route is None or self.cursor >= len(self.route.waypoints):
            return None
        return self.route.waypoints[self.cursor]


def _planners(config: ScenarioConfig):
    endpoint = EndpointConfig(
        url=config.planner_url,
        model=config.planner_model,
        timeout_s=config.planner_timeout,
        max_transport_retries=config.planner_transport_retries,
    )
    greedy = GreedyParams(config.greedy_lambda, config.greedy_B)
    client = None
    if config.planner == "remote" or config.routing == "remote":
        client = ChatCompletionClient(endpoint)
    mission = make_planner(config.planner, greedy=greedy, client=client)
    if config.planner_fault != "none":
        mission = FaultInjectedPlanner(
            mission, config.planner_fault, config.planner_fault_probability, seed=config.seed
        )
    route = make_planner("remote", client=client) if config.routing == "remote" else HeuristicRoutePlanner(config.route_max_passes)
    if config.routing_fault != "none":
        route = FaultInjectedPlanner(route, config.routing_fault, config.planner_fault_probability, seed=config.seed + 1)
    return mission, route, GreedyPlanner(greedy)


class World:
    """Mutable mission state for one swarm over one fire region."""

    def __init__(self, config: ScenarioConfig, mask: FireMask, survey: SurveySet, launch, survivors=(),
                 planners=None):
        self.config = config
        self.mask = mask
        self.survey = survey
        self.launch = (float(launch[0]), float(launch[1]))
        self.survivors = [tuple(map(float, s)) for s in survivors]
        self.planner, self.route_planner, self.fallback = planners or _planners(config)
        self.time = 0.0
        self.update_index = survey.update_index
        self.uavs = [
            UavState(i, self.launch[0], self.launch[1], config.capacity_j, config.capacity_j)
            for i in range(config.uav_count)
        ]
        self.visited: set[int] = set()
        self.dispatch_time = 0.0
        self.completed_at: float | None = None
        self._remaining: set[int] = set(survey.ids)
        self.detections: list[dict] = []
        self._detected: set[int] = set()
        self.episodes: list[dict] = []
        self.plan_records: list[dict] = []
        self.route_fallbacks = 0
        self.assignment = None

    # -- planning ---------------------------------------------------------

    def dispatch(self) -> None:
        """Assign every unvisited point of the current survey set and route each UAV."""
        cfg = self.config
        by_id = self.survey.by_id()
        pending = [pid for pid in self.survey.ids if pid not in self.visited]
        active = [u for u in self.uavs if u.status != DEPLETED]
        self.dispatch_time = self.time
        self._remaining = set(pending)
        self.completed_at = self.time if not pending else None
        for u in self.uavs:
            u.route, u.cursor, u.dwell_remaining, u.inference_remaining = None, 0, 0.0, 0.0
            if u.status != DEPLETED:
                u.status = IDLE

        episode = None
        if pending and active:
            subset = self.survey.subset(pending)
            uavs = [UavDescriptor(u.index, u.x, u.y, u.energy / u.capacity) for u in active]
            prompt = build_mission_prompt(cfg.mission_command, uavs, subset)
            episode = plan_with_validation(self.planner, prompt, subset, cfg.max_retries, self.fallback)
            self.assignment = episode.final_assignment

            def route_one(u):
                pts = [by_id[i] for i in episode.final_assignment.for_uav(u.index)]
                if not pts:
                    return None
                summary = f"energy {u.energy / u.capacity:.3f} of capacity"
                rprompt = build_route_prompt(pts, summary, uav_index=u.index, start=u.position)
                return plan_route_with_validation(
                    self.route_planner, rprompt, cfg.route_max_retries, HeuristicRoutePlanner(cfg.route_max_passes)
                )

            if cfg.routing == "remote":
                with ThreadPoolExecutor(max_workers=min(8, len(active))) as pool:
                    route_eps = list(pool.map(route_one, active))
            else:
                route_eps = [route_one(u) for u in active]
            for u, rep in zip(active, route_eps):
                if rep is None:
                    continue
                u.route = rep.final_route
                u.inference_remaining = cfg.inference_latency
                self.route_fallbacks += int(rep.fallback_used)
        else:
            self.assignment = None

        self.episodes.append(
            {"update_index": self.update_index, "t_s": self.time, **(episode.summary() if episode else {"attempts": 0, "fallback_used": False, "verdicts": []})}
        )
        self.plan_records.append(self._plan_record())

    def _plan_record(self) -> dict:
        boundary = sorted(extract_boundary(self.mask))
        return {
            "kind": "plan",
            "update_index": self.update_index,
            "t_s": self.time,
            "launch": list(self.launch),
            "cell_size_m": self.survey.cell_size,
            "points": [[p.id, p.x, p.y] for p in self.survey.points],
            "visited": sorted(self.visited & set(self.survey.ids)),
            "routes": {
                f"uav_{u.index}": {"start": list(u.position), "waypoints": list(u.route.waypoints) if u.route else []}
                for u in self.uavs
            },
            "boundary": {
                "resolution_m": self.mask.resolution,
                "cells": [list(self.mask.cell_center(c, r)) for c, r in boundary],
            },
        }

    # -- kinematics -------------------------------------------------------

    def _visit(self, u: UavState, pid: int, now: float) -> None:
        u.cursor += 1
        if pid not in self.visited:
            self.visited.add(pid)
            u.visited.add(pid)
        self._remaining.discard(pid)
        for k in detect_survivors(u.position, self.survivors, self.config.detection_range):
            if k not in self._detected:
                self._detected.add(k)
                self.detections.append({"survivor": k, "uav": u.index, "t_s": now, "point": pid})
        if self.completed_at is None and not self._remaining:
            self.completed_at = now

    def _advance(self, u: UavState, t0: float, dt: float) -> None:
        cfg = self.config
        by_id = None
        elapsed = 0.0
        while dt - elapsed > _EPS and u.status != DEPLETED:
            span = dt - elapsed
            arrive = False
            target = None
            if u.inference_remaining > 0:
                kind, speed, dur = "infer", 0.0, min(span, u.inference_remaining)
            elif u.dwell_remaining > 0:
                kind, speed, dur = "dwell", 0.0, min(span, u.dwell_remaining)
            elif u.next_waypoint() is not None:
                by_id = by_id or self.survey.by_id()
                target = by_id[u.next_waypoint()].position
                dist = math.hypot(target[0] - u.x, target[1] - u.y)
                t_arrive = dist / cfg.cruise_speed
                kind, speed = "fly", cfg.cruise_speed
                arrive = t_arrive <= span
                dur = t_arrive if arrive else span
            else:
                kind, speed, dur = "idle", 0.0, span

            p = power_draw(speed, kind == "infer", cfg)
            depleting = u.energy / p < dur
            if depleting:
                dur = u.energy / p
                arrive = False

            if kind == "fly":
                u.status = ENROUTE
                if arrive:
                    u.distance += math.hypot(target[0] - u.x, target[1] - u.y)
                    u.x, u.y = target
                else:
                    dx, dy = target[0] - u.x, target[1] - u.y
                    d = math.hypot(dx, dy)
                    step_len = min(speed * dur, d)
                    if d > 0:
                        u.x += dx / d * step_len
                        u.y += dy / d * step_len
                    u.distance += step_len
            elif kind == "infer":
                u.inference_remaining = 0.0 if dur >= u.inference_remaining else u.inference_remaining - dur
            elif kind == "dwell":
                u.dwell_remaining = 0.0 if dur >= u.dwell_remaining else u.dwell_remaining - dur

            used = p * dur
            u.ledger_j += used
            u.energy = 0.0 if depleting else u.energy - used
            elapsed += dur
            now = t0 + elapsed

            if kind == "fly" and arrive:
                if cfg.dwell_time > 0:
                    u.dwell_remaining = cfg.dwell_time
                    u.status = DWELLING
                else:
                    self._visit(u, u.next_waypoint(), now)
            elif kind == "dwell" and u.dwell_remaining == 0.0:
                self._visit(u, u.next_waypoint(), now)

            if u.energy <= 0.0:
                u.energy = 0.0
                u.status = DEPLETED
                u.depleted_at = now
            elif not u.busy:
                u.status = IDLE
            elif u.dwell_remaining > 0:
                u.status = DWELLING

    def step(self, dt: float | None = None) -> "World":
        dt = self.config.dt if dt is None else dt
        if not dt > 0:
            raise ValueError("dt must be > 0")
        t0 = self.time
        for u in self.uavs:
            self._advance(u, t0, dt)
        self.time = t0 + dt
        return self

    # -- observation --------------------------------------------------------

    @property
    def finished(self) -> bool:
        return not any(u.busy for u in self.uavs)

    def coverage(self) -> float:
        return coverage_rate(self.visited, self.survey)

    def frame(self) -> dict:
        return {
            "kind": "frame",
            "t_s": self.time,
            "update_index": self.update_index,
            "uavs": [
                {"index": u.index, "x_m": u.x, "y_m": u.y, "energy_j": u.energy, "status": u.status}
                for u in self.uavs
            ],
            "visited_count": len(self.visited & set(self.survey.ids)),
            "survey_total": len(self.survey),
        }

    def update_record(self) -> dict:
        completion = None if self.completed_at is None else self.completed_at - self.dispatch_time
        return {
            "kind": "update",
            "update_index": self.update_index,
            "survey_total": len(self.survey),
            "coverage_rate": self.coverage(),
            "mission_completion_time_s": completion,
            "completed": completion is not None,
            "uavs": [
                {
                    "index": u.index,
                    "points_visited": len(u.visited),
                    "distance_m": u.distance,
                    "energy_consumed_j": u.energy_consumed,
                    "status": u.status,
                }
                for u in self.uavs
            ],
            "planning": self.episodes[-1] if self.episodes else None,
            "route_fallbacks": self.route_fallbacks,
            "detections": list(self.detections),
        }


def step(world: World, dt: float = 1.0) -> World:
    return world.step(dt)


def on_boundary_update(world: World, new_mask: FireMask) -> World:
    """Regenerate the survey set from ``new_mask`` and re-plan the unvisited points.

    Visited ids persist because ids follow grid-cell identity; depleted UAVs
    receive nothing.
    """
    world.update_index += 1
    world.mask = new_mask
    world.survey = generate_survey_points(new_mask, world.config.cell_size, world.update_index)
    world.dispatch()
    return world


# --------------------------------------------------------------------------
# scenario driver


def build_masks(config: ScenarioConfig) -> list[FireMask]:
    if config.fire_source == "files":
        if not config.mask_files:
            raise ValueError("fire.source = files needs fire.mask_files")
        return [load_mask(f) for f in config.mask_files]
    kw = dict(cell_size=config.cell_size, seed=config.seed, resolution=config.fire_resolution, extent_m=config.fire_extent)
    if config.fire_source == "blob":
        return blob_sequence(config.fire_updates, config.fire_target_points, initial_fraction=config.fire_initial_fraction, **kw)
    initial_target = max(1, round(config.fire_target_points * config.fire_initial_fraction))
    initial = blob_sequence(1, initial_target, **kw)[0]
    params = FireSpreadParams(config.spread_probability, config.spread_neighborhood, config.spread_steps)
    return spread_sequence(initial, config.fire_updates, params, seed=config.seed)


def resolve_launch(config: ScenarioConfig, survey: SurveySet) -> tuple[float, float]:
    """Configured launch point, else one cell south of the fire, centred on it."""
    if config.launch_position is not None:
        return config.launch_position
    pos = survey.positions
    if len(pos) == 0:
        return (0.0, 0.0)
    return (float(pos[:, 0].mean()), float(pos[:, 1].min() - config.cell_size))


def _survivor_positions(config: ScenarioConfig, masks: list[FireMask]) -> list[tuple[float, float]]:
    out = [tuple(map(float, p)) for p in config.survivors]
    if config.survivor_count:
        rng = np.random.default_rng([config.seed, 1])
        rows, cols = np.nonzero(masks[-1].burning)
        if len(rows):
            picks = rng.choice(len(rows), size=config.survivor_count, replace=len(rows) < config.survivor_count)
            out += [masks[-1].cell_center(int(cols[k]), int(rows[k])) for k in picks]
    return out


@dataclass
class MetricsReport:
    records: list[dict]
    summary: dict

    def lines(self) -> list[str]:
        return [json.dumps(r) for r in self.records] + [json.dumps(self.summary)]

    def to_jsonl(self) -> str:
        return "\n".join(self.lines()) + "\n"

    def coverage(self) -> list[float]:
        return [r["coverage_rate"] for r in self.records]

    def completion_times(self) -> list[float | None]:
        return [r["mission_completion_time_s"] for r in self.records]


@dataclass
class SimulationResult:
    metrics: MetricsReport
    frames: list[dict]
    launch: tuple[float, float]

    def frames_jsonl(self) -> str:
        return "".join(json.dumps(f) + "\n" for f in self.frames)


def _drive(world: World, until: float, frames: list, next_frame: list, stop_when_finished: bool) -> None:
    cfg = world.config
    while world.time < until - _EPS:
        if stop_when_finished and world.finished:
            break
        world.step(min(cfg.dt, until - world.time))
        if world.time >= next_frame[0] - 1e-9:
            frames.append(world.frame())
            while next_frame[0] <= world.time + 1e-9:
                next_frame[0] += cfg.frame_interval


def run(config: ScenarioConfig, masks: list[FireMask] | None = None, planners=None) -> SimulationResult:
    """Simulate a whole scenario.

    Snapshot mode flies a fresh swarm from launch for every update index;
    dynamic mode flies one swarm through all updates, re-planning at each.
    """
    masks = masks if masks is not None else build_masks(config)
    surveys = [generate_survey_points(m, config.cell_size, t) for t, m in enumerate(masks)]
    launch = resolve_launch(config, surveys[0])
    survivors = _survivor_positions(config, masks)
    planners = planners or _planners(config)
    frames: list[dict] = []
    records: list[dict] = []
    episodes: list[dict] = []
    detections: list[dict] = []
    route_fallbacks = 0

    if config.mode == "snapshot":
        for t, (mask, survey) in enumerate(zip(masks, surveys)):
            world = World(config, mask, survey, launch, survivors, planners)
            world.dispatch()
            frames.append(world.plan_records[-1])
            frames.append(world.frame())
            next_frame = [config.frame_interval]
            _drive(world, config.max_time, frames, next_frame, stop_when_finished=True)
            if frames[-1].get("t_s") != world.time or frames[-1]["kind"] != "frame":
                frames.append(world.frame())
            records.append(world.update_record())
            episodes += world.episodes
            detections += [dict(d, update_index=t) for d in world.detections]
            route_fallbacks += world.route_fallbacks
    else:
        world = World(config, masks[0], surveys[0], launch, survivors, planners)
        world.dispatch()
        frames.append(world.plan_records[-1])
        frames.append(world.frame())
        next_frame = [config.frame_interval]
        last = len(masks) - 1
        for t in range(len(masks)):
            if t < last:
                _drive(world, (t + 1) * config.update_interval, frames, next_frame, stop_when_finished=False)
            else:
                _drive(world, max(config.max_time, world.time), frames, next_frame, stop_when_finished=True)
                if frames[-1]["kind"] != "frame" or frames[-1]["t_s"] != world.time:
                    frames.append(world.frame())
            records.append(world.update_record())
            if t < last:
                on_boundary_update(world, masks[t + 1])
                frames.append(world.plan_records[-1])
        episodes = world.episodes
        detections = list(world.detections)
        route_fallbacks = world.route_fallbacks

    completions = [r["mission_completion_time_s"] for r in records]
    summary = {
        "kind": "summary",
        "mode": config.mode,
        "uav_count": config.uav_count,
        "planner": config.planner,
        "seed": config.seed,
        "updates": len(records),
        "launch": list(launch),
        "all_complete": all(r["completed"] for r in records),
        "mean_coverage": sum(r["coverage_rate"] for r in records) / len(records),
        "max_completion_time_s": max((c for c in completions if c is not None), default=None),
        "mean_completion_time_s": (sum(completions) / len(completions)) if all(c is not None for c in completions) else None,
        "fallback_count": sum(1 for e in episodes if e["fallback_used"]),
        "route_fallback_count": route_fallbacks,
        "detections": detections,
    }
    return SimulationResult(MetricsReport(records, summary), frames, launch)
