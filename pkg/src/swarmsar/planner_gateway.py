"""Planner interface and the plan, validate, correct, re-plan loop.

Mission planners return an :class:`Assignment` (deterministic planners) or raw
text (remote models); route planners return a :class:`Route` or raw text.
Either way the loop validates the result, appends the matching correction to
the prompt and asks again, and after ``max_retries`` failed attempts hands the
final prompt to a guaranteed-valid fallback.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin

from ._validation import check_point_ids, check_positions
from .assignment import (
    MISSION_EXTRA,
    ROUTE_EXTRA,
    Assignment,
    GreedyParams,
    ValidationVerdict,
    correction_message,
    greedy_assign,
    validate_assignment,
)
from .fire_world import SurveyPoint, SurveySet
from .remote import ChatCompletionClient, EndpointConfig
from .routing import Route, plan_route, validate_route

__all__ = [
    "UavDescriptor",
    "MissionPrompt",
    "RoutePrompt",
    "PlanParseError",
    "PlanningError",
    "PlanningEpisode",
    "RouteEpisode",
    "build_mission_prompt",
    "build_route_prompt",
    "AngularPartitioner",
    "cluster_plan",
    "parse_assignment",
    "parse_route",
    "remote_plan",
    "GreedyPlanner",
    "ClusterPlanner",
    "RemotePlanner",
    "HeuristicRoutePlanner",
    "FaultInjectedPlanner",
    "make_planner",
    "plan_with_validation",
    "plan_route_with_validation",
]

DEFAULT_COMMAND = (
    "Survey every grid cell of the active wildfire region and report any survivors "
    "or hazards detected."
)

GOALS = (
    "Maximise coverage efficiency: every survey point must be visited.",
    "Minimise the travel distance of each UAV.",
    "Balance the workload across UAVs.",
    "Assign each survey point to exactly one UAV; no overlap between UAVs.",
)

GARBAGE_TEXT = "I cannot help with that."


class PlanParseError(ValueError):
    """Planner text held no usable plan."""


class PlanningError(RuntimeError):
    """The planning loop ended without a valid plan."""


@dataclass(frozen=True)
class UavDescriptor:
    id: int
    x: float
    y: float
    energy_fraction: float = 1.0

    @property
    def position(self):
        return (self.x, self.y)


def _fmt(v: float) -> str:
    return f"{v:.1f}"


@dataclass(frozen=True)
class MissionPrompt:
    mission_command: str
    uavs: tuple[UavDescriptor, ...]
    survey_points: tuple[SurveyPoint, ...]
    correction_history: tuple[str, ...] = ()

    @property
    def uav_ids(self) -> tuple[int, ...]:
        return tuple(u.id for u in self.uavs)

    @property
    def uav_positions(self) -> np.ndarray:
        return np.array([u.position for u in self.uavs], dtype=float).reshape(-1, 2)

    @property
    def attempt(self) -> int:
        """1-based attempt number this prompt is sent for."""
        return len(self.correction_history) + 1

    def with_correction(self, text: str) -> "MissionPrompt":
        return replace(self, correction_history=self.correction_history + (text,))

    @property
    def system_text(self) -> str:
        return (
            "You are the mission planner of an edge ground station coordinating a UAV swarm "
            "for wildfire search and rescue. You assign survey points to UAVs."
        )

    @property
    def text(self) -> str:
        lines = ["MISSION", self.mission_command, "", "UAVS"]
        for u in self.uavs:
            lines.append(f"uav_{u.id} position=({_fmt(u.x)}, {_fmt(u.y)}) m energy={u.energy_fraction:.3f}")
        lines += ["", "SURVEY POINTS"]
        for p in self.survey_points:
            lines.append(f"point {p.id} ({_fmt(p.x)}, {_fmt(p.y)})")
        lines += ["", "GOALS"]
        lines += [f"{k}. {g}" for k, g in enumerate(GOALS, 1)]
        lines += [
            "",
            "OUTPUT FORMAT",
            'Reply with one JSON object mapping "uav_<id>" to the list of survey point ids '
            'for that UAV, for example {"uav_0": [1, 2], "uav_1": [3]}.',
        ]
        if self.correction_history:
            lines += ["", "CORRECTIONS", *self.correction_history]
        return "\n".join(lines)

    def messages(self) -> list[dict]:
        return [{"role": "system", "content": self.system_text}, {"role": "user", "content": self.text}]


@dataclass(frozen=True)
class RoutePrompt:
    uav_index: int
    start: tuple[float, float]
    assigned: tuple[SurveyPoint, ...]
    uav_state_summary: str = ""
    correction_history: tuple[str, ...] = ()

    @property
    def attempt(self) -> int:
        return len(self.correction_history) + 1

    def with_correction(self, text: str) -> "RoutePrompt":
        return replace(self, correction_history=self.correction_history + (text,))

    @property
    def text(self) -> str:
        lines = [
            f"You are the onboard route planner of uav_{self.uav_index}.",
            f"Start position: ({_fmt(self.start[0])}, {_fmt(self.start[1])}) m",
        ]
        if self.uav_state_summary:
            lines.append(f"Local state: {self.uav_state_summary}")
        lines += ["", "ASSIGNED POINTS"]
        for p in self.assigned:
            lines.append(f"point {p.id} ({_fmt(p.x)}, {_fmt(p.y)})")
        lines += [
            "",
            "Visit every assigned point exactly once and minimise total flight distance.",
            "Reply with a JSON list of point ids in visiting order, for example [3, 1, 2].",
        ]
        if self.correction_history:
            lines += ["", "CORRECTIONS", *self.correction_history]
        return "\n".join(lines)

    def messages(self) -> list[dict]:
        return [{"role": "user", "content": self.text}]


def build_mission_prompt(command: str, uavs, survey: SurveySet) -> MissionPrompt:
    if len(survey) == 0:
        raise ValueError("cannot build a mission prompt for an empty survey set")
    return MissionPrompt(command or DEFAULT_COMMAND, tuple(uavs), tuple(survey.points))


def build_route_prompt(assigned, uav_state_summary: str = "", *, uav_index: int = 0, start=(0.0, 0.0)) -> RoutePrompt:
    return RoutePrompt(uav_index, (float(start[0]), float(start[1])), tuple(assigned), uav_state_summary)


# --------------------------------------------------------------------------
# deterministic planners


class AngularPartitioner(ClusterMixin, BaseEstimator):
    """Balanced angular partition of points among UAVs.

    Points are ordered by angle about their centroid (ties by id) and cut
    into ``n_uavs`` contiguous arcs whose sizes differ by at most one. Arcs
    are then matched to UAVs greedily by distance from UAV to arc centroid,
    ties going to the lower UAV index.
    """

    def __init__(self, uav_positions=None):
        self.uav_positions = uav_positions

    def fit(self, X, y=None, point_ids=None):
        X = check_positions(X, "X")
        ids = check_point_ids(point_ids, len(X))
        uavs = check_positions(self.uav_positions, "uav_positions")
        n_uavs, n_pts = len(uavs), len(X)

        centroid = X.mean(axis=0)
        angles = np.arctan2(X[:, 1] - centroid[1], X[:, 0] - centroid[0])
        order = np.lexsort((ids, angles))

        base, extra = divmod(n_pts, n_uavs)
        arcs, cursor = [], 0
        for k in range(n_uavs):
            size = base + (1 if k < extra else 0)
            arcs.append(order[cursor : cursor + size])
            cursor += size

        pairs = []
        for a, rows in enumerate(arcs):
            if len(rows) == 0:
                continue
            c = X[rows].mean(axis=0)
            for u in range(n_uavs):
                pairs.append((math.hypot(uavs[u, 0] - c[0], uavs[u, 1] - c[1]), u, a))
        pairs.sort()
        arc_of_uav: dict[int, int] = {}
        taken = set()
        for _, u, a in pairs:
            if u in arc_of_uav or a in taken:
                continue
            arc_of_uav[u] = a
            taken.add(a)

        labels = np.empty(n_pts, dtype=int)
        per_uav = []
        for u in range(n_uavs):
            rows = arcs[arc_of_uav[u]] if u in arc_of_uav else np.array([], dtype=int)
            labels[rows] = u
            per_uav.append(tuple(int(ids[r]) for r in rows))
        self.labels_ = labels
        self.arcs_ = arcs
        self.assignment_ = Assignment(tuple(per_uav))
        return self


def cluster_plan(uav_positions, survey: SurveySet, uav_ids=None) -> Assignment:
    est = AngularPartitioner(uav_positions).fit(survey.positions, point_ids=survey.ids)
    return Assignment(est.assignment_.per_uav, uav_ids)


class GreedyPlanner:
    """Greedy workload-penalised assignment; also the default fallback."""

    kind = "greedy"

    def __init__(self, params: GreedyParams = GreedyParams()):
        self.params = params

    def propose(self, prompt: MissionPrompt, survey: SurveySet) -> Assignment:
        a = greedy_assign(prompt.uav_positions, survey, self.params)
        return Assignment(a.per_uav, prompt.uav_ids)


class ClusterPlanner:
    """Deterministic stand-in for the LLM mission planner: balanced angular clusters."""

    kind = "cluster"

    def propose(self, prompt: MissionPrompt, survey: SurveySet) -> Assignment:
        return cluster_plan(prompt.uav_positions, survey, prompt.uav_ids)


class RemotePlanner:
    """Mission and route planning through a chat-completion endpoint."""

    kind = "remote"

    def __init__(self, client: ChatCompletionClient):
        self.client = client

    def propose(self, prompt: MissionPrompt, survey: SurveySet) -> str:
        return self.client.complete(prompt.messages())

    def propose_route(self, prompt: RoutePrompt) -> str:
        return self.client.complete(prompt.messages())


def remote_plan(prompt: MissionPrompt, endpoint_config: EndpointConfig, *, session=None, sleep=None) -> str:
    kwargs = {"session": session}
    if sleep is not None:
        kwargs["sleep"] = sleep
    return ChatCompletionClient(endpoint_config, **kwargs).complete(prompt.messages())


class HeuristicRoutePlanner:
    """Nearest-neighbour chain plus 2-opt; the onboard fallback."""

    kind = "heuristic"

    def __init__(self, max_passes: int = 20):
        self.max_passes = max_passes

    def propose_route(self, prompt: RoutePrompt) -> Route:
        return plan_route(prompt.start, list(prompt.assigned), prompt.uav_index, self.max_passes)


FAULTS = ("duplicate", "drop", "invent", "garbage")


class FaultInjectedPlanner:
    """Corrupts a wrapped planner's output to exercise the validation loop.

    ``fault`` is one of duplicate, drop, invent or garbage. A fault fires on
    the listed 1-based ``attempts`` (all attempts when ``None``) with
    ``probability``, drawn from a generator seeded by ``seed``.
    """

    kind = "fault"

    def __init__(self, inner, fault: str = "duplicate", probability: float = 1.0, seed: int = 0, attempts=None):
        if isinstance(inner, FaultInjectedPlanner):
            raise TypeError("fault injection cannot wrap another fault-injected planner")
        if fault not in FAULTS:
            raise ValueError(f"fault must be one of {FAULTS}, got {fault!r}")
        if not 0.0 <= probability <= 1.0:
            raise ValueError("probability must lie in [0, 1]")
        self.inner = inner
        self.fault = fault
        self.probability = probability
        self.attempts = None if attempts is None else frozenset(attempts)
        self._rng = np.random.default_rng(seed)
        self.injected = 0

    def _fires(self, attempt: int) -> bool:
        draw = self._rng.random()
        if self.attempts is not None and attempt not in self.attempts:
            return False
        return draw < self.probability

    def propose(self, prompt: MissionPrompt, survey: SurveySet):
        out = self.inner.propose(prompt, survey)
        if not self._fires(prompt.attempt):
            return out
        self.injected += 1
        if self.fault == "garbage":
            return GARBAGE_TEXT
        if isinstance(out, str):
            return out
        lists = [list(ids) for ids in out.per_uav]
        nonempty = [k for k, ids in enumerate(lists) if ids]
        if self.fault == "duplicate" and nonempty:
            src = nonempty[0]
            lists[(src + 1) % len(lists)].append(lists[src][0])
        elif self.fault == "drop" and nonempty:
            biggest = max(range(len(lists)), key=lambda k: (len(lists[k]), -k))
            lists[biggest].pop()
        elif self.fault == "invent":
            lists[0].append(max(survey.ids, default=0) + 1)
        return Assignment(tuple(tuple(ids) for ids in lists), out.uav_ids)

    def propose_route(self, prompt: RoutePrompt):
        out = self.inner.propose_route(prompt)
        if not self._fires(prompt.attempt):
            return out
        self.injected += 1
        if self.fault == "garbage":
            return GARBAGE_TEXT
        if isinstance(out, str):
            return out
        wps = list(out.waypoints)
        if self.fault == "duplicate" and wps:
            wps.append(wps[0])
        elif self.fault == "drop" and wps:
            wps.pop()
        elif self.fault == "invent":
            wps.append(max((p.id for p in prompt.assigned), default=0) + 1)
        return Route(out.uav_index, tuple(wps), out.start)


def make_planner(kind: str, *, greedy: GreedyParams = GreedyParams(), endpoint: EndpointConfig | None = None,
                 client: ChatCompletionClient | None = None):
    if kind == "greedy":
        return GreedyPlanner(greedy)
    if kind == "cluster":
        return ClusterPlanner()
    if kind == "remote":
        if client is None:
            if endpoint is None:
                raise ValueError("remote planner needs an endpoint configuration")
            client = ChatCompletionClient(endpoint)
        return RemotePlanner(client)
    raise ValueError(f"unknown planner kind {kind!r}")


# --------------------------------------------------------------------------
# parsing planner text

_UAV_KEY = re.compile(r"^uav_(\d+)$")


def _json_candidates(text: str, opener: str):
    decoder = json.JSONDecoder()
    for m in re.finditer(re.escape(opener), text):
        try:
            value, _ = decoder.raw_decode(text, m.start())
        except ValueError:
            continue
        yield value


def _int_list(value) -> list[int] | None:
    if not isinstance(value, list):
        return None
    if not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
        return None
    return list(value)


def parse_assignment(text: str, survey: SurveySet, uav_count: int, uav_ids=None) -> Assignment:
    """First well-formed ``{"uav_<k>": [ids...]}`` block in ``text``.

    The block may sit inside code fences or prose. UAVs absent from the block
    get empty lists; unknown point ids are kept so validation can flag them.
    """
    uav_ids = tuple(range(uav_count)) if uav_ids is None else tuple(uav_ids)
    for value in _json_candidates(text, "{"):
        if not isinstance(value, dict) or not value:
            continue
        lists: dict[int, list[int]] = {}
        ok = True
        for key, ids in value.items():
            m = _UAV_KEY.match(str(key))
            parsed = _int_list(ids)
            if m is None or parsed is None or int(m.group(1)) not in uav_ids:
                ok = False
                break
            lists[int(m.group(1))] = parsed
        if ok:
            return Assignment(tuple(tuple(lists.get(u, ())) for u in uav_ids), uav_ids)
    raise PlanParseError("no uav_<k> -> [ids] mapping found in planner output")


def parse_route(text: str, assigned, uav_index: int = 0, start=(0.0, 0.0)) -> Route:
    """First JSON list of integer ids in ``text``, as a route."""
    for value in _json_candidates(text, "["):
        ids = _int_list(value)
        if ids:
            return Route(uav_index, tuple(ids), start)
    raise PlanParseError("no list of point ids found in route planner output")


# --------------------------------------------------------------------------
# validation loop


@dataclass(frozen=True)
class PlanningEpisode:
    attempts: int
    final_assignment: Assignment
    verdicts: tuple[ValidationVerdict | None, ...]  # None marks unparseable output
    fallback_used: bool
    prompts: tuple[MissionPrompt, ...] = field(repr=False)
    errors: tuple[str, ...] = ()

    @property
    def final_prompt(self) -> MissionPrompt:
        return self.prompts[-1]

    def summary(self) -> dict:
        return {
            "attempts": self.attempts,
            "fallback_used": self.fallback_used,
            "verdicts": [v.kind.value if v is not None else "Unparseable" for v in self.verdicts],
        }


@dataclass(frozen=True)
class RouteEpisode:
    attempts: int
    final_route: Route
    verdicts: tuple[ValidationVerdict | None, ...]
    fallback_used: bool
    prompts: tuple[RoutePrompt, ...] = field(repr=False)
    errors: tuple[str, ...] = ()

    @property
    def final_prompt(self) -> RoutePrompt:
        return self.prompts[-1]

    def summary(self) -> dict:
        return {
            "attempts": self.attempts,
            "fallback_used": self.fallback_used,
            "verdicts": [v.kind.value if v is not None else "Unparseable" for v in self.verdicts],
        }


def _loop(prompt, max_retries, propose, parse, validate, context, unparseable_msg):
    if max_retries < 0:
        raise ValueError("max_retries must be >= 0")
    prompts, verdicts, errors = [prompt], [], []
    for attempt in range(max_retries + 1):
        try:
            result = propose(prompt)
        except (PlanParseError, PlanningError):
            raise
        except Exception as exc:
            raise PlanningError(f"planner attempt {attempt + 1} of {max_retries + 1} failed: {exc}") from exc
        if isinstance(result, str):
            try:
                result = parse(result)
            except PlanParseError as exc:
                result = None
                errors.append(str(exc))
        if result is None:
            verdicts.append(None)
            msg = unparseable_msg
        else:
            verdict = validate(result)
            verdicts.append(verdict)
            if verdict.is_valid:
                return result, attempt + 1, verdicts, False, prompts, errors
            msg = correction_message(verdict, context)
        if attempt < max_retries:
            prompt = prompt.with_correction(msg)
            prompts.append(prompt)
    return None, max_retries + 1, verdicts, True, prompts, errors


def plan_with_validation(planner, prompt: MissionPrompt, survey: SurveySet, max_retries: int = 3,
                         fallback=None) -> PlanningEpisode:
    """Plan, validate, append a correction and re-plan until valid.

    After ``max_retries`` failed re-plans the fallback (greedy by default)
    plans from the final prompt. Unparseable output counts as a failed
    attempt and draws the hallucination correction.
    """
    fallback = fallback or GreedyPlanner()
    uav_ids = prompt.uav_ids
    result, attempts, verdicts, exhausted, prompts, errors = _loop(
        prompt,
        max_retries,
        lambda p: planner.propose(p, survey),
        lambda text: parse_assignment(text, survey, len(uav_ids), uav_ids),
        lambda a: validate_assignment(a, survey),
        "mission",
        MISSION_EXTRA,
    )
    if exhausted:
        result = fallback.propose(prompts[-1], survey)
        if isinstance(result, str) or not validate_assignment(result, survey).is_valid:
            raise PlanningError("fallback planner produced an invalid assignment")
    return PlanningEpisode(attempts, result, tuple(verdicts), exhausted, tuple(prompts), tuple(errors))


def plan_route_with_validation(planner, prompt: RoutePrompt, max_retries: int = 3, fallback=None) -> RouteEpisode:
    """Route counterpart of :func:`plan_with_validation`; falls back to NN + 2-opt."""
    fallback = fallback or HeuristicRoutePlanner()
    assigned_ids = [p.id for p in prompt.assigned]
    result, attempts, verdicts, exhausted, prompts, errors = _loop(
        prompt,
        max_retries,
        planner.propose_route,
        lambda text: parse_route(text, prompt.assigned, prompt.uav_index, prompt.start),
        lambda r: validate_route(r, assigned_ids),
        "route",
        ROUTE_EXTRA,
    )
    if exhausted:
        result = fallback.propose_route(prompts[-1])
        if isinstance(result, str) or not validate_route(result, assigned_ids).is_valid:
            raise PlanningError("fallback route planner produced an invalid route")
    return RouteEpisode(attempts, result, tuple(verdicts), exhausted, tuple(prompts), tuple(errors))
