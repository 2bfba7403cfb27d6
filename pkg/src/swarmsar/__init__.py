"""Planning and simulation for edge-coordinated UAV swarms on wildfire search-and-rescue."""

__version__ = "0.1.0"

from .assignment import (
    Assignment,
    GreedyAssigner,
    GreedyParams,
    ValidationVerdict,
    VerdictKind,
    assignment_metric,
    correction_message,
    greedy_assign,
    validate_assignment,
    workload_penalty,
)
from .config import ConfigError, ScenarioConfig, validate_config
from .fire_world import (
    FireMask,
    FireSpreadParams,
    SurveyPoint,
    SurveySet,
    extract_boundary,
    generate_survey_points,
    load_mask,
    step_fire,
)
from .planner_gateway import (
    AngularPartitioner,
    ClusterPlanner,
    FaultInjectedPlanner,
    GreedyPlanner,
    build_mission_prompt,
    cluster_plan,
    parse_assignment,
    plan_with_validation,
)
from .routing import Route, RoutePlanner, nn_route, route_length, two_opt, validate_route
from .sim_engine import coverage_rate, detect_survivors, power_draw, run
