"""Scenario configuration: dotted keys, defaults and collected validation errors.

Scenario files are TOML; ``uav.count = 8`` and ``[uav]\\ncount = 8`` are
equivalent. Every key can be overridden from the command line with
``--set key=value``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

__all__ = ["ScenarioConfig", "ConfigError", "KEYS", "validate_config", "resolve_mapping", "parse_override"]

_REQUIRED = object()


class ConfigError(ValueError):
    """Carries every problem found in a scenario, not just the first."""

    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


@dataclass(frozen=True)
class _Key:
    name: str
    attr: str
    kind: type
    default: object
    check: object = None  # callable returning an error suffix or None


def _positive(v):
    return None if v > 0 else "must be > 0"


def _non_negative(v):
    return None if v >= 0 else "must be >= 0"


def _at_least_one(v):
    return None if v >= 1 else "must be >= 1"


def _unit(v):
    return None if 0 <= v <= 1 else "must lie in [0, 1]"


def _fraction(v):
    return None if 0 < v <= 1 else "must lie in (0, 1]"


def _one_of(*choices):
    def check(v):
        return None if v in choices else f"must be one of {', '.join(map(str, choices))}"

    return check


def _points(v):
    for p in v:
        if not (isinstance(p, list) and len(p) == 2 and all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in p)):
            return "must be a list of [x, y] pairs"
    return None


def _strings(v):
    return None if all(isinstance(s, str) for s in v) else "must be a list of file paths"


KEYS = (
    _Key("uav.count", "uav_count", int, _REQUIRED, _at_least_one),
    _Key("uav.launch_x_m", "launch_x", float, None),
    _Key("uav.launch_y_m", "launch_y", float, None),
    _Key("uav.speed_mps", "cruise_speed", float, 15.0, _positive),
    _Key("uav.detection_range_m", "detection_range", float, 1500.0, _positive),
    _Key("uav.battery_mah", "battery_capacity_mah", float, 9600.0, _positive),
    _Key("uav.battery_voltage_v", "battery_voltage", float, 14.8, _positive),
    _Key("uav.battery_energy_j", "battery_energy_j", float, None, _positive),
    _Key("uav.dwell_s", "dwell_time", float, 0.0, _non_negative),
    _Key("power.base_w", "power_base", float, 45.0, _positive),
    _Key("power.flight_w_per_mps", "power_flight_per_mps", float, 8.0, _positive),
    _Key("power.llm_idle_w", "power_llm_idle", float, 5.0, _positive),
    _Key("power.llm_infer_w", "power_llm_infer", float, 10.0, _positive),
    _Key("survey.cell_size_m", "cell_size", float, 450.0, _positive),
    _Key("sim.mode", "mode", str, "snapshot", _one_of("snapshot", "dynamic")),
    _Key("sim.update_interval_s", "update_interval", float, 300.0, _positive),
    _Key("sim.dt_s", "dt", float, 1.0, _positive),
    _Key("sim.seed", "seed", int, 0),
    _Key("sim.inference_latency_s", "inference_latency", float, 0.0, _non_negative),
    _Key("sim.max_time_s", "max_time", float, 6 * 3600.0, _positive),
    _Key("planner.kind", "planner", str, "cluster", _one_of("greedy", "cluster", "remote")),
    _Key("planner.max_retries", "max_retries", int, 3, _non_negative),
    _Key("planner.fault", "planner_fault", str, "none", _one_of("none", "duplicate", "drop", "invent", "garbage")),
    _Key("planner.fault_probability", "planner_fault_probability", float, 1.0, _unit),
    _Key("planner.url", "planner_url", str, ""),
    _Key("planner.model", "planner_model", str, "gpt-4.1"),
    _Key("planner.timeout_s", "planner_timeout", float, 30.0, _positive),
    _Key("planner.max_transport_retries", "planner_transport_retries", int, 2, _non_negative),
    _Key("planner.mission_command", "mission_command", str, ""),
    _Key("routing.kind", "routing", str, "heuristic", _one_of("heuristic", "remote")),
    _Key("routing.max_passes", "route_max_passes", int, 20, _non_negative),
    _Key("routing.max_retries", "route_max_retries", int, 3, _non_negative),
    _Key("routing.fault", "routing_fault", str, "none", _one_of("none", "duplicate", "drop", "invent", "garbage")),
    _Key("greedy.lambda", "greedy_lambda", float, 1.0, _non_negative),
    _Key("greedy.B", "greedy_B", float, 800.0, _non_negative),
    _Key("fire.source", "fire_source", str, "blob", _one_of("blob", "spread", "files")),
    _Key("fire.updates", "fire_updates", int, 5, _at_least_one),
    _Key("fire.target_points", "fire_target_points", int, 300, _at_least_one),
    _Key("fire.initial_fraction", "fire_initial_fraction", float, 0.7, _fraction),
    _Key("fire.resolution_m", "fire_resolution", float, 150.0, _positive),
    _Key("fire.extent_m", "fire_extent", float, 18000.0, _positive),
    _Key("fire.spread_probability", "spread_probability", float, 0.3, _unit),
    _Key("fire.neighborhood", "spread_neighborhood", int, 4, _one_of(4, 8)),
    _Key("fire.steps_per_update", "spread_steps", int, 1, _at_least_one),
    _Key("fire.mask_files", "mask_files", list, [], _strings),
    _Key("survivors.positions", "survivors", list, [], _points),
    _Key("survivors.count", "survivor_count", int, 0, _non_negative),
    _Key("output.frame_interval_s", "frame_interval", float, 5.0, _positive),
)

_BY_NAME = {k.name: k for k in KEYS}


@dataclass(frozen=True)
class ScenarioConfig:
    uav_count: int
    launch_x: float | None = None
    launch_y: float | None = None
    cruise_speed: float = 15.0
    detection_range: float = 1500.0
    battery_capacity_mah: float = 9600.0
    battery_voltage: float = 14.8
    battery_energy_j: float | None = None
    dwell_time: float = 0.0
    power_base: float = 45.0
    power_flight_per_mps: float = 8.0
    power_llm_idle: float = 5.0
    power_llm_infer: float = 10.0
    cell_size: float = 450.0
    mode: str = "snapshot"
    update_interval: float = 300.0
    dt: float = 1.0
    seed: int = 0
    inference_latency: float = 0.0
    max_time: float = 6 * 3600.0
    planner: str = "cluster"
    max_retries: int = 3
    planner_fault: str = "none"
    planner_fault_probability: float = 1.0
    planner_url: str = ""
    planner_model: str = "gpt-4.1"
    planner_timeout: float = 30.0
    planner_transport_retries: int = 2
    mission_command: str = ""
    routing: str = "heuristic"
    route_max_passes: int = 20
    route_max_retries: int = 3
    routing_fault: str = "none"
    greedy_lambda: float = 1.0
    greedy_B: float = 800.0
    fire_source: str = "blob"
    fire_updates: int = 5
    fire_target_points: int = 300
    fire_initial_fraction: float = 0.7
    fire_resolution: float = 150.0
    fire_extent: float = 18000.0
    spread_probability: float = 0.3
    spread_neighborhood: int = 4
    spread_steps: int = 1
    mask_files: list = field(default_factory=list)
    survivors: list = field(default_factory=list)
    survivor_count: int = 0
    frame_interval: float = 5.0

    @property
    def capacity_j(self) -> float:
        """Usable battery energy in joules (mAh x V x 3.6 unless overridden)."""
        if self.battery_energy_j is not None:
            return float(self.battery_energy_j)
        return self.battery_capacity_mah * self.battery_voltage * 3.6

    @property
    def launch_position(self):
        if self.launch_x is None or self.launch_y is None:
            return None
        return (self.launch_x, self.launch_y)

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_mapping(self) -> dict:
        """Flat dotted-key mapping with every default materialised."""
        return {k.name: getattr(self, k.attr) for k in KEYS}

    def to_nested(self) -> dict:
        out: dict = {}
        for name, value in self.to_mapping().items():
            section, _, leaf = name.partition(".")
            out.setdefault(section, {})[leaf] = value
        return out

    @classmethod
    def from_mapping(cls, mapping: dict) -> "ScenarioConfig":
        return resolve_mapping(mapping)


def _flatten(data: dict, prefix="") -> dict:
    flat = {}
    for key, value in data.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, name + "."))
        else:
            flat[name] = value
    return flat


def _coerce(key: _Key, value):
    if value is None and key.default is None:
        return value, None
    if key.kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            return None, "expected an integer"
        return value, None
    if key.kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return None, "expected a number"
        if not math.isfinite(value):
            return None, "must be finite"
        return float(value), None
    if key.kind is str:
        if not isinstance(value, str):
            return None, "expected a string"
        return value, None
    if key.kind is list:
        if not isinstance(value, list):
            return None, "expected a list"
        return value, None
    return value, None


def resolve_mapping(mapping: dict) -> ScenarioConfig:
    """Validate a (possibly nested) mapping and fill in defaults.

    Raises :class:`ConfigError` listing every unknown key, type mismatch and
    range violation.
    """
    flat = _flatten(mapping)
    errors: list[str] = []
    values = {}
    for name in flat:
        if name not in _BY_NAME:
            errors.append(f"{name}: unknown key")
    for key in KEYS:
        if key.name not in flat:
            if key.default is _REQUIRED:
                errors.append(f"{key.name}: required")
            continue
        value, err = _coerce(key, flat[key.name])
        if err is None and value is not None and key.check is not None:
            err = key.check(value)
        if err is not None:
            errors.append(f"{key.name}: {err}")
        else:
            values[key.attr] = value
    if errors:
        raise ConfigError(errors)
    return ScenarioConfig(**values)


def parse_override(text: str) -> tuple[str, object]:
    """``key=value`` with a TOML-typed value; bare words are taken as strings."""
    key, sep, raw = text.partition("=")
    if not sep or not key.strip():
        raise ConfigError([f"{text}: override must look like key=value"])
    raw = raw.strip()
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return key.strip(), value


def load_mapping(path) -> dict:
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"{path}: not valid TOML ({exc})"]) from None
    flat = _flatten(data)
    files = flat.get("fire.mask_files")
    if isinstance(files, list):
        flat["fire.mask_files"] = [str((path.parent / f).resolve()) if isinstance(f, str) else f for f in files]
    return flat


def validate_config(path, overrides=()) -> ScenarioConfig:
    """Load a scenario file, apply ``key=value`` overrides and resolve defaults."""
    flat = load_mapping(path)
    for item in overrides:
        key, value = parse_override(item) if isinstance(item, str) else item
        flat[key] = value
    return resolve_mapping(flat)
