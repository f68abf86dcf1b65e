"""Scenario documents: schema, validation, world construction.

A scenario is a JSON object with simulation timing, sensor node deployment,
link profiles, agents, and optional fusion / hazard / planner sections. The
loader validates everything up front and reports every problem it finds,
each naming the offending field. Loading is pure: the same document always
produces the same ScenarioSpec.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, fields as dataclass_fields
from pathlib import Path
from typing import Any

from .conflict import HazardConfig, Subscriber
from .core import AgentClass, NodeExtrinsics, Polyline, Pose2, us_from_s
from .network import BUILTIN_LINKS, LinkProfile
from .planning import PlannerConfig
from .sensing import SensorNodeConfig
from .tracking import FusionConfig
from .world import Agent, Behavior, WorldState

SCHEMA_VERSION = 1

_TOP_KEYS = {
    "name", "description", "duration_s", "tick_dt_s", "rng_seed",
    "nodes", "links", "agents", "boundary", "reference_path",
    "fusion", "hazard", "planner",
}


class ScenarioError(ValueError):
    """Invalid scenario document. `problems` lists every field-level issue."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("; ".join(problems))


@dataclass(frozen=True, eq=False)
class ScenarioSpec:
    name: str
    description: str
    duration_us: int
    tick_us: int
    rng_seed: int
    nodes: tuple[SensorNodeConfig, ...]
    links: dict[str, LinkProfile]
    agents: tuple[Agent, ...]
    boundary: list[tuple[float, float]] | None
    reference_path: Polyline | None
    fusion: FusionConfig
    hazard: HazardConfig | None
    subscribers: tuple[Subscriber, ...]
    planner: PlannerConfig | None
    raw: dict[str, Any] = field(repr=False, default_factory=dict)

    def initial_world(self) -> WorldState:
        return WorldState(time=0, agents=self.agents)


class _Check:
    """Collects field-labelled problems during validation."""

    def __init__(self) -> None:
        self.problems: list[str] = []

    def fail(self, fieldname: str, message: str) -> None:
        self.problems.append(f"{fieldname}: {message}")

    def number(self, doc: dict, key: str, fieldname: str, *, required: bool = False,
               default: float | None = None, minimum: float | None = None,
               maximum: float | None = None, exclusive_min: bool = False) -> float | None:
        if key not in doc:
            if required:
                self.fail(fieldname, "missing required field")
                return None
            return default
        v = doc[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            self.fail(fieldname, f"must be a finite number, got {v!r}")
            return None
        v = float(v)
        if minimum is not None and (v <= minimum if exclusive_min else v < minimum):
            word = "greater than" if exclusive_min else "at least"
            self.fail(fieldname, f"must be {word} {minimum}, got {v}")
            return None
        if maximum is not None and v > maximum:
            self.fail(fieldname, f"must be at most {maximum}, got {v}")
            return None
        return v

    def integer(self, doc: dict, key: str, fieldname: str, *, required: bool = False,
                default: int | None = None, minimum: int | None = None) -> int | None:
        if key not in doc:
            if required:
                self.fail(fieldname, "missing required field")
                return None
            return default
        v = doc[key]
        if isinstance(v, bool) or not isinstance(v, int):
            self.fail(fieldname, f"must be an integer, got {v!r}")
            return None
        if minimum is not None and v < minimum:
            self.fail(fieldname, f"must be at least {minimum}, got {v}")
            return None
        return v


def _parse_points(raw: Any, fieldname: str, check: _Check,
                  min_points: int) -> list[tuple[float, float]] | None:
    if not isinstance(raw, list) or len(raw) < min_points:
        check.fail(fieldname, f"must be a list of at least {min_points} [x, y] points")
        return None
    points = []
    for i, p in enumerate(raw):
        if (not isinstance(p, list) or len(p) != 2
                or any(isinstance(c, bool) or not isinstance(c, (int, float))
                       or not math.isfinite(c) for c in p)):
            check.fail(f"{fieldname}[{i}]", "must be a finite [x, y] pair")
            return None
        points.append((float(p[0]), float(p[1])))
    return points


def _parse_node(doc: Any, i: int, check: _Check) -> SensorNodeConfig | None:
    f = f"nodes[{i}]"
    if not isinstance(doc, dict):
        check.fail(f, "must be an object")
        return None
    node_id = check.integer(doc, "node_id", f"{f}.node_id", required=True, minimum=0)
    x = check.number(doc, "x", f"{f}.x", required=True)
    y = check.number(doc, "y", f"{f}.y", required=True)
    heading = check.number(doc, "heading", f"{f}.heading", default=0.0)
    mount = check.number(doc, "mount_height", f"{f}.mount_height",
                         default=3.0, minimum=0.0, exclusive_min=True)
    fov = check.number(doc, "fov", f"{f}.fov", default=math.pi,
                       minimum=0.0, exclusive_min=True, maximum=2.0 * math.pi)
    max_range = check.number(doc, "max_range", f"{f}.max_range",
                             default=60.0, minimum=0.0, exclusive_min=True)
    period = check.number(doc, "detection_period_s", f"{f}.detection_period_s",
                          default=0.1, minimum=0.0, exclusive_min=True)
    sigma = check.number(doc, "noise_sigma", f"{f}.noise_sigma", default=0.15, minimum=0.0)
    miss = check.number(doc, "miss_rate", f"{f}.miss_rate", default=0.05,
                        minimum=0.0, maximum=1.0)
    acc = check.number(doc, "class_accuracy", f"{f}.class_accuracy", default=0.95,
                       minimum=0.0, maximum=1.0)
    link = doc.get("link", "urllc")
    if not isinstance(link, str):
        check.fail(f"{f}.link", f"must be a link name, got {link!r}")
        return None
    if None in (node_id, x, y, heading, mount, fov, max_range, period, sigma, miss, acc):
        return None
    if node_id > 0xFFFF:
        check.fail(f"{f}.node_id", f"must fit in 16 bits, got {node_id}")
        return None
    return SensorNodeConfig(
        node_id=node_id,
        extrinsics=NodeExtrinsics(Pose2(x, y, heading), mount),
        fov=fov, max_range=max_range,
        detection_period_us=us_from_s(period),
        noise_sigma=sigma, miss_rate=miss, class_accuracy=acc, link=link,
    )


def _parse_agent(doc: Any, i: int, check: _Check) -> Agent | None:
    f = f"agents[{i}]"
    if not isinstance(doc, dict):
        check.fail(f, "must be an object")
        return None
    agent_id = check.integer(doc, "agent_id", f"{f}.agent_id", required=True, minimum=0)
    cls_name = doc.get("class")
    try:
        agent_class = AgentClass.from_name(cls_name) if isinstance(cls_name, str) else None
    except ValueError:
        agent_class = None
    if agent_class is None:
        valid = ", ".join(c.name.lower() for c in AgentClass)
        check.fail(f"{f}.class", f"must be one of: {valid}, got {cls_name!r}")
    behavior_name = doc.get("behavior", "stationary")
    try:
        behavior = Behavior(behavior_name)
    except ValueError:
        valid = ", ".join(b.value for b in Behavior)
        check.fail(f"{f}.behavior", f"must be one of: {valid}, got {behavior_name!r}")
        return None
    # pose comes from the path/script for the other behaviors
    pose_required = behavior is Behavior.STATIONARY
    x = check.number(doc, "x", f"{f}.x", required=pose_required, default=0.0)
    y = check.number(doc, "y", f"{f}.y", required=pose_required, default=0.0)
    heading = check.number(doc, "heading", f"{f}.heading", default=0.0)
    speed = check.number(doc, "speed", f"{f}.speed", default=0.0, minimum=0.0)
    radius = check.number(doc, "radius", f"{f}.radius", default=0.3, minimum=0.0)
    path = None
    if behavior is Behavior.FOLLOW_PATH:
        points = _parse_points(doc.get("path"), f"{f}.path", check, 2)
        if points is None:
            return None
        try:
            path = Polyline(points)
        except ValueError as exc:
            check.fail(f"{f}.path", str(exc))
            return None
    script = None
    if behavior is Behavior.SCRIPTED:
        raw_script = doc.get("script")
        if not isinstance(raw_script, list) or not raw_script:
            check.fail(f"{f}.script", "must be a non-empty list of [t_s, x, y]")
            return None
        script_points = []
        for j, p in enumerate(raw_script):
            if (not isinstance(p, list) or len(p) != 3
                    or any(isinstance(c, bool) or not isinstance(c, (int, float))
                           or not math.isfinite(c) for c in p)):
                check.fail(f"{f}.script[{j}]", "must be a finite [t_s, x, y] triple")
                return None
            script_points.append((us_from_s(float(p[0])), float(p[1]), float(p[2])))
        times = [t for t, _, _ in script_points]
        if any(b < a for a, b in zip(times, times[1:])):
            check.fail(f"{f}.script", "times must be non-decreasing")
            return None
        script = tuple(script_points)
    if None in (agent_id, agent_class, x, y, heading, speed, radius):
        return None
    if behavior is Behavior.FOLLOW_PATH and path is not None:
        sx, sy = path.point_at(0.0)
        x, y, heading = sx, sy, path.heading_at(0.0)
    if behavior is Behavior.SCRIPTED and script is not None:
        x, y = script[0][1], script[0][2]
    return Agent(agent_id=agent_id, agent_class=agent_class,
                 pose=Pose2(x, y, heading), speed=speed, radius=radius,
                 behavior=behavior, path=path, script=script)


def _parse_link(doc: Any, i: int, check: _Check) -> LinkProfile | None:
    f = f"links[{i}]"
    if not isinstance(doc, dict):
        check.fail(f, "must be an object")
        return None
    name = doc.get("name")
    if not isinstance(name, str) or not name:
        check.fail(f"{f}.name", "must be a non-empty string")
        return None
    base = check.integer(doc, "base_latency_us", f"{f}.base_latency_us",
                         required=True, minimum=0)
    jitter = check.integer(doc, "jitter_us", f"{f}.jitter_us", default=0, minimum=0)
    loss = check.number(doc, "loss_probability", f"{f}.loss_probability",
                        default=0.0, minimum=0.0, maximum=1.0)
    reorder = doc.get("reorder_allowed", False)
    if not isinstance(reorder, bool):
        check.fail(f"{f}.reorder_allowed", f"must be a boolean, got {reorder!r}")
        return None
    if None in (base, jitter, loss):
        return None
    if jitter > base:
        check.fail(f"{f}.jitter_us", f"jitter {jitter} exceeds base latency {base}")
        return None
    return LinkProfile(name=name, base_latency_us=base, jitter_us=jitter,
                       loss_probability=loss, reorder_allowed=reorder)


def _parse_fusion(doc: Any, check: _Check) -> FusionConfig:
    if doc is None:
        return FusionConfig()
    if not isinstance(doc, dict):
        check.fail("fusion", "must be an object")
        return FusionConfig()
    gate = check.number(doc, "gate_m", "fusion.gate_m", default=2.5,
                        minimum=0.0, exclusive_min=True)
    confirm = check.integer(doc, "confirm_threshold", "fusion.confirm_threshold",
                            default=3, minimum=1)
    miss = check.integer(doc, "miss_threshold", "fusion.miss_threshold",
                         default=3, minimum=1)
    drop = check.number(doc, "drop_timeout_s", "fusion.drop_timeout_s",
                        default=2.0, minimum=0.0, exclusive_min=True)
    stale = check.number(doc, "staleness_window_s", "fusion.staleness_window_s",
                         default=0.15, minimum=0.0)
    q = check.number(doc, "accel_density", "fusion.accel_density",
                     default=0.5, minimum=0.0, exclusive_min=True)
    vsig = check.number(doc, "init_speed_sigma", "fusion.init_speed_sigma",
                        default=3.0, minimum=0.0, exclusive_min=True)
    if None in (gate, confirm, miss, drop, stale, q, vsig):
        return FusionConfig()
    return FusionConfig(gate_m=gate, confirm_threshold=confirm, miss_threshold=miss,
                        drop_timeout_us=us_from_s(drop),
                        staleness_window_us=us_from_s(stale),
                        accel_density=q, init_speed_sigma=vsig)


def _parse_hazard(doc: Any, link_names: set[str],
                  check: _Check) -> tuple[HazardConfig | None, tuple[Subscriber, ...]]:
    if doc is None:
        return None, ()
    if not isinstance(doc, dict):
        check.fail("hazard", "must be an object")
        return None, ()
    radius = check.number(doc, "conflict_radius_m", "hazard.conflict_radius_m",
                          default=2.0, minimum=0.0, exclusive_min=True)
    horizon = check.number(doc, "horizon_s", "hazard.horizon_s",
                           default=6.0, minimum=0.0, exclusive_min=True)
    lead = check.number(doc, "warn_lead_s", "hazard.warn_lead_s",
                        default=2.0, minimum=0.0)
    delta = check.number(doc, "re_alert_delta_s", "hazard.re_alert_delta_s",
                         default=0.5, minimum=0.0)
    subs: list[Subscriber] = []
    raw_subs = doc.get("subscribers", [])
    if not isinstance(raw_subs, list):
        check.fail("hazard.subscribers", "must be a list")
        raw_subs = []
    for i, s in enumerate(raw_subs):
        f = f"hazard.subscribers[{i}]"
        if not isinstance(s, dict):
            check.fail(f, "must be an object")
            continue
        sid = check.integer(s, "subscriber_id", f"{f}.subscriber_id",
                            required=True, minimum=0)
        kind = s.get("kind", "connected_vehicle")
        link = s.get("link", "urllc")
        if not isinstance(kind, str) or not isinstance(link, str):
            check.fail(f, "kind and link must be strings")
            continue
        if link not in link_names:
            check.fail(f"{f}.link", f"unknown link {link!r}")
            continue
        if sid is None:
            continue
        subs.append(Subscriber(subscriber_id=sid, kind=kind, link=link))
    if None in (radius, horizon, lead, delta):
        return None, ()
    return (HazardConfig(conflict_radius_m=radius, horizon_s=horizon,
                         warn_lead_s=lead, re_alert_delta_s=delta), tuple(subs))


def _parse_planner(doc: Any, agent_ids: set[int], check: _Check) -> PlannerConfig | None:
    if doc is None:
        return None
    if not isinstance(doc, dict):
        check.fail("planner", "must be an object")
        return None
    bed = check.integer(doc, "bed_agent_id", "planner.bed_agent_id",
                        required=True, minimum=0)
    if bed is not None and bed not in agent_ids:
        check.fail("planner.bed_agent_id", f"no agent with id {bed}")
        return None
    kwargs: dict[str, Any] = {}
    # defaults come from the PlannerConfig fields so the two cannot drift;
    # the flag says whether zero is rejected
    strict_positive = {
        "max_speed": True, "max_accel": True, "lateral_rate": True,
        "horizon_s": True, "sample_dt_s": True,
        "max_lateral_offset": False, "w_social": False,
        "w_path": False, "w_speed": False, "w_commit": False,
        "stop_cost_threshold": True, "resume_cost_threshold": False,
        "r_hard": True,
        "sigma_front": True, "sigma_side": True, "sigma_back": True,
        "yield_range": True, "yield_speed_margin": False,
    }
    defaults = {f.name: f.default for f in dataclass_fields(PlannerConfig)}
    ok = True
    for key, strict in strict_positive.items():
        v = check.number(doc, key, f"planner.{key}", default=defaults[key],
                         minimum=0.0, exclusive_min=strict)
        if v is None:
            ok = False
        else:
            kwargs[key] = v
    for key in ("lateral_samples", "speed_samples"):
        v = check.integer(doc, key, f"planner.{key}", default=defaults[key], minimum=1)
        if v is None:
            ok = False
        else:
            kwargs[key] = v
    if bed is None or not ok:
        return None
    try:
        return PlannerConfig(bed_agent_id=bed, **kwargs)
    except ValueError as exc:
        check.fail("planner", str(exc))
        return None


def validate_scenario(doc: Any) -> tuple[ScenarioSpec | None, list[str], list[str]]:
    """Validate a parsed document. Returns (spec, problems, advisories)."""
    check = _Check()
    notices: list[str] = []
    if not isinstance(doc, dict):
        return None, ["document: must be a JSON object"], []
    for key in doc:
        if key not in _TOP_KEYS:
            check.fail(key, "unknown field")

    name = doc.get("name")
    if not isinstance(name, str) or not name:
        check.fail("name", "must be a non-empty string")
        name = "unnamed"
    description = doc.get("description", "")
    if not isinstance(description, str):
        check.fail("description", "must be a string")
        description = ""
    duration = check.number(doc, "duration_s", "duration_s", required=True,
                            minimum=0.0, exclusive_min=True)
    tick = check.number(doc, "tick_dt_s", "tick_dt_s", default=0.05,
                        minimum=0.0, exclusive_min=True)
    seed = check.integer(doc, "rng_seed", "rng_seed", default=0, minimum=0)

    links: dict[str, LinkProfile] = dict(BUILTIN_LINKS)
    raw_links = doc.get("links", [])
    if not isinstance(raw_links, list):
        check.fail("links", "must be a list")
        raw_links = []
    for i, l in enumerate(raw_links):
        profile = _parse_link(l, i, check)
        if profile is not None:
            links[profile.name] = profile

    nodes: list[SensorNodeConfig] = []
    raw_nodes = doc.get("nodes", [])
    if not isinstance(raw_nodes, list):
        check.fail("nodes", "must be a list")
        raw_nodes = []
    seen_nodes: set[int] = set()
    for i, n in enumerate(raw_nodes):
        cfg = _parse_node(n, i, check)
        if cfg is None:
            continue
        if cfg.node_id in seen_nodes:
            check.fail(f"nodes[{i}].node_id", f"duplicate node id {cfg.node_id}")
            continue
        if cfg.link not in links:
            check.fail(f"nodes[{i}].link", f"unknown link {cfg.link!r}")
            continue
        seen_nodes.add(cfg.node_id)
        nodes.append(cfg)

    agents: list[Agent] = []
    raw_agents = doc.get("agents", [])
    if not isinstance(raw_agents, list):
        check.fail("agents", "must be a list")
        raw_agents = []
    seen_agents: set[int] = set()
    for i, a in enumerate(raw_agents):
        agent = _parse_agent(a, i, check)
        if agent is None:
            continue
        if agent.agent_id in seen_agents:
            check.fail(f"agents[{i}].agent_id", f"duplicate agent id {agent.agent_id}")
            continue
        seen_agents.add(agent.agent_id)
        agents.append(agent)

    boundary = None
    if "boundary" in doc:
        boundary = _parse_points(doc["boundary"], "boundary", check, 3)
    reference_path = None
    if "reference_path" in doc:
        points = _parse_points(doc["reference_path"], "reference_path", check, 2)
        if points is not None:
            try:
                reference_path = Polyline(points)
            except ValueError as exc:
                check.fail("reference_path", str(exc))

    fusion = _parse_fusion(doc.get("fusion"), check)
    hazard, subscribers = _parse_hazard(doc.get("hazard"), set(links), check)
    planner = _parse_planner(doc.get("planner"), seen_agents, check)
    if planner is not None and reference_path is None:
        check.fail("reference_path", "required when a planner is configured")

    if tick is not None and duration is not None:
        tick_us = us_from_s(tick)
        for i, n in enumerate(nodes):
            if n.detection_period_us % tick_us != 0:
                check.fail(f"nodes[{i}].detection_period_s",
                           f"must be an integer multiple of tick_dt_s ({tick})")

    # deployment density advisory: flag silly densities, never reject
    if len(nodes) >= 2:
        xs = [n.extrinsics.pose.x for n in nodes]
        ys = [n.extrinsics.pose.y for n in nodes]
        area_km2 = ((max(xs) - min(xs)) * (max(ys) - min(ys))) / 1e6
        if area_km2 > 0 and len(nodes) / area_km2 > 1e6:
            notices.append(
                f"deployment density {len(nodes) / area_km2:.3g} nodes/km^2 exceeds "
                "1e6 devices/km^2; transport contention is not modeled")

    if check.problems:
        return None, check.problems, notices
    spec = ScenarioSpec(
        name=name, description=description,
        duration_us=us_from_s(duration), tick_us=us_from_s(tick),
        rng_seed=seed, nodes=tuple(nodes), links=links, agents=tuple(agents),
        boundary=boundary, reference_path=reference_path,
        fusion=fusion, hazard=hazard, subscribers=subscribers, planner=planner,
        raw=doc,
    )
    return spec, [], notices


def load_scenario(source: str | Path | dict) -> ScenarioSpec:
    """Load and validate a scenario from a path or a parsed document.

    Raises ScenarioError with the full problem list on any failure; density
    advisories surface as warnings.
    """
    if isinstance(source, (str, Path)):
        try:
            text = Path(source).read_text()
        except OSError as exc:
            raise ScenarioError([f"file: {exc}"]) from exc
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError([f"json (line {exc.lineno}, column {exc.colno}): {exc.msg}"]) from exc
    else:
        doc = source
    spec, problems, notices = validate_scenario(doc)
    for note in notices:
        warnings.warn(note, stacklevel=2)
    if spec is None:
        raise ScenarioError(problems)
    return spec
