"""Desk-scale cooperative perception simulator.

World simulation, infrastructure sensor nodes, emulated low-latency
transport, cloud fusion with hazard anticipation and proxemics-aware
planning, plus a trace/replay harness. See the README for the CLI and the
HTTP service surface.
"""

__version__ = "0.1.0"

from .conflict import ConflictEvent, HazardConfig, closest_approach, predict_conflict
from .core import AgentClass, NodeExtrinsics, Pose2, normalize_heading, to_global, to_local
from .metrics import compute_metrics, metrics_from_trace, read_trace, replay
from .network import DEGRADED, URLLC, DeliveryQueue, InTransit, LinkProfile, send
from .planning import PersonalSpace, PlannerConfig, SocialPlanner, personal_space_cost
from .scenario import ScenarioError, ScenarioSpec, load_scenario, validate_scenario
from .sensing import Detection, SensorNode, SensorNodeConfig, make_message, sense, visible
from .tracking import FusionConfig, FusionEngine, GlobalPicture, Track, TrackStatus, associate, predict, update
from .wire import (BadMagic, ObjectRecord, PerceptionMessage, Truncated, TrailingBytes,
                   UnsupportedVersion, WarningMessage, WireError, decode, decode_warning,
                   encode, encode_warning)
from .world import Agent, Behavior, WorldState, step_world

__all__ = [
    "AgentClass", "Agent", "BadMagic", "Behavior", "ConflictEvent", "DEGRADED",
    "DeliveryQueue", "Detection", "FusionConfig", "FusionEngine", "GlobalPicture",
    "HazardConfig", "InTransit", "LinkProfile", "NodeExtrinsics", "ObjectRecord",
    "PerceptionMessage", "PersonalSpace", "PlannerConfig", "Pose2", "ScenarioError",
    "ScenarioSpec", "SensorNode", "SensorNodeConfig", "SocialPlanner", "Track",
    "TrackStatus", "TrailingBytes", "Truncated", "URLLC", "UnsupportedVersion",
    "WarningMessage", "WireError", "WorldState", "associate", "closest_approach",
    "compute_metrics", "decode", "decode_warning", "encode", "encode_warning",
    "load_scenario", "make_message", "metrics_from_trace", "normalize_heading",
    "personal_space_cost", "predict", "predict_conflict", "read_trace", "replay",
    "send", "sense", "step_world", "to_global", "to_local", "update",
    "validate_scenario", "visible",
]
