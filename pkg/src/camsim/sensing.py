"""Infrastructure sensor nodes: visibility, noisy detection, frame emission.

A node sees an angular sector (fov around its heading, out to max_range) and
is blocked by any other agent's body disk crossing the sight line. Detections
carry globally-referenced positions with additive Gaussian noise, a per-node
miss rate, and an imperfect class label. Static obstacles occlude but are
never reported: the infrastructure already knows its furniture.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import AgentClass, NodeExtrinsics, segment_point_distance, to_local
from .wire import MAX_RECORDS, ObjectRecord, PerceptionMessage
from .world import Agent, WorldState

SEQ_MOD = 1 << 32


@dataclass(frozen=True)
class SensorNodeConfig:
    node_id: int
    extrinsics: NodeExtrinsics
    fov: float                      # radians, (0, 2*pi]
    max_range: float                # meters
    detection_period_us: int
    noise_sigma: float = 0.15
    miss_rate: float = 0.05
    class_accuracy: float = 0.95
    link: str = "urllc"

    def __post_init__(self) -> None:
        if not 0 <= self.node_id <= 0xFFFF:
            raise ValueError("node_id out of u16 range")
        if not 0.0 < self.fov <= 2.0 * math.pi + 1e-12:
            raise ValueError("fov must be in (0, 2*pi]")
        if self.max_range <= 0.0:
            raise ValueError("max_range must be positive")
        if self.detection_period_us <= 0:
            raise ValueError("detection_period must be positive")
        if self.noise_sigma < 0.0:
            raise ValueError("noise_sigma must be non-negative")
        if not 0.0 <= self.miss_rate <= 1.0:
            raise ValueError("miss_rate must be in [0, 1]")
        if not 0.0 <= self.class_accuracy <= 1.0:
            raise ValueError("class_accuracy must be in [0, 1]")


@dataclass(frozen=True)
class Detection:
    """One sensed object, already in the global frame."""

    node_id: int
    local_object_index: int
    agent_class: AgentClass
    x: float
    y: float
    sigma: float
    capture_time: int


def in_sector(config: SensorNodeConfig, x: float, y: float) -> bool:
    """Is a global point inside the node's angular sector and range?"""
    lx, ly = to_local(config.extrinsics, x, y)
    if math.hypot(lx, ly) > config.max_range:
        return False
    bearing = math.atan2(ly, lx)
    return abs(bearing) <= config.fov / 2.0 + 1e-12


def visible(config: SensorNodeConfig, state: WorldState, agent: Agent) -> bool:
    """Geometric visibility: sector test plus occlusion by other agents.

    The sight line runs from the node origin to the agent center; any other
    agent whose body disk intersects it blocks the view.
    """
    if agent.agent_class is AgentClass.STATIC_OBSTACLE:
        return False
    if not in_sector(config, agent.pose.x, agent.pose.y):
        return False
    nx, ny = config.extrinsics.pose.x, config.extrinsics.pose.y
    for other in state.agents:
        if other.agent_id == agent.agent_id or other.radius <= 0.0:
            continue
        if segment_point_distance(nx, ny, agent.pose.x, agent.pose.y,
                                  other.pose.x, other.pose.y) < other.radius:
            return False
    return True


_DETECTABLE = (AgentClass.VEHICLE, AgentClass.PEDESTRIAN, AgentClass.MEDICAL_BED)


def sense(config: SensorNodeConfig, state: WorldState,
          rng: np.random.Generator) -> list[Detection]:
    """One detection pass over the world.

    Agents are processed in agent_id order so a given seed always draws the
    same randoms: per visible agent one miss draw, two noise draws, one class
    draw (plus one index draw when the label goes wrong).
    """
    detections: list[Detection] = []
    index = 0
    for agent in sorted(state.agents, key=lambda a: a.agent_id):
        if agent.agent_class not in _DETECTABLE:
            continue
        if not visible(config, state, agent):
            continue
        missed = rng.random() < config.miss_rate
        noise = rng.standard_normal(2)
        label = agent.agent_class
        if rng.random() >= config.class_accuracy:
            others = [c for c in AgentClass if c is not agent.agent_class]
            label = others[int(rng.integers(0, len(others)))]
        if missed:
            continue
        detections.append(Detection(
            node_id=config.node_id,
            local_object_index=index,
            agent_class=label,
            x=agent.pose.x + config.noise_sigma * float(noise[0]),
            y=agent.pose.y + config.noise_sigma * float(noise[1]),
            sigma=config.noise_sigma,
            capture_time=state.time,
        ))
        index += 1
    return detections


def make_message(node_id: int, detections: list[Detection],
                 capture_time: int, seq: int) -> PerceptionMessage:
    """Pack detections into one uplink frame."""
    if len(detections) > MAX_RECORDS:
        raise ValueError(f"cannot pack {len(detections)} detections into one frame")
    records = tuple(ObjectRecord(int(d.agent_class), d.x, d.y, d.sigma)
                    for d in detections)
    return PerceptionMessage(node_id=node_id, seq=seq,
                             capture_time=capture_time, records=records)


@dataclass
class SensorNode:
    """Stateful emitter: owns its noise stream and wrapping sequence counter."""

    config: SensorNodeConfig
    rng: np.random.Generator
    seq: int = 0
    detections_emitted: int = field(default=0)

    def emit(self, state: WorldState) -> tuple[PerceptionMessage, list[Detection]]:
        detections = sense(self.config, state, self.rng)
        msg = make_message(self.config.node_id, detections, state.time, self.seq)
        self.seq = (self.seq + 1) % SEQ_MOD
        self.detections_emitted += len(detections)
        return msg, detections
