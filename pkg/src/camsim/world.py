"""Simulated ground truth: agents, behaviors, fixed-tick stepping.

The world advances on a fixed tick. Agents follow one of three behaviors:
FOLLOW_PATH walks a polyline by arc length and parks at the end, STATIONARY
holds pose, SCRIPTED interpolates timed waypoints piecewise linearly (and
holds the last one). State is immutable; step_world returns a new WorldState.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

from .core import AgentClass, Polyline, Pose2, normalize_heading


class Behavior(Enum):
    FOLLOW_PATH = "follow_path"
    STATIONARY = "stationary"
    SCRIPTED = "scripted"


# A scripted waypoint: (time_us, x, y)
ScriptPoint = tuple[int, float, float]


@dataclass(frozen=True, eq=False)
class Agent:
    agent_id: int
    agent_class: AgentClass
    pose: Pose2
    speed: float
    radius: float
    behavior: Behavior
    path: Polyline | None = None
    path_s: float = 0.0
    script: tuple[ScriptPoint, ...] | None = None

    def __post_init__(self) -> None:
        if self.radius < 0.0:
            raise ValueError("agent radius must be non-negative")
        if self.speed < 0.0:
            raise ValueError("agent speed must be non-negative")
        if self.behavior is Behavior.FOLLOW_PATH and self.path is None:
            raise ValueError("follow_path agent needs a path")
        if self.behavior is Behavior.SCRIPTED:
            if not self.script or len(self.script) < 1:
                raise ValueError("scripted agent needs at least one waypoint")
            times = [t for t, _, _ in self.script]
            if any(b < a for a, b in zip(times, times[1:])):
                raise ValueError("script times must be non-decreasing")


@dataclass(frozen=True, eq=False)
class WorldState:
    time: int  # microseconds
    agents: tuple[Agent, ...]

    def agent(self, agent_id: int) -> Agent:
        for a in self.agents:
            if a.agent_id == agent_id:
                return a
        raise KeyError(f"no agent {agent_id}")


def script_state_at(script: tuple[ScriptPoint, ...], t_us: int,
                    fallback_heading: float) -> tuple[float, float, float, float]:
    """Evaluate a timed-waypoint script at t_us.

    Returns (x, y, heading, speed). Before the first waypoint the agent waits
    there; after the last it parks. Heading comes from the active segment,
    falling back to `fallback_heading` while holding position.
    """
    first_t, first_x, first_y = script[0]
    if t_us <= first_t or len(script) == 1:
        return (first_x, first_y, fallback_heading, 0.0)
    last_t, last_x, last_y = script[-1]
    if t_us >= last_t:
        # heading of the final moving segment, if any
        heading = fallback_heading
        for (t0, x0, y0), (t1, x1, y1) in zip(reversed(script[:-1]), reversed(script)):
            if (x1, y1) != (x0, y0) and t1 > t0:
                heading = math.atan2(y1 - y0, x1 - x0)
                break
        return (last_x, last_y, heading, 0.0)
    for (t0, x0, y0), (t1, x1, y1) in zip(script, script[1:]):
        if t0 <= t_us <= t1:
            if t1 == t0:
                continue
            frac = (t_us - t0) / (t1 - t0)
            x = x0 + frac * (x1 - x0)
            y = y0 + frac * (y1 - y0)
            dist = math.hypot(x1 - x0, y1 - y0)
            speed = dist / ((t1 - t0) / 1e6)
            heading = math.atan2(y1 - y0, x1 - x0) if dist > 0.0 else fallback_heading
            return (x, y, heading, speed)
    return (last_x, last_y, fallback_heading, 0.0)


def _step_agent(agent: Agent, new_time: int, dt_s: float) -> Agent:
    if agent.behavior is Behavior.STATIONARY:
        return agent
    if agent.behavior is Behavior.FOLLOW_PATH:
        assert agent.path is not None
        s = agent.path_s + agent.speed * dt_s
        if s >= agent.path.length:
            x, y = agent.path.point_at(agent.path.length)
            h = agent.path.heading_at(agent.path.length)
            # parked at the end of the path
            return replace(agent, pose=Pose2(x, y, h), speed=0.0,
                           path_s=agent.path.length, behavior=Behavior.STATIONARY)
        x, y = agent.path.point_at(s)
        h = agent.path.heading_at(s)
        return replace(agent, pose=Pose2(x, y, h), path_s=s)
    assert agent.script is not None
    x, y, h, v = script_state_at(agent.script, new_time, agent.pose.heading)
    return replace(agent, pose=Pose2(x, y, normalize_heading(h)), speed=v)


def step_world(state: WorldState, tick_us: int) -> WorldState:
    """Advance every agent by one tick."""
    if tick_us <= 0:
        raise ValueError("tick must be positive")
    new_time = state.time + tick_us
    dt_s = tick_us / 1e6
    return WorldState(time=new_time,
                      agents=tuple(_step_agent(a, new_time, dt_s) for a in state.agents))
