"""Hazard anticipation: constant-velocity conflict screening over the picture.

Every pair of tracks involving at least one vehicle is extrapolated along
current velocities. If the closest approach inside the horizon dips below
the conflict radius, a ConflictEvent is raised carrying the first
radius-crossing time. Repeated alerts for the same pair are suppressed until
the predicted conflict instant moves by more than re_alert_delta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .core import AgentClass
from .tracking import GlobalPicture, Track


@dataclass(frozen=True)
class HazardConfig:
    conflict_radius_m: float = 2.0
    horizon_s: float = 6.0
    warn_lead_s: float = 2.0          # design target used by evaluation
    re_alert_delta_s: float = 0.5

    def __post_init__(self) -> None:
        if self.conflict_radius_m <= 0.0 or self.horizon_s <= 0.0:
            raise ValueError("radius and horizon must be positive")


@dataclass(frozen=True)
class Subscriber:
    subscriber_id: int
    kind: str          # e.g. "connected_vehicle", "phone"
    link: str = "urllc"


@dataclass(frozen=True)
class ConflictEvent:
    event_id: int
    track_a: int
    track_b: int
    time_to_conflict: float   # seconds from issue to first radius crossing
    min_distance: float       # meters at closest approach inside the horizon
    issued_at: int            # microseconds


def closest_approach(pa: tuple[float, float], va: tuple[float, float],
                     pb: tuple[float, float], vb: tuple[float, float],
                     horizon: float) -> tuple[float, float]:
    """Closest approach of two constant-velocity points within [0, horizon].

    Returns (t_min, d_min). The distance is quadratic in time, so the
    constrained minimum is either the unconstrained vertex or an endpoint.
    """
    if horizon <= 0.0:
        raise ValueError("horizon must be positive")
    rx, ry = pa[0] - pb[0], pa[1] - pb[1]
    vx, vy = va[0] - vb[0], va[1] - vb[1]
    vv = vx * vx + vy * vy
    t = 0.0 if vv <= 0.0 else -(rx * vx + ry * vy) / vv
    t = min(horizon, max(0.0, t))
    return (t, math.hypot(rx + vx * t, ry + vy * t))


def first_crossing(pa: tuple[float, float], va: tuple[float, float],
                   pb: tuple[float, float], vb: tuple[float, float],
                   radius: float) -> float | None:
    """Earliest t >= 0 at which the pair distance reaches `radius`.

    Returns 0.0 if already inside, None if the radius is never reached.
    """
    rx, ry = pa[0] - pb[0], pa[1] - pb[1]
    vx, vy = va[0] - vb[0], va[1] - vb[1]
    c = rx * rx + ry * ry - radius * radius
    if c <= 0.0:
        return 0.0
    a = vx * vx + vy * vy
    b = 2.0 * (rx * vx + ry * vy)
    if a <= 0.0:
        return None
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        return None
    t_entry = (-b - math.sqrt(disc)) / (2.0 * a)
    return t_entry if t_entry >= 0.0 else None


def predict_conflict(track_a: Track, track_b: Track, config: HazardConfig,
                     now: int, event_id: int = 0) -> ConflictEvent | None:
    """Screen one pair of tracks for a conflict inside the horizon."""
    t_min, d_min = closest_approach(track_a.position, track_a.velocity,
                                    track_b.position, track_b.velocity,
                                    config.horizon_s)
    if d_min >= config.conflict_radius_m:
        return None
    entry = first_crossing(track_a.position, track_a.velocity,
                           track_b.position, track_b.velocity,
                           config.conflict_radius_m)
    if entry is None or entry > config.horizon_s:
        return None
    a, b = sorted((track_a.track_id, track_b.track_id))
    return ConflictEvent(event_id=event_id, track_a=a, track_b=b,
                         time_to_conflict=entry, min_distance=d_min,
                         issued_at=now)


class HazardMonitor:
    """Scans pictures for vehicle conflicts with per-pair re-alert damping."""

    def __init__(self, config: HazardConfig,
                 subscribers: tuple[Subscriber, ...] = ()):
        self.config = config
        self.subscribers = tuple(subscribers)
        self._next_event_id = 1
        # pair -> predicted absolute conflict time (us) of the last alert
        self._alerted: dict[tuple[int, int], int] = {}

    def scan(self, picture: GlobalPicture, now: int) -> list[ConflictEvent]:
        """All fresh conflicts in this picture, in (track_a, track_b) order."""
        events: list[ConflictEvent] = []
        tracks = picture.tracks
        delta_us = int(self.config.re_alert_delta_s * 1e6)
        for i in range(len(tracks)):
            for j in range(i + 1, len(tracks)):
                ta, tb = tracks[i], tracks[j]
                if (ta.agent_class is not AgentClass.VEHICLE
                        and tb.agent_class is not AgentClass.VEHICLE):
                    continue
                event = predict_conflict(ta, tb, self.config, now)
                if event is None:
                    continue
                pair = (event.track_a, event.track_b)
                predicted_abs = now + int(event.time_to_conflict * 1e6)
                last = self._alerted.get(pair)
                if last is not None and abs(predicted_abs - last) <= delta_us:
                    continue
                self._alerted[pair] = predicted_abs
                events.append(ConflictEvent(
                    event_id=self._next_event_id,
                    track_a=event.track_a, track_b=event.track_b,
                    time_to_conflict=event.time_to_conflict,
                    min_distance=event.min_distance, issued_at=now))
                self._next_event_id += 1
        return events
