"""Shared planar geometry and time primitives.

All simulation time is integer microseconds since scenario start. Poses live
in a scenario-local planar frame (x east, y north, heading counter-clockwise
from +x in radians, normalized to (-pi, pi]).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

TWO_PI = 2.0 * math.pi


def us_from_s(seconds: float) -> int:
    """Convert seconds to integer microseconds (round to nearest)."""
    return int(round(seconds * 1e6))


def s_from_us(us: int) -> float:
    return us / 1e6


def normalize_heading(angle: float) -> float:
    """Wrap an angle to (-pi, pi]. Exact multiples of pi map to +pi."""
    if not math.isfinite(angle):
        raise ValueError(f"heading must be finite, got {angle!r}")
    # pi - ((pi - a) mod 2pi) lands in (-pi, pi] with the closed end at +pi
    return math.pi - ((math.pi - angle) % TWO_PI)


class AgentClass(IntEnum):
    """Object classes with stable wire codes."""

    VEHICLE = 1
    PEDESTRIAN = 2
    MEDICAL_BED = 3
    STATIC_OBSTACLE = 4

    @classmethod
    def from_name(cls, name: str) -> "AgentClass":
        try:
            return cls[name.upper()]
        except KeyError:
            raise ValueError(f"unknown agent class {name!r}") from None


@dataclass(frozen=True)
class Pose2:
    """Planar pose. heading is normalized at construction."""

    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("pose coordinates must be finite")
        object.__setattr__(self, "heading", normalize_heading(self.heading))


@dataclass(frozen=True)
class NodeExtrinsics:
    """Mounting of a sensor node: planar pose plus mast height metadata.

    mount_height does not enter the planar projection math; it is carried so
    deployments stay self-describing.
    """

    pose: Pose2
    mount_height: float

    def __post_init__(self) -> None:
        if self.mount_height <= 0.0:
            raise ValueError("mount_height must be positive")


def to_global(ext: NodeExtrinsics, local_x: float, local_y: float) -> tuple[float, float]:
    """Map a point from the node's local frame to the global frame."""
    h = ext.pose.heading
    c, s = math.cos(h), math.sin(h)
    return (
        ext.pose.x + c * local_x - s * local_y,
        ext.pose.y + s * local_x + c * local_y,
    )


def to_local(ext: NodeExtrinsics, global_x: float, global_y: float) -> tuple[float, float]:
    """Map a point from the global frame into the node's local frame.

    Exact inverse of to_global up to float rounding.
    """
    h = ext.pose.heading
    c, s = math.cos(h), math.sin(h)
    dx = global_x - ext.pose.x
    dy = global_y - ext.pose.y
    return (c * dx + s * dy, -s * dx + c * dy)


def transform_heading_to_global(ext: NodeExtrinsics, local_heading: float) -> float:
    return normalize_heading(ext.pose.heading + local_heading)


# ---------- segments and polylines ----------


def segment_point_distance(ax: float, ay: float, bx: float, by: float,
                           px: float, py: float) -> float:
    """Distance from point p to segment a-b."""
    abx, aby = bx - ax, by - ay
    apx, apy = px - ax, py - ay
    denom = abx * abx + aby * aby
    if denom <= 0.0:
        return math.hypot(apx, apy)
    t = (apx * abx + apy * aby) / denom
    t = min(1.0, max(0.0, t))
    return math.hypot(apx - t * abx, apy - t * aby)


class Polyline:
    """Piecewise-linear path with arc-length lookups."""

    def __init__(self, points: list[tuple[float, float]]):
        if len(points) < 2:
            raise ValueError("polyline needs at least two points")
        self.points = [(float(x), float(y)) for x, y in points]
        self._cum = [0.0]
        for (x0, y0), (x1, y1) in zip(self.points, self.points[1:]):
            self._cum.append(self._cum[-1] + math.hypot(x1 - x0, y1 - y0))
        if self._cum[-1] <= 0.0:
            raise ValueError("polyline has zero length")

    @property
    def length(self) -> float:
        return self._cum[-1]

    def point_at(self, s: float) -> tuple[float, float]:
        """Point at arc length s, clamped to the path ends."""
        s = min(self.length, max(0.0, s))
        i = self._segment_index(s)
        (x0, y0), (x1, y1) = self.points[i], self.points[i + 1]
        seg = self._cum[i + 1] - self._cum[i]
        t = 0.0 if seg <= 0.0 else (s - self._cum[i]) / seg
        return (x0 + t * (x1 - x0), y0 + t * (y1 - y0))

    def heading_at(self, s: float) -> float:
        """Tangent heading of the segment containing arc length s."""
        s = min(self.length, max(0.0, s))
        i = self._segment_index(s)
        (x0, y0), (x1, y1) = self.points[i], self.points[i + 1]
        return math.atan2(y1 - y0, x1 - x0)

    def offset_point(self, s: float, lateral: float) -> tuple[float, float]:
        """Point at arc length s displaced by `lateral` along the left normal."""
        x, y = self.point_at(s)
        h = self.heading_at(s)
        return (x - lateral * math.sin(h), y + lateral * math.cos(h))

    def project(self, px: float, py: float) -> tuple[float, float]:
        """Project a point onto the path. Returns (arc_length, signed_lateral).

        Positive lateral is left of the travel direction.
        """
        best = None
        for i, ((x0, y0), (x1, y1)) in enumerate(zip(self.points, self.points[1:])):
            abx, aby = x1 - x0, y1 - y0
            denom = abx * abx + aby * aby
            if denom <= 0.0:
                continue
            t = ((px - x0) * abx + (py - y0) * aby) / denom
            t = min(1.0, max(0.0, t))
            cx, cy = x0 + t * abx, y0 + t * aby
            d = math.hypot(px - cx, py - cy)
            if best is None or d < best[0]:
                seg_len = self._cum[i + 1] - self._cum[i]
                s = self._cum[i] + t * seg_len
                # sign from the cross product of tangent and offset
                cross = abx * (py - cy) - aby * (px - cx)
                lateral = d if cross >= 0.0 else -d
                best = (d, s, lateral)
        assert best is not None
        return (best[1], best[2])

    def _segment_index(self, s: float) -> int:
        lo, hi = 0, len(self._cum) - 1
        while lo < hi - 1:
            mid = (lo + hi) // 2
            if self._cum[mid] <= s:
                lo = mid
            else:
                hi = mid
        return lo


def point_in_polygon(px: float, py: float, polygon: list[tuple[float, float]]) -> bool:
    """Strict containment test (points on the edge count as outside).

    Ray casting with an explicit edge-distance rejection so boundary points
    are never accepted.
    """
    if len(polygon) < 3:
        raise ValueError("polygon needs at least three vertices")
    n = len(polygon)
    eps = 1e-12
    for i in range(n):
        ax, ay = polygon[i]
        bx, by = polygon[(i + 1) % n]
        if segment_point_distance(ax, ay, bx, by, px, py) <= eps:
            return False
    inside = False
    for i in range(n):
        ax, ay = polygon[i]
        bx, by = polygon[(i + 1) % n]
        if (ay > py) != (by > py):
            x_cross = ax + (py - ay) * (bx - ax) / (by - ay)
            if px < x_cross:
                inside = not inside
    return inside
