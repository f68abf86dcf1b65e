"""Cloud-side fusion: constant-velocity Kalman tracks over node detections.

Messages are fused sequentially at detection level in arrival order. Each
ingest predicts live tracks forward, associates records to tracks with a
gated one-to-one assignment (maximum cardinality, then minimum total
distance), updates matched tracks, spawns tentative tracks from leftovers,
and runs the lifecycle sweep. Consumers only ever see Confirmed and Coasting
tracks, as immutable snapshots.

The engine knows the deployment geometry: a missed detection only counts
against a track when the sending node could actually have seen it (its
predicted position lies in that node's sector). Without this, every frame
from a node in some other coverage zone would starve healthy tracks.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import AgentClass
from .sensing import SensorNodeConfig, in_sector
from .wire import ObjectRecord, PerceptionMessage

# padding cost for pairs outside the gate; large enough that the solver
# always prefers one more real pairing over any cost shuffle
_GATE_PAD = 1e9


class TrackStatus(Enum):
    TENTATIVE = "tentative"
    CONFIRMED = "confirmed"
    COASTING = "coasting"


@dataclass(frozen=True)
class FusionConfig:
    gate_m: float = 2.5
    confirm_threshold: int = 3
    miss_threshold: int = 3
    drop_timeout_us: int = 2_000_000
    staleness_window_us: int = 150_000
    accel_density: float = 0.5        # white-noise acceleration PSD, m^2/s^3
    init_speed_sigma: float = 3.0     # prior velocity std for new tracks, m/s
    sigma_floor: float = 1e-6         # keeps R positive definite for exact feeds
    class_history: int = 10

    def __post_init__(self) -> None:
        if self.gate_m <= 0.0:
            raise ValueError("gate must be positive")
        if self.confirm_threshold < 1 or self.miss_threshold < 1:
            raise ValueError("thresholds must be at least 1")
        if self.drop_timeout_us <= 0 or self.staleness_window_us < 0:
            raise ValueError("timeouts must be positive")


@dataclass(frozen=True, eq=False)
class Track:
    """One fused object hypothesis. state is [x, y, vx, vy]."""

    track_id: int
    status: TrackStatus
    state: np.ndarray
    cov: np.ndarray
    last_update: int          # state epoch, microseconds
    last_hit: int             # capture time of the newest fused detection
    hit_count: int
    miss_count: int
    agent_class: AgentClass
    class_votes: tuple[int, ...]
    contributing_nodes: frozenset[int]

    @property
    def position(self) -> tuple[float, float]:
        return (float(self.state[0]), float(self.state[1]))

    @property
    def velocity(self) -> tuple[float, float]:
        return (float(self.state[2]), float(self.state[3]))

    @property
    def speed(self) -> float:
        return math.hypot(float(self.state[2]), float(self.state[3]))


@dataclass(frozen=True, eq=False)
class GlobalPicture:
    """Snapshot of the confirmed world, safe to hand to consumers."""

    time: int
    tracks: tuple[Track, ...]


def _transition(dt: float) -> np.ndarray:
    f = np.eye(4)
    f[0, 2] = dt
    f[1, 3] = dt
    return f


def _process_noise(dt: float, q: float) -> np.ndarray:
    d2 = dt * dt
    a = d2 * d2 / 4.0
    b = d2 * dt / 2.0
    return q * np.array([
        [a, 0.0, b, 0.0],
        [0.0, a, 0.0, b],
        [b, 0.0, d2, 0.0],
        [0.0, b, 0.0, d2],
    ])


_H = np.array([[1.0, 0.0, 0.0, 0.0],
               [0.0, 1.0, 0.0, 0.0]])


def predict(track: Track, to_time: int, config: FusionConfig) -> Track:
    """Propagate a track to a later epoch under the constant-velocity model."""
    if to_time < track.last_update:
        raise ValueError("cannot predict a track backwards")
    if to_time == track.last_update:
        return track
    dt = (to_time - track.last_update) / 1e6
    f = _transition(dt)
    state = f @ track.state
    cov = f @ track.cov @ f.T + _process_noise(dt, config.accel_density)
    cov = (cov + cov.T) / 2.0
    return replace(track, state=state, cov=cov, last_update=to_time)


def update(track: Track, record: ObjectRecord, node_id: int,
           config: FusionConfig) -> Track:
    """Fuse one detection into a track (Joseph-form measurement update)."""
    sigma = max(record.sigma, config.sigma_floor)
    r = np.eye(2) * sigma * sigma
    z = np.array([record.x, record.y])
    innovation = z - _H @ track.state
    s = _H @ track.cov @ _H.T + r
    k = np.linalg.solve(s.T, (_H @ track.cov.T)).T
    state = track.state + k @ innovation
    ikh = np.eye(4) - k @ _H
    cov = ikh @ track.cov @ ikh.T + k @ r @ k.T
    cov = (cov + cov.T) / 2.0

    votes = (track.class_votes + (int(record.class_code),))[-config.class_history:]
    hit_count = track.hit_count + 1
    status = track.status
    if status is TrackStatus.TENTATIVE and hit_count >= config.confirm_threshold:
        status = TrackStatus.CONFIRMED
    elif status is TrackStatus.COASTING:
        status = TrackStatus.CONFIRMED
    return replace(
        track,
        state=state,
        cov=cov,
        last_hit=max(track.last_hit, track.last_update),
        hit_count=hit_count,
        miss_count=0,
        status=status,
        agent_class=_majority_class(votes, track.agent_class),
        class_votes=votes,
        contributing_nodes=track.contributing_nodes | {node_id},
    )


def _majority_class(votes: tuple[int, ...], current: AgentClass) -> AgentClass:
    counts = Counter(votes)
    best_count = max(counts.values())
    winners = sorted(code for code, n in counts.items() if n == best_count)
    if int(current) in winners:
        return current  # ties keep the standing label
    return AgentClass(winners[0])


def associate(track_positions: list[tuple[float, float]],
              detections: list[tuple[float, float]],
              gate: float) -> tuple[list[tuple[int, int]], list[int], list[int]]:
    """Gated one-to-one assignment.

    Maximizes the number of within-gate pairings, then minimizes their total
    Euclidean distance. Returns (matches, unmatched_tracks, unmatched_dets)
    with matches sorted by track index.
    """
    nt, nd = len(track_positions), len(detections)
    if nt == 0 or nd == 0:
        return ([], list(range(nt)), list(range(nd)))
    cost = np.empty((nt, nd))
    for i, (tx, ty) in enumerate(track_positions):
        for j, (dx, dy) in enumerate(detections):
            d = math.hypot(tx - dx, ty - dy)
            cost[i, j] = d if d <= gate else _GATE_PAD
    rows, cols = linear_sum_assignment(cost)
    matches = [(int(i), int(j)) for i, j in zip(rows, cols) if cost[i, j] < _GATE_PAD]
    matches.sort()
    matched_t = {i for i, _ in matches}
    matched_d = {j for _, j in matches}
    return (matches,
            [i for i in range(nt) if i not in matched_t],
            [j for j in range(nd) if j not in matched_d])


@dataclass
class IngestResult:
    node_id: int
    capture_time: int
    arrival_time: int
    publish_time: int
    record_count: int
    stale: bool = False
    updated: list[int] = field(default_factory=list)
    spawned: list[int] = field(default_factory=list)
    missed: list[int] = field(default_factory=list)
    dropped: list[int] = field(default_factory=list)


class FusionEngine:
    """Sequential detection-level fusion over a known deployment."""

    def __init__(self, config: FusionConfig,
                 nodes: list[SensorNodeConfig] | None = None,
                 start_time: int = 0):
        self.config = config
        self.nodes: dict[int, SensorNodeConfig] = {n.node_id: n for n in (nodes or [])}
        self.clock = start_time
        self.tracks: list[Track] = []
        self.stale_discarded = 0
        self._next_id = 1

    def ingest(self, msg: PerceptionMessage, arrival_time: int) -> IngestResult:
        """Fuse one frame. The engine clock never moves backwards."""
        result = IngestResult(node_id=msg.node_id, capture_time=msg.capture_time,
                              arrival_time=arrival_time, publish_time=arrival_time,
                              record_count=len(msg.records))
        if msg.capture_time < self.clock - self.config.staleness_window_us:
            self.stale_discarded += 1
            result.stale = True
            return result
        self.clock = max(self.clock, msg.capture_time)

        # bring every live track to at least this capture's epoch; a late
        # frame (older capture than a faster node's) is applied at the
        # newer epoch, the staleness window bounds the resulting error
        self.tracks = [predict(t, max(t.last_update, msg.capture_time), self.config)
                       for t in self.tracks]

        matches, unmatched_tracks, unmatched_dets = associate(
            [t.position for t in self.tracks],
            [(r.x, r.y) for r in msg.records],
            self.config.gate_m,
        )
        for ti, di in matches:
            self.tracks[ti] = update(self.tracks[ti], msg.records[di],
                                     msg.node_id, self.config)
            result.updated.append(self.tracks[ti].track_id)

        node = self.nodes.get(msg.node_id)
        for ti in unmatched_tracks:
            t = self.tracks[ti]
            if node is not None and not in_sector(node, *t.position):
                continue  # this node could not have seen it, not a miss
            self.tracks[ti] = replace(t, miss_count=t.miss_count + 1)
            result.missed.append(t.track_id)

        for di in unmatched_dets:
            r = msg.records[di]
            track = self._spawn(r, msg.node_id, msg.capture_time)
            self.tracks.append(track)
            result.spawned.append(track.track_id)

        self.tracks, dropped = self._lifecycle_sweep()
        result.dropped = dropped
        return result

    def _spawn(self, record: ObjectRecord, node_id: int, capture: int) -> Track:
        sigma = max(record.sigma, self.config.sigma_floor)
        cov = np.diag([sigma * sigma, sigma * sigma,
                       self.config.init_speed_sigma ** 2,
                       self.config.init_speed_sigma ** 2])
        track = Track(
            track_id=self._next_id,
            status=TrackStatus.TENTATIVE,
            state=np.array([record.x, record.y, 0.0, 0.0]),
            cov=cov,
            last_update=capture,
            last_hit=capture,
            hit_count=1,
            miss_count=0,
            agent_class=AgentClass(record.class_code),
            class_votes=(int(record.class_code),),
            contributing_nodes=frozenset({node_id}),
        )
        self._next_id += 1
        return track

    def _lifecycle_sweep(self) -> tuple[list[Track], list[int]]:
        keep: list[Track] = []
        dropped: list[int] = []
        for t in self.tracks:
            if t.miss_count >= self.config.miss_threshold:
                if t.status is TrackStatus.TENTATIVE:
                    dropped.append(t.track_id)
                    continue
                if t.status is TrackStatus.CONFIRMED:
                    t = replace(t, status=TrackStatus.COASTING)
            if (t.status is TrackStatus.COASTING
                    and self.clock - t.last_hit > self.config.drop_timeout_us):
                dropped.append(t.track_id)
                continue
            keep.append(t)
        return keep, dropped

    def picture(self) -> GlobalPicture:
        """Immutable snapshot of Confirmed and Coasting tracks."""
        visible = [t for t in self.tracks
                   if t.status in (TrackStatus.CONFIRMED, TrackStatus.COASTING)]
        visible.sort(key=lambda t: t.track_id)
        return GlobalPicture(
            time=self.clock,
            tracks=tuple(replace(t, state=t.state.copy(), cov=t.cov.copy())
                         for t in visible),
        )
