"""Proxemics-aware bed planning over the fused picture.

Candidates are arcs along the reference path: 7 lateral offsets crossed with
5 target speeds, rolled out with acceleration-limited speed ramps and
rate-limited lateral blends. A candidate is hard-rejected if any waypoint
leaves the operating boundary or comes within r_hard of a tracked person.
Survivors are scored by worst personal-space intrusion, path deviation and
speed deviation; the cheapest candidate wins. If everything is rejected or
even the best candidate is too expensive, the planner orders a Stop.

A person approaching fast from behind inside the rear cone triggers a yield:
speed is capped to zero and the bed pulls toward the corridor edge away from
the person until they have passed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .core import AgentClass, Polyline, point_in_polygon
from .tracking import GlobalPicture, Track

MOVING_SPEED_THRESHOLD = 0.1  # below this a person counts as standing


@dataclass(frozen=True)
class PersonalSpace:
    """Asymmetric Gaussian comfort field around one person.

    The field is largest ahead of a moving person; standing persons get an
    isotropic field at the side scale. Cost peaks at 1 on the person.
    """

    x: float
    y: float
    heading: float
    speed: float
    sigma_front: float = 1.2
    sigma_side: float = 0.6
    sigma_back: float = 0.6

    @classmethod
    def from_track(cls, track: Track, sigma_front: float, sigma_side: float,
                   sigma_back: float) -> "PersonalSpace":
        vx, vy = track.velocity
        speed = math.hypot(vx, vy)
        heading = math.atan2(vy, vx) if speed >= MOVING_SPEED_THRESHOLD else 0.0
        return cls(track.position[0], track.position[1], heading, speed,
                   sigma_front, sigma_side, sigma_back)


def personal_space_cost(space: PersonalSpace, px: float, py: float) -> float:
    """exp(-d^2/2) with d measured in the person's scaled frame."""
    dx, dy = px - space.x, py - space.y
    if space.speed < MOVING_SPEED_THRESHOLD:
        s = space.sigma_side
        d2 = (dx * dx + dy * dy) / (s * s)
    else:
        c, s = math.cos(space.heading), math.sin(space.heading)
        forward = c * dx + s * dy
        lateral = -s * dx + c * dy
        sf = space.sigma_front if forward >= 0.0 else space.sigma_back
        d2 = (forward / sf) ** 2 + (lateral / space.sigma_side) ** 2
    return math.exp(-d2 / 2.0)


@dataclass(frozen=True)
class PlannerConfig:
    bed_agent_id: int
    max_speed: float = 1.0
    max_accel: float = 0.5
    lateral_rate: float = 0.5
    horizon_s: float = 2.5
    sample_dt_s: float = 0.1
    max_lateral_offset: float = 0.9
    lateral_samples: int = 7
    speed_samples: int = 5
    w_social: float = 3.0
    w_path: float = 0.6
    w_speed: float = 4.0
    # flat penalty for changing the lateral target between replans; without it
    # adjacent targets with near-equal costs alternate every replan and the
    # resulting zigzag whipsaws the tracker's velocity estimate
    w_commit: float = 0.25
    # above this best-candidate cost the bed halts instead of squeezing on;
    # must sit below the cost of creeping at a blocking crowd (about 2.7,
    # slowest surviving speed plus its intrusion) yet above a tight but
    # passable squeeze (about 1.25) or the bed hovers forever
    stop_cost_threshold: float = 2.0
    # once halted by cost the bed resumes only below this lower bar; arcs
    # rolled out from standstill barely move and look cheap, so a single
    # threshold chatters accelerate/brake at 2-3 Hz in front of a crowd
    resume_cost_threshold: float = 1.0
    r_hard: float = 0.45
    sigma_front: float = 1.2
    sigma_side: float = 0.6
    sigma_back: float = 0.6
    yield_range: float = 5.0
    yield_speed_margin: float = 0.3
    cruise_speed: float | None = None  # defaults to max_speed

    def __post_init__(self) -> None:
        if self.max_speed <= 0 or self.max_accel <= 0 or self.lateral_rate <= 0:
            raise ValueError("speed, accel and lateral rate must be positive")
        if self.horizon_s <= 0 or self.sample_dt_s <= 0:
            raise ValueError("horizon and sample step must be positive")
        if self.lateral_samples < 1 or self.speed_samples < 1:
            raise ValueError("lattice needs at least one sample per axis")
        if self.r_hard <= 0:
            raise ValueError("r_hard must be positive")
        if self.resume_cost_threshold > self.stop_cost_threshold:
            raise ValueError("resume threshold must not exceed stop threshold")

    @property
    def cruise(self) -> float:
        return self.cruise_speed if self.cruise_speed is not None else self.max_speed

    def lateral_targets(self) -> list[float]:
        n = self.lateral_samples
        if n == 1:
            return [0.0]
        w = self.max_lateral_offset
        return [-w + 2.0 * w * i / (n - 1) for i in range(n)]

    def speed_targets(self) -> list[float]:
        # zero is deliberately excluded: a standstill candidate would always
        # survive rejection and Stop could never be reached
        return [self.max_speed * (i + 1) / self.speed_samples
                for i in range(self.speed_samples)]


# A trajectory waypoint: (time_us, x, y, heading, speed)
Waypoint = tuple[int, float, float, float, float]


def _speed_at(waypoints: tuple[Waypoint, ...], t_us: int) -> float:
    """Commanded station speed at a moment inside a previous plan."""
    if t_us <= waypoints[0][0]:
        return waypoints[0][4]
    for a, b in zip(waypoints, waypoints[1:]):
        if t_us <= b[0]:
            span = b[0] - a[0]
            f = (t_us - a[0]) / span if span > 0 else 1.0
            return a[4] + f * (b[4] - a[4])
    return waypoints[-1][4]


@dataclass(frozen=True)
class Candidate:
    lateral_target: float
    speed_target: float
    waypoints: tuple[Waypoint, ...]
    rejected: bool
    cost: float | None
    social: float | None
    min_clearance: float | None


@dataclass(frozen=True)
class PlanResult:
    """Outcome of one planning step.

    kind is "plan" for a lattice winner, "stop" for a controlled halt, and
    "yield" while giving way. candidates carries every scored (non-rejected)
    cost in lattice order so consumers can audit that the winner is the
    exhaustive minimum.
    """

    kind: str
    time: int
    waypoints: tuple[Waypoint, ...]
    chosen_offset: float | None = None
    chosen_speed: float | None = None
    cost: float | None = None
    candidate_costs: tuple[float, ...] = ()
    rejected_count: int = 0
    min_clearance: float | None = None
    yield_person: int | None = None


def rollout(path: Polyline, s0: float, lat0: float, v0: float,
            lat_target: float, speed_target: float, config: PlannerConfig,
            t0: int) -> tuple[Waypoint, ...]:
    """Integrate one candidate arc along the reference path."""
    dt = config.sample_dt_s
    steps = max(1, int(round(config.horizon_s / dt)))
    dt_us = int(round(dt * 1e6))
    v, lat, s = v0, lat0, s0
    raw: list[tuple[int, float, float, float]] = []
    x, y = path.offset_point(s0, lat0)
    raw.append((t0, x, y, v0))
    for k in range(1, steps + 1):
        dv = max(-config.max_accel * dt, min(config.max_accel * dt, speed_target - v))
        v = max(0.0, v + dv)
        # lateral motion spends part of the speed budget so the waypoint
        # spacing never implies more than v; a stopped bed cannot crab
        dl_max = min(config.lateral_rate * dt, v * dt)
        dl = max(-dl_max, min(dl_max, lat_target - lat))
        lat += dl
        ds = math.sqrt(max(0.0, (v * dt) ** 2 - dl * dl))
        s = min(path.length, s + ds)
        x, y = path.offset_point(s, lat)
        raw.append((t0 + k * dt_us, x, y, v))
    waypoints: list[Waypoint] = []
    for i, (t, x, y, v) in enumerate(raw):
        if i + 1 < len(raw):
            nx, ny = raw[i + 1][1], raw[i + 1][2]
            heading = math.atan2(ny - y, nx - x) if (nx, ny) != (x, y) else path.heading_at(s0)
        else:
            heading = waypoints[-1][3] if waypoints else path.heading_at(s0)
        waypoints.append((t, x, y, heading, v))
    return tuple(waypoints)


def evaluate_candidate(waypoints: tuple[Waypoint, ...], lat_target: float,
                       speed_target: float, spaces: list[PersonalSpace],
                       boundary: list[tuple[float, float]] | None,
                       path: Polyline, config: PlannerConfig,
                       prev_lat_target: float | None = None) -> Candidate:
    """Hard checks plus cost terms for one rolled-out arc."""
    min_clearance: float | None = None
    social = 0.0
    for _, x, y, _, _ in waypoints:
        if boundary is not None and not point_in_polygon(x, y, boundary):
            return Candidate(lat_target, speed_target, waypoints, True, None, None, None)
        for sp in spaces:
            d = math.hypot(x - sp.x, y - sp.y)
            if min_clearance is None or d < min_clearance:
                min_clearance = d
            if d < config.r_hard:
                return Candidate(lat_target, speed_target, waypoints, True,
                                 None, None, min_clearance)
            c = personal_space_cost(sp, x, y)
            if c > social:
                social = c
    laterals = [path.project(x, y)[1] for _, x, y, _, _ in waypoints[1:]]
    denom = max(config.max_lateral_offset, 1e-9)
    path_dev = (sum(abs(l) for l in laterals) / len(laterals)) / denom if laterals else 0.0
    speed_dev = abs(speed_target - config.cruise) / config.max_speed
    commit = (config.w_commit
              if prev_lat_target is not None and lat_target != prev_lat_target
              else 0.0)
    cost = (config.w_social * social + config.w_path * path_dev
            + config.w_speed * speed_dev + commit)
    return Candidate(lat_target, speed_target, waypoints, False, cost, social, min_clearance)


class SocialPlanner:
    """Stateful planner: lattice search plus a yield latch."""

    def __init__(self, config: PlannerConfig, path: Polyline,
                 boundary: list[tuple[float, float]] | None):
        self.config = config
        self.path = path
        self.boundary = boundary
        self._yielding_to: int | None = None
        self._last_lat_target: float | None = None
        self._last_plan: PlanResult | None = None
        self._stopped_by_cost = False

    # ---------- person handling ----------

    def _persons(self, picture: GlobalPicture, bed_id: int) -> list[Track]:
        return [t for t in picture.tracks
                if t.track_id != bed_id and t.agent_class is AgentClass.PEDESTRIAN]

    def _spaces(self, persons: list[Track]) -> list[PersonalSpace]:
        c = self.config
        return [PersonalSpace.from_track(t, c.sigma_front, c.sigma_side, c.sigma_back)
                for t in persons]

    def find_bed(self, picture: GlobalPicture) -> Track | None:
        """Freshest bed hypothesis wins; a coasting leftover must not steer."""
        beds = [t for t in picture.tracks if t.agent_class is AgentClass.MEDICAL_BED]
        return min(beds, key=lambda t: (-t.last_hit, t.track_id)) if beds else None

    # ---------- yield logic ----------

    def yield_check(self, bed_xy: tuple[float, float], bed_heading: float,
                    bed_speed: float, persons: list[Track]) -> Track | None:
        """First person approaching fast from behind inside the rear cone."""
        c, s = math.cos(bed_heading), math.sin(bed_heading)
        for person in sorted(persons, key=lambda t: t.track_id):
            dx, dy = person.position[0] - bed_xy[0], person.position[1] - bed_xy[1]
            forward = c * dx + s * dy
            lateral = -s * dx + c * dy
            dist = math.hypot(dx, dy)
            if forward >= 0.0 or dist > self.config.yield_range or dist <= 0.0:
                continue
            if abs(math.atan2(lateral, -forward)) > math.pi / 4.0:
                continue
            if person.speed <= bed_speed + self.config.yield_speed_margin:
                continue
            vx, vy = person.velocity
            rvx, rvy = vx - bed_speed * c, vy - bed_speed * s
            closing = dx * rvx + dy * rvy  # sign of d/dt of the squared gap
            if closing >= 0.0:
                continue
            return person
        return None

    def _passed(self, person: Track, bed_station: float) -> bool:
        s_p, _ = self.path.project(*person.position)
        return s_p > bed_station + 0.2

    # ---------- main step ----------

    def step(self, picture: GlobalPicture, t_us: int) -> PlanResult | None:
        """Plan once against a fresh picture. None when the bed is not tracked."""
        bed = self.find_bed(picture)
        if bed is None:
            return None
        cfg = self.config
        bx, by = bed.position
        s0, lat0 = self.path.project(bx, by)
        bed_heading = self.path.heading_at(s0)
        # speed continuity comes from our own previous command, not from the
        # estimator: differentiated track velocity is noisy enough to restart
        # the ramp from zero every replan. The estimator still supplies the
        # pose and the people.
        if self._last_plan is not None:
            v0 = _speed_at(self._last_plan.waypoints, t_us)
        else:
            vx, vy = bed.velocity
            v0 = vx * math.cos(bed_heading) + vy * math.sin(bed_heading)
        v0 = min(max(v0, 0.0), cfg.max_speed)
        persons = self._persons(picture, bed.track_id)
        by_id = {t.track_id: t for t in persons}

        if self._yielding_to is not None:
            active = by_id.get(self._yielding_to)
            if active is None or self._passed(active, s0):
                self._yielding_to = None

        if self._yielding_to is None:
            trigger = self.yield_check((bx, by), bed_heading, v0, persons)
            if trigger is not None:
                self._yielding_to = trigger.track_id

        spaces = self._spaces(persons)
        if self._yielding_to is not None:
            person = by_id[self._yielding_to]
            _, person_lat = self.path.project(*person.position)
            side = -1.0 if person_lat >= lat0 else 1.0
            offset = side * cfg.max_lateral_offset
            wps = rollout(self.path, s0, lat0, v0, offset, 0.0, cfg, t_us)
            self._last_lat_target = offset
            return self._commit(PlanResult(
                kind="yield", time=t_us, waypoints=wps,
                chosen_offset=offset, chosen_speed=0.0,
                min_clearance=self._clearance(wps, persons),
                yield_person=self._yielding_to))

        candidates: list[Candidate] = []
        for lat_t in cfg.lateral_targets():
            for v_t in cfg.speed_targets():
                wps = rollout(self.path, s0, lat0, v0, lat_t, v_t, cfg, t_us)
                candidates.append(evaluate_candidate(
                    wps, lat_t, v_t, spaces, self.boundary, self.path, cfg,
                    self._last_lat_target))
        scored = [c for c in candidates if not c.rejected]
        costs = tuple(c.cost for c in scored)  # type: ignore[misc]
        rejected = len(candidates) - len(scored)
        threshold = (cfg.resume_cost_threshold if self._stopped_by_cost
                     else cfg.stop_cost_threshold)
        if not scored or min(costs) > threshold:
            self._stopped_by_cost = True
            wps = rollout(self.path, s0, lat0, v0, lat0, 0.0, cfg, t_us)
            return self._commit(PlanResult(
                kind="stop", time=t_us, waypoints=wps,
                chosen_offset=lat0, chosen_speed=0.0,
                candidate_costs=costs, rejected_count=rejected,
                min_clearance=self._clearance(wps, persons)))
        self._stopped_by_cost = False
        best = min(scored, key=lambda c: c.cost)  # first minimum wins ties
        self._last_lat_target = best.lateral_target
        return self._commit(PlanResult(
            kind="plan", time=t_us, waypoints=best.waypoints,
            chosen_offset=best.lateral_target,
            chosen_speed=best.speed_target,
            cost=best.cost, candidate_costs=costs,
            rejected_count=rejected,
            min_clearance=best.min_clearance))

    def _commit(self, result: PlanResult) -> PlanResult:
        self._last_plan = result
        return result

    @staticmethod
    def _clearance(waypoints: tuple[Waypoint, ...], persons: list[Track]) -> float | None:
        if not persons:
            return None
        return min(math.hypot(x - p.position[0], y - p.position[1])
                   for _, x, y, _, _ in waypoints for p in persons)
