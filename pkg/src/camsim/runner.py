"""Closed-loop simulation harness.

A single event heap drives the run: world ticks, per-node sense events, and
frame deliveries, ordered by (time, priority, insertion). Deliveries happen
at exact microsecond times between ticks, so transport latency survives into
the trace unquantized. Every tick appends one NDJSON record carrying ground
truth, emissions, deliveries, the fused picture and any events since the
previous tick; the first line is a header embedding the scenario document
and effective seed, which is everything replay needs.

The planner loop closes here: each fresh picture may produce a trajectory,
which is grafted onto the bed agent as a timed script rebased to the bed's
actual pose (ideal low-level tracking).
"""

from __future__ import annotations

import heapq
import json
import time as _time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, BinaryIO

import numpy as np

from . import metrics as metrics_mod
from . import wire
from .conflict import HazardMonitor
from .network import DeliveryQueue, send
from .planning import PlanResult, SocialPlanner
from .scenario import ScenarioSpec
from .sensing import SensorNode
from .tracking import FusionEngine
from .world import Behavior, step_world

# event priorities at equal times: the world ticks, then nodes sense it,
# then frames arrive, then the tick record is flushed
_P_TICK, _P_SENSE, _P_DELIVER, _P_FLUSH = 0, 1, 2, 3

# seed-stream domains, so every noise consumer has its own substream
_DOM_SENSE, _DOM_UPLINK, _DOM_WARN = 1, 2, 3


@dataclass
class RunResult:
    trace_path: Path
    metrics: dict[str, Any]
    ticks: int


def _rng(seed: int, domain: int, ident: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, domain, ident]))


def _round6(x: float) -> float:
    # trace floats are rounded to keep lines compact; 1e-9 is far below
    # every tolerance that matters downstream
    return round(float(x), 9)


class _TraceWriter:
    def __init__(self, fp):
        self.fp = fp

    def write(self, record: dict) -> None:
        self.fp.write(json.dumps(record, separators=(",", ":")))
        self.fp.write("\n")


def run(spec: ScenarioSpec, seed: int | None = None, *,
        trace_path: str | Path, capture_path: str | Path | None = None,
        realtime: bool = False) -> RunResult:
    """Execute one scenario and write its trace. Fully deterministic per seed."""
    effective_seed = spec.rng_seed if seed is None else seed
    trace_path = Path(trace_path)
    trace_path.parent.mkdir(parents=True, exist_ok=True)

    nodes = {cfg.node_id: SensorNode(cfg, _rng(effective_seed, _DOM_SENSE, cfg.node_id))
             for cfg in spec.nodes}
    uplink_rng = {cfg.node_id: _rng(effective_seed, _DOM_UPLINK, cfg.node_id)
                  for cfg in spec.nodes}
    warn_rng = {sub.subscriber_id: _rng(effective_seed, _DOM_WARN, sub.subscriber_id)
                for sub in spec.subscribers}
    queue = DeliveryQueue()
    fusion = FusionEngine(spec.fusion, list(spec.nodes))
    monitor = HazardMonitor(spec.hazard, spec.subscribers) if spec.hazard else None
    planner = None
    if spec.planner is not None:
        assert spec.reference_path is not None
        planner = SocialPlanner(spec.planner, spec.reference_path, spec.boundary)

    world = spec.initial_world()
    heap: list[tuple[int, int, int, str, int]] = []
    serial = 0

    def push(t: int, priority: int, kind: str, payload: int = 0) -> None:
        nonlocal serial
        heapq.heappush(heap, (t, priority, serial, kind, payload))
        serial += 1

    for t in range(spec.tick_us, spec.duration_us + 1, spec.tick_us):
        push(t, _P_TICK, "tick")
    for t in range(0, spec.duration_us + 1, spec.tick_us):
        push(t, _P_FLUSH, "flush")
    for cfg in spec.nodes:
        for t in range(0, spec.duration_us + 1, cfg.detection_period_us):
            push(t, _P_SENSE, "sense", cfg.node_id)

    pending: dict[str, list] = {"detections": [], "sent": [], "delivered": [], "events": []}
    last_plan_time = -1
    ticks_written = 0
    wall_start = _time.monotonic()

    capture_fp: BinaryIO | None = None
    if capture_path is not None:
        capture_path = Path(capture_path)
        capture_path.parent.mkdir(parents=True, exist_ok=True)
        capture_fp = open(capture_path, "wb")

    def apply_plan(result: PlanResult) -> None:
        nonlocal world
        bed = world.agent(spec.planner.bed_agent_id)
        wp0 = result.waypoints[0]
        shift_x, shift_y = bed.pose.x - wp0[1], bed.pose.y - wp0[2]
        script = tuple((t, x + shift_x, y + shift_y)
                       for t, x, y, _, _ in result.waypoints)
        new_bed = replace(bed, behavior=Behavior.SCRIPTED, script=script, path=None)
        world = replace(world, agents=tuple(
            new_bed if a.agent_id == bed.agent_id else a for a in world.agents))

    def on_perception(msg: wire.PerceptionMessage, sent_us: int, now: int) -> None:
        nonlocal last_plan_time
        result = fusion.ingest(msg, now)
        pending["delivered"].append({
            "node_id": msg.node_id, "seq": msg.seq,
            "capture_us": msg.capture_time, "sent_us": sent_us, "t_us": now,
            "records": len(msg.records), "stale": result.stale,
        })
        if result.stale:
            return
        picture = fusion.picture()
        if monitor is not None:
            for event in monitor.scan(picture, now):
                pending["events"].append({
                    "kind": "conflict", "event_id": event.event_id,
                    "track_a": event.track_a, "track_b": event.track_b,
                    "ttc_s": _round6(event.time_to_conflict),
                    "min_distance_m": _round6(event.min_distance),
                    "t_us": now,
                })
                frame = wire.encode_warning(wire.WarningMessage(
                    event_id=event.event_id, track_a=event.track_a,
                    track_b=event.track_b,
                    time_to_conflict=event.time_to_conflict,
                    min_distance=event.min_distance, issued_at=now))
                for sub in spec.subscribers:
                    tr = send(frame, spec.links[sub.link], now,
                              warn_rng[sub.subscriber_id],
                              sender=("warn", sub.subscriber_id))
                    eff = queue.offer(tr)
                    pending["events"].append({
                        "kind": "warning_sent", "event_id": event.event_id,
                        "subscriber_id": sub.subscriber_id, "t_us": now,
                        "dropped": tr.dropped,
                    })
                    if eff is not None:
                        push(eff, _P_DELIVER, "deliver")
        if planner is not None and picture.time > last_plan_time:
            result_plan = planner.step(picture, now)
            if result_plan is not None:
                last_plan_time = picture.time
                apply_plan(result_plan)
                entry = {
                    "kind": "plan", "plan": result_plan.kind, "t_us": now,
                    "chosen_offset": _maybe_round(result_plan.chosen_offset),
                    "chosen_speed": _maybe_round(result_plan.chosen_speed),
                    "cost": _maybe_round(result_plan.cost),
                    "candidate_costs": [_round6(c) for c in result_plan.candidate_costs],
                    "rejected": result_plan.rejected_count,
                    "min_clearance": _maybe_round(result_plan.min_clearance),
                }
                if result_plan.yield_person is not None:
                    entry["yield_person"] = result_plan.yield_person
                pending["events"].append(entry)

    def on_warning(msg: wire.WarningMessage, item_sender, now: int) -> None:
        sub_id = item_sender[1] if isinstance(item_sender, tuple) else None
        pending["events"].append({
            "kind": "warning_delivered", "event_id": msg.event_id,
            "subscriber_id": sub_id, "issued_us": msg.issued_at, "t_us": now,
            "latency_us": now - msg.issued_at,
        })

    with open(trace_path, "w", newline="\n") as fp:
        writer = _TraceWriter(fp)
        writer.write({"kind": "header", "schema_version": 1, "name": spec.name,
                      "seed": effective_seed, "scenario": spec.raw})
        try:
            while heap:
                t_now, priority, _, kind, payload = heapq.heappop(heap)
                if realtime:
                    lag = t_now / 1e6 - (_time.monotonic() - wall_start)
                    if lag > 0:
                        _time.sleep(lag)
                if kind == "tick":
                    world = step_world(world, spec.tick_us)
                elif kind == "sense":
                    node = nodes[payload]
                    msg, detections = node.emit(world)
                    frame = wire.encode(msg)
                    if capture_fp is not None:
                        wire.write_capture_frame(capture_fp, frame)
                    tr = send(frame, spec.links[node.config.link], t_now,
                              uplink_rng[payload], sender=payload)
                    eff = queue.offer(tr)
                    pending["sent"].append({
                        "node_id": payload, "seq": msg.seq, "capture_us": t_now,
                        "t_us": t_now, "bytes": len(frame),
                        "records": len(msg.records), "dropped": tr.dropped,
                    })
                    for d in detections:
                        pending["detections"].append({
                            "node_id": d.node_id, "index": d.local_object_index,
                            "class": d.agent_class.name.lower(),
                            "x": _round6(d.x), "y": _round6(d.y),
                            "sigma": _round6(d.sigma), "capture_us": d.capture_time,
                        })
                    if eff is not None:
                        push(eff, _P_DELIVER, "deliver")
                elif kind == "deliver":
                    for eff, item in queue.poll(t_now):
                        decoded = wire.decode_frame(item.payload)
                        if isinstance(decoded, wire.PerceptionMessage):
                            on_perception(decoded, item.send_time, eff)
                        else:
                            on_warning(decoded, item.sender, eff)
                else:  # flush
                    writer.write(_tick_record(t_now, world, fusion, pending))
                    ticks_written += 1
                    for v in pending.values():
                        v.clear()
        finally:
            if capture_fp is not None:
                capture_fp.close()

    header, records = metrics_mod.read_trace(trace_path)
    computed = metrics_mod.compute_metrics(header, records)
    return RunResult(trace_path=trace_path, metrics=computed, ticks=ticks_written)


def _maybe_round(x: float | None) -> float | None:
    return None if x is None else _round6(x)


def _tick_record(t_now: int, world, fusion: FusionEngine, pending: dict) -> dict:
    picture = fusion.picture()
    return {
        "kind": "tick",
        "t_us": t_now,
        "truth": [{
            "agent_id": a.agent_id, "class": a.agent_class.name.lower(),
            "x": _round6(a.pose.x), "y": _round6(a.pose.y),
            "heading": _round6(a.pose.heading), "speed": _round6(a.speed),
            "radius": _round6(a.radius),
        } for a in world.agents],
        "detections": pending["detections"][:],
        "sent": pending["sent"][:],
        "delivered": pending["delivered"][:],
        "picture": {
            "time_us": picture.time,
            "tracks": [{
                "track_id": tr.track_id, "status": tr.status.value,
                "class": tr.agent_class.name.lower(),
                "x": _round6(tr.state[0]), "y": _round6(tr.state[1]),
                "vx": _round6(tr.state[2]), "vy": _round6(tr.state[3]),
                "last_update_us": tr.last_update,
                "hits": tr.hit_count, "misses": tr.miss_count,
                "nodes": sorted(tr.contributing_nodes),
            } for tr in picture.tracks],
        },
        "events": pending["events"][:],
    }
