"""Run evaluation, computed exclusively from trace records.

The trace is the contract: metrics never peek at live simulator state, so
replaying a trace file reproduces the original numbers bit for bit. Track
accuracy is judged against ground truth at each track's own update epoch,
which keeps transport latency out of the localization error.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Any, Iterable, TextIO

from .core import AgentClass, Pose2
from .scenario import load_scenario
from .sensing import visible
from .world import Agent, Behavior, WorldState

MATCH_GATE_M = 1.5
_DETECTABLE = ("vehicle", "pedestrian", "medical_bed")


class TraceError(ValueError):
    pass


def read_trace(source: str | Path | Iterable[str]) -> tuple[dict, list[dict]]:
    """Parse an NDJSON trace into (header, tick_records)."""
    if isinstance(source, (str, Path)):
        with open(source) as fp:
            lines = fp.read().splitlines()
    else:
        lines = [l for l in source]
    records = []
    header = None
    for i, line in enumerate(lines):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TraceError(f"line {i + 1}: not valid JSON: {exc.msg}") from exc
        if not isinstance(rec, dict) or "kind" not in rec:
            raise TraceError(f"line {i + 1}: record has no kind")
        if rec["kind"] == "header":
            if header is not None:
                raise TraceError(f"line {i + 1}: duplicate header")
            header = rec
        elif rec["kind"] == "tick":
            records.append(rec)
        else:
            raise TraceError(f"line {i + 1}: unknown record kind {rec['kind']!r}")
    if header is None:
        raise TraceError("trace has no header record")
    if header.get("schema_version") != 1:
        raise TraceError(f"unsupported schema_version {header.get('schema_version')!r}")
    return header, records


def _pair_tracks(record: dict, truth_at: dict[int, dict[int, dict]]):
    """One-to-one track-to-truth pairing at each track's update epoch.

    Returns (matches, duplicates) where matches is {agent_id: (track_id,
    error_m, status)} and duplicates lists leftover track ids that still sit
    within the gate of an already-claimed agent.
    """
    tick_truth = {a["agent_id"]: a for a in record["truth"]
                  if a["class"] in _DETECTABLE}
    candidates = []
    for tr in record["picture"]["tracks"]:
        epoch_truth = truth_at.get(tr["last_update_us"])
        agents = ({a["agent_id"]: a for a in epoch_truth.values()}
                  if isinstance(epoch_truth, dict) else tick_truth)
        for aid, a in agents.items():
            if a["class"] not in _DETECTABLE:
                continue
            d = math.hypot(tr["x"] - a["x"], tr["y"] - a["y"])
            if d <= MATCH_GATE_M:
                candidates.append((d, tr["track_id"], aid, tr["status"]))
    candidates.sort()
    matches: dict[int, tuple[int, float, str]] = {}
    used_tracks: set[int] = set()
    duplicates: list[int] = []
    for d, track_id, aid, status in candidates:
        if track_id in used_tracks:
            continue
        if aid in matches:
            continue
        matches[aid] = (track_id, d, status)
        used_tracks.add(track_id)
    for d, track_id, aid, _ in candidates:
        if track_id not in used_tracks and aid in matches:
            duplicates.append(track_id)
            used_tracks.add(track_id)
    return matches, duplicates


def _truth_index(records: list[dict]) -> dict[int, dict[int, dict]]:
    return {rec["t_us"]: {a["agent_id"]: a for a in rec["truth"]} for rec in records}


def _percentile_nearest_rank(sorted_values: list[int], pct: float) -> int | None:
    if not sorted_values:
        return None
    rank = max(1, math.ceil(pct / 100.0 * len(sorted_values)))
    return sorted_values[rank - 1]


def _world_from_truth(record: dict) -> WorldState:
    agents = tuple(
        Agent(agent_id=a["agent_id"],
              agent_class=AgentClass.from_name(a["class"]),
              pose=Pose2(a["x"], a["y"], a["heading"]),
              speed=a["speed"], radius=a["radius"],
              behavior=Behavior.STATIONARY)
        for a in record["truth"])
    return WorldState(time=record["t_us"], agents=agents)


def compute_metrics(header: dict, records: list[dict]) -> dict[str, Any]:
    """All run metrics from one parsed trace."""
    if not records:
        raise TraceError("no records")
    spec = load_scenario(header["scenario"])
    truth_at = _truth_index(records)

    sq_err_sum = 0.0
    sq_err_count = 0
    latencies: list[int] = []
    messages_lost = 0
    stale_discarded = 0
    duplicate_ids: set[int] = set()
    match_history: dict[int, list[int]] = {}
    continuity_num = 0
    continuity_den = 0
    min_clearance: float | None = None
    first_warning_us: int | None = None
    min_gap: tuple[float, int] | None = None  # (distance, t_us)

    for rec in records:
        matches, duplicates = _pair_tracks(rec, truth_at)
        duplicate_ids.update(duplicates)
        for aid, (track_id, err, status) in matches.items():
            if status == "confirmed":
                sq_err_sum += err * err
                sq_err_count += 1
            match_history.setdefault(aid, []).append(track_id)

        world = _world_from_truth(rec)
        for agent in world.agents:
            if agent.agent_class.name.lower() not in _DETECTABLE:
                continue
            if any(visible(cfg, world, agent) for cfg in spec.nodes):
                continuity_den += 1
                if agent.agent_id in matches:
                    continuity_num += 1

        for entry in rec["sent"]:
            if entry["dropped"]:
                messages_lost += 1
        for entry in rec["delivered"]:
            latencies.append(entry["t_us"] - entry["capture_us"])
            if entry.get("stale"):
                stale_discarded += 1
        for event in rec["events"]:
            if event["kind"] == "warning_sent":
                if event.get("dropped"):
                    messages_lost += 1
                if first_warning_us is None:
                    first_warning_us = event["t_us"]

        beds = [a for a in rec["truth"] if a["class"] == "medical_bed"]
        persons = [a for a in rec["truth"] if a["class"] == "pedestrian"]
        vehicles = [a for a in rec["truth"] if a["class"] == "vehicle"]
        for bed in beds:
            for p in persons:
                d = math.hypot(bed["x"] - p["x"], bed["y"] - p["y"])
                if min_clearance is None or d < min_clearance:
                    min_clearance = d
        for v in vehicles:
            for p in persons:
                d = math.hypot(v["x"] - p["x"], v["y"] - p["y"])
                if min_gap is None or d < min_gap[0]:
                    min_gap = (d, rec["t_us"])

    id_switches = 0
    for ids in match_history.values():
        id_switches += sum(1 for a, b in zip(ids, ids[1:]) if a != b)

    latencies.sort()
    warning_lead = None
    if first_warning_us is not None and min_gap is not None:
        warning_lead = (min_gap[1] - first_warning_us) / 1e6

    return {
        "localization_rmse_m": (math.sqrt(sq_err_sum / sq_err_count)
                                if sq_err_count else None),
        "latency_p50_us": _percentile_nearest_rank(latencies, 50.0),
        "latency_p99_us": _percentile_nearest_rank(latencies, 99.0),
        "id_switches": id_switches,
        "duplicate_tracks": len(duplicate_ids),
        "track_continuity": (continuity_num / continuity_den
                             if continuity_den else 1.0),
        "min_person_clearance_m": min_clearance,
        "warning_lead_time_s": warning_lead,
        "messages_lost": messages_lost,
        "stale_discarded": stale_discarded,
        "ticks": len(records),
        "deliveries": len(latencies),
    }


def metrics_from_trace(source: str | Path | Iterable[str]) -> dict[str, Any]:
    header, records = read_trace(source)
    return compute_metrics(header, records)


def write_tick_csv(header: dict, records: list[dict], fp: TextIO) -> int:
    """Plot-ready per-tick CSV: bed pose plus the active plan. One row per tick."""
    spec = load_scenario(header["scenario"])
    bed_id = spec.planner.bed_agent_id if spec.planner is not None else None
    writer = csv.writer(fp, lineterminator="\n")
    writer.writerow(["t_s", "bed_x", "bed_y", "bed_heading", "bed_speed",
                     "plan", "chosen_offset", "chosen_speed", "min_clearance",
                     "yield_person"])
    rows = 0
    last_plan: dict | None = None
    for rec in records:
        for event in rec["events"]:
            if event["kind"] == "plan":
                last_plan = event
        bed = next((a for a in rec["truth"] if a["agent_id"] == bed_id), None)
        row = [rec["t_us"] / 1e6]
        row += ([bed["x"], bed["y"], bed["heading"], bed["speed"]]
                if bed else ["", "", "", ""])
        if last_plan is not None:
            row += [last_plan["plan"], last_plan["chosen_offset"],
                    last_plan["chosen_speed"], last_plan["min_clearance"],
                    last_plan.get("yield_person", "")]
        else:
            row += ["", "", "", "", ""]
        writer.writerow(["" if v is None else v for v in row])
        rows += 1
    return rows


def replay(source: str | Path | Iterable[str],
           csv_out: TextIO | None = None) -> dict[str, Any]:
    """Recompute metrics from a trace; byte-identical input gives equal output."""
    header, records = read_trace(source)
    result = compute_metrics(header, records)
    if csv_out is not None:
        write_tick_csv(header, records, csv_out)
    return result


def metrics_and_csv(source: str | Path | Iterable[str]) -> tuple[dict[str, Any], str]:
    header, records = read_trace(source)
    result = compute_metrics(header, records)
    buf = io.StringIO()
    write_tick_csv(header, records, buf)
    return result, buf.getvalue()
