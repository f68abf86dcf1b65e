"""HTTP facade over the simulator core.

The service is stateless: every request carries its scenario document or
trace text, and responses return the full trace so clients own persistence.
Determinism flows through unchanged because NDJSON text survives JSON
transport byte for byte.
"""

from __future__ import annotations

import base64
import tempfile
from pathlib import Path
from typing import Any

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from . import metrics as metrics_mod
from . import runner
from .scenario import ScenarioSpec, validate_scenario


class ValidateRequest(BaseModel):
    scenario: dict[str, Any]


class ValidateResponse(BaseModel):
    valid: bool
    problems: list[str] = Field(default_factory=list)
    notices: list[str] = Field(default_factory=list)
    summary: dict[str, Any] | None = None


class RunRequest(BaseModel):
    scenario: dict[str, Any]
    seed: int | None = None
    realtime: bool = False
    capture: bool = False


class RunResponse(BaseModel):
    name: str
    seed: int
    ticks: int
    metrics: dict[str, Any]
    trace_ndjson: str
    capture_b64: str | None = None


class MetricsRequest(BaseModel):
    trace_ndjson: str


class MetricsResponse(BaseModel):
    metrics: dict[str, Any]


class ReplayRequest(BaseModel):
    trace_ndjson: str
    csv: bool = False


class ReplayResponse(BaseModel):
    metrics: dict[str, Any]
    csv_text: str | None = None


app = FastAPI(title="camsim", version=__version__,
              description="Cooperative perception simulator service")


def _summary(spec: ScenarioSpec) -> dict[str, Any]:
    return {
        "name": spec.name,
        "duration_s": spec.duration_us / 1e6,
        "tick_dt_s": spec.tick_us / 1e6,
        "nodes": len(spec.nodes),
        "agents": len(spec.agents),
        "links": sorted(spec.links),
        "hazard": spec.hazard is not None,
        "planner": spec.planner is not None,
    }


@app.get("/health")
def health() -> dict[str, str]:
    return {"status": "ok", "version": __version__}


@app.post("/validate", response_model=ValidateResponse)
def validate(req: ValidateRequest) -> ValidateResponse:
    spec, problems, notices = validate_scenario(req.scenario)
    if spec is None:
        return ValidateResponse(valid=False, problems=problems, notices=notices)
    return ValidateResponse(valid=True, notices=notices, summary=_summary(spec))


@app.post("/run", response_model=RunResponse)
def run_scenario(req: RunRequest) -> RunResponse:
    spec, problems, _ = validate_scenario(req.scenario)
    if spec is None:
        raise HTTPException(status_code=400, detail={"problems": problems})
    with tempfile.TemporaryDirectory(prefix="camsim-") as tmp:
        trace_path = Path(tmp) / "trace.ndjson"
        capture_path = Path(tmp) / "wire.camp" if req.capture else None
        result = runner.run(spec, req.seed, trace_path=trace_path,
                            capture_path=capture_path, realtime=req.realtime)
        trace_text = trace_path.read_text()
        capture_b64 = None
        if capture_path is not None:
            capture_b64 = base64.b64encode(capture_path.read_bytes()).decode("ascii")
    return RunResponse(
        name=spec.name,
        seed=req.seed if req.seed is not None else spec.rng_seed,
        ticks=result.ticks,
        metrics=result.metrics,
        trace_ndjson=trace_text,
        capture_b64=capture_b64,
    )


@app.post("/metrics", response_model=MetricsResponse)
def trace_metrics(req: MetricsRequest) -> MetricsResponse:
    try:
        computed = metrics_mod.metrics_from_trace(req.trace_ndjson.splitlines())
    except (metrics_mod.TraceError, ValueError) as exc:
        raise HTTPException(status_code=400, detail={"problems": [str(exc)]}) from exc
    return MetricsResponse(metrics=computed)


@app.post("/replay", response_model=ReplayResponse)
def replay_trace(req: ReplayRequest) -> ReplayResponse:
    try:
        if req.csv:
            computed, csv_text = metrics_mod.metrics_and_csv(req.trace_ndjson.splitlines())
        else:
            computed = metrics_mod.metrics_from_trace(req.trace_ndjson.splitlines())
            csv_text = None
    except (metrics_mod.TraceError, ValueError) as exc:
        raise HTTPException(status_code=400, detail={"problems": [str(exc)]}) from exc
    return ReplayResponse(metrics=computed, csv_text=csv_text)
