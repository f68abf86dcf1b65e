"""HTTP facade: request/response contracts over the in-process app."""

import base64
import io

import pytest
from fastapi.testclient import TestClient

import camsim
from camsim import wire
from camsim.service import app

client = TestClient(app)


def scenario_doc(**over):
    doc = {
        "name": "svc",
        "duration_s": 1.0,
        "tick_dt_s": 0.05,
        "rng_seed": 3,
        "nodes": [{"node_id": 1, "x": 0.0, "y": 4.0, "heading": -1.5707963,
                   "fov": 3.1415927, "max_range": 12.0,
                   "detection_period_s": 0.1}],
        "agents": [{"agent_id": 1, "class": "vehicle",
                    "behavior": "follow_path", "speed": 2.0,
                    "path": [[0.0, 0.0], [10.0, 0.0]]}],
    }
    doc.update(over)
    return doc


def test_health():
    body = client.get("/health").json()
    assert body == {"status": "ok", "version": camsim.__version__}


class TestValidate:
    def test_valid_scenario_gets_a_summary(self):
        res = client.post("/validate", json={"scenario": scenario_doc()})
        assert res.status_code == 200
        body = res.json()
        assert body["valid"] is True
        assert body["problems"] == []
        assert body["summary"]["name"] == "svc"
        assert body["summary"]["nodes"] == 1
        assert body["summary"]["agents"] == 1
        assert body["summary"]["planner"] is False

    def test_invalid_scenario_reports_problems_with_200(self):
        doc = scenario_doc()
        del doc["duration_s"]
        body = client.post("/validate", json={"scenario": doc}).json()
        assert body["valid"] is False
        assert any("duration_s" in p for p in body["problems"])
        assert body["summary"] is None

    def test_density_notice_passes_through(self):
        doc = scenario_doc(nodes=[
            {"node_id": 1, "x": 0.0, "y": 0.0},
            {"node_id": 2, "x": 1.0, "y": 1.0},
        ])
        body = client.post("/validate", json={"scenario": doc}).json()
        assert body["valid"] is True
        assert any("density" in n for n in body["notices"])


class TestRun:
    def test_run_returns_trace_and_metrics(self):
        res = client.post("/run", json={"scenario": scenario_doc()})
        assert res.status_code == 200
        body = res.json()
        assert body["name"] == "svc"
        assert body["seed"] == 3
        assert body["ticks"] == 21
        assert body["metrics"]["ticks"] == 21
        first = body["trace_ndjson"].splitlines()[0]
        assert '"kind":"header"' in first
        assert body["capture_b64"] is None

    def test_seed_override_and_determinism(self):
        req = {"scenario": scenario_doc(), "seed": 42}
        a = client.post("/run", json=req).json()
        b = client.post("/run", json=req).json()
        assert a["seed"] == 42
        assert a["trace_ndjson"] == b["trace_ndjson"]
        assert a["metrics"] == b["metrics"]

    def test_capture_round_trips_as_base64(self):
        res = client.post("/run", json={"scenario": scenario_doc(),
                                        "capture": True}).json()
        blob = base64.b64decode(res["capture_b64"])
        frames = list(wire.read_capture(io.BytesIO(blob)))
        assert frames
        assert all(isinstance(wire.decode_frame(f), wire.PerceptionMessage)
                   for f in frames)

    def test_invalid_scenario_is_a_400(self):
        doc = scenario_doc()
        doc["agents"][0]["class"] = "unicorn"
        res = client.post("/run", json={"scenario": doc})
        assert res.status_code == 400
        assert any("agents[0].class" in p
                   for p in res.json()["detail"]["problems"])


class TestMetricsAndReplay:
    def trace_text(self):
        return client.post("/run", json={"scenario": scenario_doc()}).json()

    def test_metrics_reproduces_run_metrics(self):
        body = self.trace_text()
        res = client.post("/metrics", json={"trace_ndjson": body["trace_ndjson"]})
        assert res.status_code == 200
        assert res.json()["metrics"] == body["metrics"]

    def test_replay_with_csv(self):
        body = self.trace_text()
        res = client.post("/replay", json={"trace_ndjson": body["trace_ndjson"],
                                           "csv": True}).json()
        assert res["metrics"] == body["metrics"]
        lines = res["csv_text"].strip().splitlines()
        assert len(lines) - 1 == body["ticks"]

    def test_replay_without_csv(self):
        body = self.trace_text()
        res = client.post("/replay", json={"trace_ndjson": body["trace_ndjson"]}).json()
        assert res["csv_text"] is None

    @pytest.mark.parametrize("path", ["/metrics", "/replay"])
    def test_corrupt_trace_is_a_400(self, path):
        res = client.post(path, json={"trace_ndjson": "{oops\n"})
        assert res.status_code == 400
        assert any("line 1" in p for p in res.json()["detail"]["problems"])

    @pytest.mark.parametrize("path", ["/metrics", "/replay"])
    def test_empty_trace_is_a_400(self, path):
        res = client.post(path, json={"trace_ndjson": ""})
        assert res.status_code == 400
