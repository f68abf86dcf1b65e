"""Command-line client.

Every verb except `serve` is a thin client over the HTTP service: by default
it talks to an in-process instance, with --server it targets a remote one.
Exit codes: 0 success, 1 invalid scenario or trace, 2 I/O or server trouble.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_IO = 2


class ClientError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _make_client(server: str | None):
    if server:
        import httpx
        return httpx.Client(base_url=server, timeout=600.0)
    from fastapi.testclient import TestClient

    from .service import app
    return TestClient(app)


def _post(client, path: str, payload: dict) -> dict:
    try:
        response = client.post(path, json=payload)
    except Exception as exc:  # connection refused, DNS, timeouts
        raise ClientError(f"cannot reach service: {exc}", EXIT_IO) from exc
    if response.status_code == 400:
        detail = response.json().get("detail", {})
        problems = detail.get("problems", [str(detail)])
        raise ClientError("\n".join(f"invalid: {p}" for p in problems), EXIT_INVALID)
    if response.status_code != 200:
        raise ClientError(f"service error {response.status_code}: {response.text}", EXIT_IO)
    return response.json()


def _read_json(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ClientError(f"cannot read {path}: {exc}", EXIT_IO) from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ClientError(
            f"invalid: {path} is not valid JSON (line {exc.lineno}: {exc.msg})",
            EXIT_INVALID) from exc
    if not isinstance(doc, dict):
        raise ClientError(f"invalid: {path} must contain a JSON object", EXIT_INVALID)
    return doc


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise ClientError(f"cannot read {path}: {exc}", EXIT_IO) from exc


def _write_text(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, newline="\n")
    except OSError as exc:
        raise ClientError(f"cannot write {path}: {exc}", EXIT_IO) from exc


def _cmd_run(args) -> int:
    scenario = _read_json(args.scenario)
    client = _make_client(args.server)
    payload: dict[str, Any] = {
        "scenario": scenario,
        "realtime": bool(args.realtime),
        "capture": bool(args.capture),
    }
    if args.seed is not None:
        payload["seed"] = args.seed
    body = _post(client, "/run", payload)
    out = Path(args.out)
    _write_text(out / "trace.ndjson", body["trace_ndjson"])
    _write_text(out / "metrics.json", json.dumps(body["metrics"], indent=2) + "\n")
    if body.get("capture_b64"):
        import base64
        (out / "wire.camp").write_bytes(base64.b64decode(body["capture_b64"]))
    print(f"{body['name']}: seed {body['seed']}, {body['ticks']} ticks")
    print(f"trace:   {out / 'trace.ndjson'}")
    print(f"metrics: {out / 'metrics.json'}")
    if body.get("capture_b64"):
        print(f"capture: {out / 'wire.camp'}")
    for key, value in body["metrics"].items():
        print(f"  {key}: {value}")
    return EXIT_OK


def _cmd_metrics(args) -> int:
    trace = _read_text(args.trace)
    client = _make_client(args.server)
    body = _post(client, "/metrics", {"trace_ndjson": trace})
    print(json.dumps(body["metrics"], indent=2))
    return EXIT_OK


def _cmd_replay(args) -> int:
    trace = _read_text(args.trace)
    client = _make_client(args.server)
    body = _post(client, "/replay", {"trace_ndjson": trace, "csv": args.csv is not None})
    print(json.dumps(body["metrics"], indent=2))
    if args.csv is not None:
        _write_text(Path(args.csv), body["csv_text"] or "")
        print(f"csv: {args.csv}", file=sys.stderr)
    return EXIT_OK


def _cmd_validate(args) -> int:
    scenario = _read_json(args.scenario)
    client = _make_client(args.server)
    body = _post(client, "/validate", {"scenario": scenario})
    for note in body.get("notices", []):
        print(f"notice: {note}", file=sys.stderr)
    if not body["valid"]:
        for problem in body["problems"]:
            print(f"invalid: {problem}")
        return EXIT_INVALID
    summary = body["summary"]
    print(f"ok: {summary['name']} ({summary['nodes']} nodes, "
          f"{summary['agents']} agents, {summary['duration_s']} s)")
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import app
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="camsim",
        description="cooperative perception simulator: run scenarios, "
                    "inspect traces, replay metrics")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="simulate a scenario and write its trace")
    run_p.add_argument("--scenario", required=True, help="scenario JSON file")
    run_p.add_argument("--seed", type=int, default=None,
                       help="override the scenario rng_seed")
    run_p.add_argument("--out", default="out", help="output directory")
    mode = run_p.add_mutually_exclusive_group()
    mode.add_argument("--fast", dest="realtime", action="store_false",
                      help="run as fast as possible (default)")
    mode.add_argument("--realtime", dest="realtime", action="store_true",
                      help="pace the run against the wall clock")
    run_p.set_defaults(realtime=False)
    run_p.add_argument("--capture", action="store_true",
                       help="also save transmitted frames as wire.camp")
    run_p.add_argument("--server", default=None, help="remote service URL")
    run_p.set_defaults(func=_cmd_run)

    metrics_p = sub.add_parser("metrics", help="compute metrics from a trace")
    metrics_p.add_argument("--trace", required=True, help="trace NDJSON file")
    metrics_p.add_argument("--server", default=None, help="remote service URL")
    metrics_p.set_defaults(func=_cmd_metrics)

    replay_p = sub.add_parser("replay", help="recompute metrics from a trace")
    replay_p.add_argument("--trace", required=True, help="trace NDJSON file")
    replay_p.add_argument("--csv", default=None, help="write a per-tick CSV here")
    replay_p.add_argument("--server", default=None, help="remote service URL")
    replay_p.set_defaults(func=_cmd_replay)

    validate_p = sub.add_parser("validate", help="check a scenario document")
    validate_p.add_argument("--scenario", required=True, help="scenario JSON file")
    validate_p.add_argument("--server", default=None, help="remote service URL")
    validate_p.set_defaults(func=_cmd_validate)

    serve_p = sub.add_parser("serve", help="start the HTTP service")
    serve_p.add_argument("--host", default="127.0.0.1")
    serve_p.add_argument("--port", type=int, default=8000)
    serve_p.set_defaults(func=_cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ClientError as exc:
        print(str(exc), file=sys.stderr if exc.code == EXIT_IO else sys.stdout)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
