"""Experiment runner CLI.

Each subcommand reads a JSON config, executes it through the HTTP service
(in-process by default, or a remote base URL via --server), and writes
report.json plus CSV tables to --out. Exit codes: 0 success, 2 config or
validation error, 3 property violation flagged by the run.

The CLI never computes anything itself; it only shapes requests and
persists responses, so local and remote runs produce identical files.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VIOLATION = 3

_COMMAND_PATHS = {
    "spectral": "/spectral",
    "identity-check": "/identity-check",
    "kato": "/kato",
    "truncation-study": "/truncation-study",
    "validate-model": "/model/validate",
}


def _load_config(path):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        print(f"config not found: {path}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)
    except json.JSONDecodeError as exc:
        print(f"config is not valid JSON: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _resolve_model_file(payload, base_dir):
    model = payload.get("model")
    if isinstance(model, dict) and isinstance(model.get("file"), str):
        path = Path(model["file"])
        if not path.is_absolute():
            model["file"] = str((base_dir / path).resolve())


def _apply_overrides(command, payload, seed, threads):
    if seed is not None:
        if command == "identity-check":
            payload.setdefault("suite", {})["seed"] = seed
        elif command == "spectral":
            payload["seed"] = seed
    if threads is not None and command == "spectral":
        payload["threads"] = threads


def _client(server):
    if server is None:
        from fastapi.testclient import TestClient

        from .service import create_app
        return TestClient(create_app(), raise_server_exceptions=False)
    import httpx
    return httpx.Client(base_url=server, timeout=600.0)


def _write_outputs(out_dir, command, body, fmt):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt in ("json", "csv"):
        report_path = out / "report.json"
        report_path.write_text(
            json.dumps(body, sort_keys=True, indent=2) + "\n")
        written.append(report_path)
    if fmt == "csv":
        if body.get("csv"):
            path = out / f"{command}.csv"
            path.write_text(body["csv"])
            written.append(path)
        if body.get("plot_csv"):
            path = out / f"{command}_plot.csv"
            path.write_text(body["plot_csv"])
            written.append(path)
    return written


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="fklab",
        description="Feynman-Kac spectral laboratory experiment runner")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMAND_PATHS:
        cmd = sub.add_parser(name, help=f"run the {name} experiment")
        cmd.add_argument("--config", required=True, help="JSON config path")
        cmd.add_argument("--out", required=True, help="output directory")
        cmd.add_argument("--seed", type=int, default=None,
                         help="override the config seed")
        cmd.add_argument("--threads", type=int, default=None,
                         help="worker threads for MC sampling")
        cmd.add_argument("--format", choices=("csv", "json"), default="csv",
                         help="csv writes report.json plus CSV tables; "
                              "json writes report.json only")
        cmd.add_argument("--server", default=None,
                         help="base URL of a running service "
                              "(default: in-process)")
    args = parser.parse_args(argv)

    payload = _load_config(args.config)
    if not isinstance(payload, dict):
        print("config must be a JSON object", file=sys.stderr)
        return EXIT_CONFIG
    base_dir = Path(args.config).resolve().parent
    if args.command == "validate-model" and "model" not in payload:
        payload = {"model": payload}
    _resolve_model_file(payload, base_dir)
    _apply_overrides(args.command, payload, args.seed, args.threads)

    client = _client(args.server)
    try:
        response = client.post(_COMMAND_PATHS[args.command], json=payload)
    finally:
        if args.server is not None:
            client.close()

    if response.status_code == 422:
        detail = response.json().get("detail", [])
        for item in detail:
            loc = ".".join(str(part) for part in item.get("loc", [])[1:])
            where = f" at {loc}" if loc else ""
            print(f"config error{where}: {item.get('msg', item)}",
                  file=sys.stderr)
        return EXIT_CONFIG
    if response.status_code != 200:
        print(f"service error {response.status_code}: {response.text}",
              file=sys.stderr)
        return EXIT_CONFIG

    body = response.json()
    written = _write_outputs(args.out, args.command, body, args.format)
    for path in written:
        print(f"wrote {path}")
    if body.get("violation"):
        print("property violation flagged; see report.json", file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
