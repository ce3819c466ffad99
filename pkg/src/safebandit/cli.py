"""Command-line client for the experiment service.

Every data-path subcommand talks to the service API. By default the app is
mounted in-process (no server needed, exact same code path); pass
--server URL to target a running instance instead. Exit codes: 0 success,
1 config/usage error, 2 invariant failure reported by `check`.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INVARIANT = 2


def _make_client(server: str | None, workers: int | None):
    if server:
        import httpx

        return httpx.Client(base_url=server.rstrip("/"), timeout=None)
    import warnings

    with warnings.catch_warnings():
        # this starlette release nags about its httpx backend; harmless here
        warnings.filterwarnings("ignore", message=r"Using `httpx` with `starlette.testclient`")
        from fastapi.testclient import TestClient

    from .service.app import create_app

    return TestClient(create_app(n_workers=workers))


def _post(client, path: str, payload: dict):
    response = client.post(path, json=payload)
    if response.status_code == 400:
        detail = response.json().get("detail", "bad request")
        print(f"error: {detail}", file=sys.stderr)
        return None
    response.raise_for_status()
    return response.json()


def _write(out_dir: Path, name: str, text: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / name).write_text(text, encoding="utf-8")
    print(f"wrote {out_dir / name}")


def _load_config_file(path: str) -> dict | None:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read config {path}: {exc}", file=sys.stderr)
        return None
    if not isinstance(raw, dict):
        print(f"error: config {path} must hold a flat key-value object", file=sys.stderr)
        return None
    return raw


def _run_and_save(client, config: dict, out_dir: Path) -> int:
    body = _post(client, "/run", {"config": config})
    if body is None:
        return EXIT_CONFIG
    _write(out_dir, "rounds.csv", body["rounds_csv"])
    _write(out_dir, "aggregate.csv", body["aggregate_csv"])
    _write(out_dir, "summary.json", json.dumps(body["summary"], indent=2, sort_keys=True) + "\n")
    _write(out_dir, "results.json", json.dumps(body["bundle"], sort_keys=True) + "\n")
    return EXIT_OK


def cmd_run(args) -> int:
    config = _load_config_file(args.config)
    if config is None:
        return EXIT_CONFIG
    with _make_client(args.server, args.workers) as client:
        return _run_and_save(client, config, Path(args.out))


def cmd_sweep(args) -> int:
    config = _load_config_file(args.config)
    if config is None:
        return EXIT_CONFIG
    config["algos"] = args.algos
    with _make_client(args.server, args.workers) as client:
        return _run_and_save(client, config, Path(args.out))


def cmd_check(args) -> int:
    payload = {"setting": args.setting, "horizon": args.t, "trials": args.trials, "master_seed": args.seed}
    with _make_client(args.server, args.workers) as client:
        body = _post(client, "/check", payload)
    if body is None:
        return EXIT_CONFIG
    for item in body["checks"]:
        mark = "PASS" if item["passed"] else "FAIL"
        print(f"[{mark}] {item['name']}: {item['detail']}")
    if body["passed"]:
        print(f"check {args.setting}: all invariants hold")
        return EXIT_OK
    print(f"check {args.setting}: INVARIANT FAILURE", file=sys.stderr)
    return EXIT_INVARIANT


def cmd_export(args) -> int:
    try:
        bundle = json.loads(Path(args.results).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read results {args.results}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    with _make_client(args.server, args.workers) as client:
        body = _post(client, "/export", {"bundle": bundle, "format": args.format})
    if body is None:
        return EXIT_CONFIG
    out_dir = Path(args.out)
    for name, text in body["files"].items():
        _write(out_dir, name, text)
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(n_workers=args.workers), host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="safebandit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--server", default=None, help="service URL (default: in-process)")
        p.add_argument("--workers", type=int, default=None, help="parallel trial workers (in-process mode)")

    p_run = sub.add_parser("run", help="run an experiment config and save its outputs")
    p_run.add_argument("--config", required=True, help="JSON config file")
    p_run.add_argument("--out", required=True, help="output directory")
    common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a config against an explicit algorithm list")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--algos", required=True, help="comma-separated algorithm names")
    p_sweep.add_argument("--out", required=True)
    common(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)

    p_check = sub.add_parser("check", help="run short instrumented trials with every invariant asserted")
    p_check.add_argument("--setting", required=True)
    p_check.add_argument("--t", type=int, default=1000, help="horizon (capped at 2000)")
    p_check.add_argument("--trials", type=int, default=2)
    p_check.add_argument("--seed", type=int, default=0)
    common(p_check)
    p_check.set_defaults(func=cmd_check)

    p_export = sub.add_parser("export", help="re-export a saved results.json bundle")
    p_export.add_argument("--results", required=True, help="results.json written by run/sweep")
    p_export.add_argument("--format", required=True, choices=("csv", "json"))
    p_export.add_argument("--out", required=True)
    common(p_export)
    p_export.set_defaults(func=cmd_export)

    p_serve = sub.add_parser("serve", help="serve the API over HTTP")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8711)
    p_serve.add_argument("--workers", type=int, default=None)
    p_serve.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
