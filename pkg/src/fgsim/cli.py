"""Command-line interface: a thin client over the runner and the service.

Subcommands: generate, train, evaluate, compare, stats, serve.  By default
commands execute in-process; with ``--server URL`` they are sent to a
running service instead.  Exit codes: 0 success, 1 config error, 2 runtime
error, 130 interrupted.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import ConfigError, FgsError, ParseError
from .runner import (
    RunConfig,
    cmd_compare,
    cmd_evaluate,
    cmd_generate,
    cmd_stats,
    cmd_train,
    parse_config,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_INTERRUPTED = 130


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fgsim",
        description="Federated link-prediction simulator over typed supply-chain graphs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_command(name: str, help_text: str) -> argparse.ArgumentParser:
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", type=Path, help="key=value config file")
        cmd.add_argument("--seed", type=int, help="master seed (overrides config)")
        cmd.add_argument("--out", type=Path, help="output directory (overrides config)")
        cmd.add_argument(
            "--variant",
            action="append",
            help="variant to run; repeatable (overrides config)",
        )
        cmd.add_argument("--server", help="send the command to a running service URL")
        return cmd

    add_run_command("generate", "generate per-client synthetic graph files")
    add_run_command("train", "train the first configured variant once and checkpoint it")
    evaluate = add_run_command("evaluate", "evaluate stored checkpoints on valid/test splits")
    evaluate.add_argument("--checkpoints", type=Path, help="checkpoint directory")
    add_run_command("compare", "run all configured variants x repetitions and report")

    stats = sub.add_parser("stats", help="structural metrics per (country, relation)")
    stats.add_argument("graphs", nargs="+", type=Path, help="graph files")
    stats.add_argument("--out", type=Path, help="write stats.csv under this directory")
    stats.add_argument("--server", help="send the command to a running service URL")

    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    return parser


def _overrides(args: argparse.Namespace) -> dict[str, str]:
    overrides: dict[str, str] = {}
    if getattr(args, "seed", None) is not None:
        overrides["run.seed"] = str(args.seed)
    if getattr(args, "out", None) is not None:
        overrides["run.out"] = str(args.out)
    if getattr(args, "variant", None):
        overrides["run.variants"] = ",".join(args.variant)
    return overrides


def _load_config(args: argparse.Namespace) -> RunConfig:
    return parse_config(args.config, overrides=_overrides(args))


def _run_local(args: argparse.Namespace) -> int:
    if args.command == "generate":
        for result in cmd_generate(_load_config(args)):
            print(
                f"client={result.client} file={result.path} seed={result.seed} "
                f"nodes={result.num_nodes} edges={result.num_edges}"
            )
    elif args.command == "train":
        out_dir = cmd_train(_load_config(args))
        print(f"trained; outputs under {out_dir}")
    elif args.command == "evaluate":
        for row in cmd_evaluate(_load_config(args), checkpoint_dir=args.checkpoints):
            print(row)
    elif args.command == "compare":
        result = cmd_compare(_load_config(args))
        for path in result.files:
            print(path)
    elif args.command == "stats":
        rows, warnings = cmd_stats(list(args.graphs))
        for warning in warnings:
            print(f"warning: {warning}", file=sys.stderr)
        if args.out is not None:
            args.out.mkdir(parents=True, exist_ok=True)
            target = args.out / "stats.csv"
            target.write_text("\n".join(rows) + "\n", encoding="utf-8")
            print(target)
        else:
            for row in rows:
                print(row)
    return EXIT_OK


def _run_remote(args: argparse.Namespace) -> int:
    import httpx

    from .service.schemas import run_request_from_config

    base = args.server.rstrip("/")
    if args.command == "stats":
        payload = {"graph_paths": [str(p) for p in args.graphs]}
        response = httpx.post(f"{base}/stats", json=payload, timeout=600.0)
    else:
        request = run_request_from_config(_load_config(args))
        if args.command == "evaluate":
            body = {
                "run": request.model_dump(),
                "checkpoint_dir": str(args.checkpoints) if args.checkpoints else None,
            }
            response = httpx.post(f"{base}/evaluate", json=body, timeout=600.0)
        elif args.command == "compare":
            body = {"run": request.model_dump(), "background": False}
            response = httpx.post(f"{base}/compare", json=body, timeout=None)
        else:
            response = httpx.post(
                f"{base}/{args.command}", json=request.model_dump(), timeout=600.0
            )
    if response.status_code >= 500:
        print(f"server error: {response.text}", file=sys.stderr)
        return EXIT_RUNTIME
    if response.status_code >= 400:
        print(f"request rejected: {response.json().get('detail', response.text)}", file=sys.stderr)
        return EXIT_CONFIG
    print(response.text)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "serve":
            import uvicorn

            from .service.app import app

            uvicorn.run(app, host=args.host, port=args.port)
            return EXIT_OK
        if getattr(args, "server", None):
            return _run_remote(args)
        return _run_local(args)
    except KeyboardInterrupt:
        print("interrupted; partial outputs carry a .partial suffix", file=sys.stderr)
        return EXIT_INTERRUPTED
    except (ConfigError, ParseError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FgsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # contract: runtime failures exit 2
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
