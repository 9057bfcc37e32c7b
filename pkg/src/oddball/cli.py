"""Thin command-line client for the scoring service.

Every subcommand reads local files, sends their content to the service
(by default an in-process instance, or a remote one via ``--server``) and
writes the returned artifacts verbatim, so outputs are byte-identical no
matter where the service runs.

Exit codes: 0 success, 1 validation/evaluation failure, 2 usage or I/O
error.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
from pathlib import Path

import httpx

EXIT_OK = 0
EXIT_DATA = 1
EXIT_USAGE = 2

# Keys a --config JSON file may provide; command-line flags override it.
CONFIG_KEYS = (
    "method",
    "g",
    "agg",
    "threshold",
    "grid",
    "combine",
    "dump",
    "dump2",
    "scores",
    "gold",
    "out",
    "server",
)


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _read_file(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}", EXIT_USAGE) from exc


def _write_file(path: str, content: str) -> None:
    try:
        Path(path).write_text(content, encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", EXIT_USAGE) from exc


def _parse_grid(spec: str) -> list[float]:
    """Grid spec: either comma-separated values or start:stop:step."""
    try:
        if ":" in spec:
            start_s, stop_s, step_s = spec.split(":")
            start, stop, step = float(start_s), float(stop_s), float(step_s)
            if step <= 0:
                raise ValueError("step must be positive")
            values = []
            i = 0
            while True:
                v = start + i * step
                if v > stop + step * 1e-9:
                    break
                values.append(float(f"{v:.12g}"))
                i += 1
            return values
        return [float(v) for v in spec.split(",") if v.strip()]
    except ValueError as exc:
        raise CliError(f"bad grid spec {spec!r}: {exc}", EXIT_USAGE) from exc


def _post(server: str | None, path: str, payload: dict) -> httpx.Response:
    if server:
        try:
            with httpx.Client(base_url=server, timeout=300.0) as client:
                return client.post(path, json=payload)
        except httpx.HTTPError as exc:
            raise CliError(f"request to {server}{path} failed: {exc}", EXIT_USAGE) from exc

    from .service import app

    async def go() -> httpx.Response:
        transport = httpx.ASGITransport(app=app)
        async with httpx.AsyncClient(
            transport=transport, base_url="http://oddball.internal", timeout=None
        ) as client:
            return await client.post(path, json=payload)

    return asyncio.run(go())


def _response_json(resp: httpx.Response) -> dict:
    if resp.status_code == 200:
        return resp.json()
    if resp.status_code == 400:
        detail = resp.json().get("detail", {})
        kind = detail.get("kind", "data")
        message = detail.get("message", resp.text)
        code = EXIT_USAGE if kind == "usage" else EXIT_DATA
        raise CliError(f"{detail.get('error', 'error')}: {message}", code)
    raise CliError(f"service error {resp.status_code}: {resp.text}", EXIT_USAGE)


def _merge_config(args: argparse.Namespace) -> argparse.Namespace:
    """Fill unset flags from the optional JSON config file; flags win."""
    if not getattr(args, "config", None):
        return args
    try:
        config = json.loads(_read_file(args.config))
    except json.JSONDecodeError as exc:
        raise CliError(f"bad config file {args.config}: {exc}", EXIT_USAGE) from exc
    if not isinstance(config, dict):
        raise CliError(f"config file {args.config} must hold a JSON object", EXIT_USAGE)
    for key, value in config.items():
        if key not in CONFIG_KEYS:
            raise CliError(f"unknown config key {key!r}", EXIT_USAGE)
        if getattr(args, key, None) is None:
            setattr(args, key, value)
    return args


def _grid_payload(args) -> list[float] | None:
    grid = getattr(args, "grid", None)
    if grid is None:
        return None
    if isinstance(grid, list):
        return [float(v) for v in grid]
    return _parse_grid(grid)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--server", default=None, help="remote service URL (default: in-process)")
    parser.add_argument("--config", default=None, help="JSON config file; flags override it")


def _add_method_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--method", choices=["probability", "oddballness", "topk"], default=None)
    parser.add_argument("--g", choices=["identity", "square", "cube"], default=None)
    parser.add_argument("--agg", choices=["max", "mean", "first"], default=None,
                        help="subword-to-token aggregation policy")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oddball",
        description="Score, tune and evaluate token anomaly detection on "
        "language-model probability dumps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a dump file against the schema and invariants")
    p.add_argument("--dump", default=None, help="dump file (JSONL)")
    p.add_argument("dump_positional", nargs="?", default=None, metavar="DUMP")
    _add_common(p)

    p = sub.add_parser("score", help="score a dump per dataset token")
    p.add_argument("--dump", default=None, required=False)
    p.add_argument("--dump2", default=None, help="second dump for cross-model combination")
    p.add_argument("--combine", choices=["max", "min"], default=None)
    p.add_argument("--gold", default=None, help="dataset TSV supplying the token boundaries")
    p.add_argument("--threshold", type=float, default=None, help="also emit flags at this threshold")
    p.add_argument("--out", default=None, required=False, help="score file to write")
    _add_method_flags(p)
    _add_common(p)

    p = sub.add_parser("tune", help="sweep thresholds on a dev split, maximizing F0.5")
    p.add_argument("--dump", default=None)
    p.add_argument("--dump2", default=None)
    p.add_argument("--combine", choices=["max", "min"], default=None)
    p.add_argument("--scores", default=None, help="score file instead of a dump")
    p.add_argument("--gold", default=None, help="dev TSV with gold labels")
    p.add_argument("--grid", default=None, help="threshold grid: v1,v2,... or start:stop:step")
    p.add_argument("--out", default=None, help="sweep JSON to write")
    _add_method_flags(p)
    _add_common(p)

    p = sub.add_parser("eval", help="apply a fixed threshold to a test split and report F0.5")
    p.add_argument("--dump", default=None)
    p.add_argument("--dump2", default=None)
    p.add_argument("--combine", choices=["max", "min"], default=None)
    p.add_argument("--scores", default=None, help="score file instead of a dump")
    p.add_argument("--gold", default=None, help="test TSV with gold labels")
    p.add_argument("--threshold", type=float, default=None, required=False)
    p.add_argument("--out", default=None, help="eval JSON to write")
    p.add_argument("--pred-out", default=None, help="predictions TSV to write")
    _add_method_flags(p)
    _add_common(p)

    p = sub.add_parser("report", help="tune + evaluate every method and render the results table")
    p.add_argument("--dev-dump", default=None, required=True)
    p.add_argument("--test-dump", default=None, required=True)
    p.add_argument("--dev-dump2", default=None)
    p.add_argument("--test-dump2", default=None)
    p.add_argument("--dev-gold", default=None, required=True)
    p.add_argument("--test-gold", default=None, required=True)
    p.add_argument("--methods", default=None,
                   help="comma-separated subset of probability,oddballness,topk")
    p.add_argument("--grid", default=None, help="threshold grid override applied to every method")
    p.add_argument("--out", default=None, help="summary JSON to write")
    p.add_argument("--table-out", default=None, help="rendered table to write")
    _add_method_flags(p)
    _add_common(p)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    return parser


def _cmd_validate(args) -> int:
    dump_path = args.dump or args.dump_positional
    if not dump_path:
        raise CliError("validate needs a dump file", EXIT_USAGE)
    payload = {"dump": _read_file(dump_path)}
    data = _response_json(_post(args.server, "/validate", payload))
    for v in data["violations"]:
        where = f"line {v['line']}" if v["line"] is not None else "?"
        sid = f" sentence {v['sentence_id']!r}" if v["sentence_id"] else ""
        fld = f" field {v['field']!r}" if v["field"] else ""
        print(f"{where}:{sid}{fld}: {v['message']}")
    for w in data["warnings"]:
        print(f"warning: {w}", file=sys.stderr)
    if data["valid"]:
        print(f"OK: {data['sentences']} sentences")
        return EXIT_OK
    print(f"INVALID: {len(data['violations'])} violations")
    return EXIT_DATA


def _cmd_score(args) -> int:
    if not args.dump:
        raise CliError("score needs --dump", EXIT_USAGE)
    if not args.out:
        raise CliError("score needs --out", EXIT_USAGE)
    payload = {
        "dump": _read_file(args.dump),
        "dump2": _read_file(args.dump2) if args.dump2 else None,
        "method": args.method or "oddballness",
        "g": args.g or "identity",
        "agg": args.agg or "max",
        "combine": args.combine,
        "gold": _read_file(args.gold) if args.gold else None,
        "threshold": args.threshold,
    }
    data = _response_json(_post(args.server, "/score", payload))
    _write_file(args.out, data["scores"])
    print(
        f"scored {data['sentences']} sentences ({data['tokens']} tokens), "
        f"exactness={data['exactness']:.6g} -> {args.out}"
    )
    return EXIT_OK


def _cmd_tune(args) -> int:
    if not args.gold:
        raise CliError("tune needs --gold", EXIT_USAGE)
    payload = {
        "gold": _read_file(args.gold),
        "method": args.method or "oddballness",
        "g": args.g or "identity",
        "agg": args.agg or "max",
        "dump": _read_file(args.dump) if args.dump else None,
        "dump2": _read_file(args.dump2) if args.dump2 else None,
        "combine": args.combine,
        "scores": _read_file(args.scores) if args.scores else None,
        "grid": _grid_payload(args),
    }
    data = _response_json(_post(args.server, "/tune", payload))
    if args.out:
        _write_file(args.out, data["sweep"])
    degenerate = " (degenerate: no incorrect dev tokens)" if data["degenerate"] else ""
    print(
        f"method={data['method']} best threshold={data['best_threshold']:.6g} "
        f"dev F0.5={100 * data['best_f05']:.2f}{degenerate}"
    )
    return EXIT_OK


def _cmd_eval(args) -> int:
    if not args.gold:
        raise CliError("eval needs --gold", EXIT_USAGE)
    if args.threshold is None:
        raise CliError("eval needs --threshold", EXIT_USAGE)
    payload = {
        "gold": _read_file(args.gold),
        "threshold": args.threshold,
        "method": args.method or "oddballness",
        "g": args.g or "identity",
        "agg": args.agg or "max",
        "dump": _read_file(args.dump) if args.dump else None,
        "dump2": _read_file(args.dump2) if args.dump2 else None,
        "combine": args.combine,
        "scores": _read_file(args.scores) if args.scores else None,
    }
    data = _response_json(_post(args.server, "/eval", payload))
    if args.out:
        _write_file(args.out, data["report"])
    if args.pred_out:
        _write_file(args.pred_out, data["predictions"])
    print(
        f"method={data['method']} threshold={data['threshold']:.6g} "
        f"TP={data['tp']} FP={data['fp']} FN={data['fn']} "
        f"P={100 * data['precision']:.2f} R={100 * data['recall']:.2f} "
        f"F0.5={100 * data['f05']:.2f}"
    )
    return EXIT_OK


def _cmd_report(args) -> int:
    payload = {
        "dev_gold": _read_file(args.dev_gold),
        "test_gold": _read_file(args.test_gold),
        "dev_dump": _read_file(args.dev_dump),
        "test_dump": _read_file(args.test_dump),
        "dev_dump2": _read_file(args.dev_dump2) if args.dev_dump2 else None,
        "test_dump2": _read_file(args.test_dump2) if args.test_dump2 else None,
        "methods": args.methods.split(",") if args.methods else None,
        "g": args.g or "identity",
        "agg": args.agg or "max",
        "grid": _grid_payload(args),
    }
    data = _response_json(_post(args.server, "/report", payload))
    print(data["table"], end="")
    for w in data["warnings"]:
        print(f"warning: {w}", file=sys.stderr)
    if args.out:
        _write_file(args.out, data["summary"])
    if args.table_out:
        _write_file(args.table_out, data["table"])
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("oddball.service:app", host=args.host, port=args.port)
    return EXIT_OK


COMMANDS = {
    "validate": _cmd_validate,
    "score": _cmd_score,
    "tune": _cmd_tune,
    "eval": _cmd_eval,
    "report": _cmd_report,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command != "serve":
            args = _merge_config(args)
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
