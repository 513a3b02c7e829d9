"""rbf command line: run scenarios, summarize traces, move files.

Repository addresses are either a filesystem path (local repository) or
host:port (remote repository protocol). The RBF_REPO environment
variable supplies the default.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .config import load_scenario
from .continuum_sim import InvalidConfigError, SimTrace, run_scenario
from .data_mover import (
    ChecksumMismatchError,
    FileRepository,
    UnknownFileError,
    UnknownVersionError,
)
from .remote import RemoteProtocolError, RemoteRepository, RepositoryServer
from .reports import interval_summary, write_decay_report, write_simulation_reports
from .stats import EmptySelectionError, interval_stats_streaming, publish_gaps_min

EXIT_OK = 0
EXIT_UNKNOWN_FILE = 1
EXIT_UNKNOWN_VERSION = 2
EXIT_CORRUPT = 3
EXIT_MALFORMED = 4
EXIT_INVALID_CONFIG = 2
EXIT_IO_FAILURE = 3


def open_repository(addr: str):
    if ":" in addr and not os.path.sep in addr and not Path(addr).exists():
        host, _, port = addr.rpartition(":")
        try:
            return RemoteRepository(host, int(port))
        except ValueError:
            pass
    return FileRepository(addr)


def _repo_addr(args) -> str:
    addr = args.repo or os.environ.get("RBF_REPO")
    if not addr:
        raise SystemExit("no repository given: use --repo or set RBF_REPO")
    return addr


def cmd_simulate(args) -> int:
    try:
        config = load_scenario(args.config)
        if args.seed is not None:
            config.seed = args.seed
    except (InvalidConfigError, FileNotFoundError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID_CONFIG
    trace = run_scenario(config)
    try:
        write_simulation_reports(trace, Path(args.out))
    except OSError as exc:
        print(f"cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_IO_FAILURE
    for row in interval_summary(trace):
        print(row.format_row())
    print(f"wrote trace and reports to {args.out}")
    return EXIT_OK


def _tier_filter(trace: SimTrace, tiers: str):
    all_tiers = {e["tier"] for e in trace.of_kind("publish")}
    if tiers == "ded":
        return {"dedicated"}
    if tiers == "opp":
        return all_tiers - {"dedicated"}
    return all_tiers


def cmd_stats(args) -> int:
    try:
        text = Path(args.trace).read_text()
    except OSError as exc:
        print(f"cannot read trace: {exc}", file=sys.stderr)
        return EXIT_IO_FAILURE
    trace = SimTrace.from_ndjson(text)
    selected = _tier_filter(trace, args.tiers)
    times = [e["t_ms"] for e in trace.publishes(args.model, selected)]
    try:
        stats = interval_stats_streaming(
            publish_gaps_min(times), f"{args.model}/{args.tiers}"
        )
    except EmptySelectionError:
        print("empty selection: fewer than two matching publish events", file=sys.stderr)
        return 2
    print(stats.format_row())
    return EXIT_OK


def cmd_decay_report(args) -> int:
    try:
        config = load_scenario(args.config)
    except (InvalidConfigError, FileNotFoundError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID_CONFIG
    try:
        rows = write_decay_report(config, Path(args.out))
    except OSError as exc:
        print(f"cannot write report: {exc}", file=sys.stderr)
        return EXIT_IO_FAILURE
    print(f"wrote {len(rows)} rows to {args.out}")
    return EXIT_OK


def _data_mover_exit(exc: Exception) -> int:
    if isinstance(exc, RemoteProtocolError):
        return exc.status
    if isinstance(exc, UnknownFileError):
        return EXIT_UNKNOWN_FILE
    if isinstance(exc, UnknownVersionError):
        return EXIT_UNKNOWN_VERSION
    if isinstance(exc, ChecksumMismatchError):
        return EXIT_CORRUPT
    return EXIT_MALFORMED


def cmd_push(args) -> int:
    repo = open_repository(_repo_addr(args))
    try:
        content = Path(args.file).read_bytes()
    except OSError as exc:
        print(f"cannot read {args.file}: {exc}", file=sys.stderr)
        return EXIT_IO_FAILURE
    try:
        record = repo.push_file(args.name, content)
    except Exception as exc:
        print(f"push failed: {exc}", file=sys.stderr)
        return _data_mover_exit(exc)
    print(f"pushed {args.name} version {record.version} ({record.byte_length} bytes)")
    return EXIT_OK


def cmd_pull(args) -> int:
    repo = open_repository(_repo_addr(args))
    try:
        content = repo.pull_file(args.name, args.version)
    except Exception as exc:
        print(f"pull failed: {exc}", file=sys.stderr)
        return _data_mover_exit(exc)
    if args.file:
        Path(args.file).write_bytes(content)
    else:
        sys.stdout.buffer.write(content)
    return EXIT_OK


def cmd_latest(args) -> int:
    repo = open_repository(_repo_addr(args))
    try:
        record = repo.latest_version(args.name)
    except Exception as exc:
        print(f"latest failed: {exc}", file=sys.stderr)
        return _data_mover_exit(exc)
    print(f"name: {record.file_name}")
    print(f"version: {record.version}")
    print(f"start_seq: {record.start_seq}")
    print(f"end_seq: {record.end_seq}")
    print(f"byte_length: {record.byte_length}")
    print(f"checksum: {record.checksum.hex()}")
    print(f"push_time_ms: {record.push_time_ms}")
    return EXIT_OK


def cmd_serve(args) -> int:
    repo = FileRepository(args.root)
    server = RepositoryServer(repo, args.host, args.port)
    host, port = server.address
    print(f"serving repository {args.root} on {host}:{port}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rbf")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a scenario and write trace + reports")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("stats", help="publish-interval statistics from a trace")
    p.add_argument("--trace", required=True, help="trace.ndjson path")
    p.add_argument("--model", required=True, choices=["pinn", "fno", "pcr"])
    p.add_argument("--tiers", default="all", choices=["ded", "opp", "all"])
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("decay-report", help="regeneration-rate vs accuracy table")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_decay_report)

    p = sub.add_parser("push", help="push a file to a repository")
    p.add_argument("--repo", default=None)
    p.add_argument("--name", required=True)
    p.add_argument("--file", required=True)
    p.set_defaults(func=cmd_push)

    p = sub.add_parser("pull", help="pull a file version (default latest)")
    p.add_argument("--repo", default=None)
    p.add_argument("--name", required=True)
    p.add_argument("--version", type=int, default=None)
    p.add_argument("--file", default=None, help="write here instead of stdout")
    p.set_defaults(func=cmd_pull)

    p = sub.add_parser("latest", help="print the latest file version record")
    p.add_argument("--repo", default=None)
    p.add_argument("--name", required=True)
    p.set_defaults(func=cmd_latest)

    p = sub.add_parser("serve", help="serve a local repository over TCP")
    p.add_argument("--root", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
