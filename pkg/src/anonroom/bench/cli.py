"""`anonroom-bench` command line entry point.

Prints one JSON report object on stdout; the process exits non-zero iff the
scenario failed, so CI can gate on it directly.
"""

import argparse
import asyncio
import json
import shlex
import sys
import tempfile

from .scenarios import (
    run_broadcast_check,
    run_capacity_check,
    run_durability_check,
    run_privacy_check,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="anonroom-bench",
        description="Load generator and protocol conformance checker",
    )
    sub = parser.add_subparsers(dest="scenario", required=True)

    def common(p, needs_url=True):
        if needs_url:
            p.add_argument("--url", required=True, help="base server URL")
        p.add_argument("--seed", type=int, default=42)
        p.add_argument("--report-out", default=None, help="also write the JSON report here")

    broadcast = sub.add_parser("broadcast", help="public fan-out: exactly once, same order")
    common(broadcast)
    broadcast.add_argument("--clients", type=int, default=50)
    broadcast.add_argument("--messages", type=int, default=20, help="messages per client")

    privacy = sub.add_parser("privacy", help="two-party isolation of private traffic")
    common(privacy)
    privacy.add_argument("--clients", type=int, default=10)
    privacy.add_argument("--messages", type=int, default=1000, help="total private messages")

    capacity = sub.add_parser("capacity", help="hold many concurrent polling sessions")
    common(capacity)
    capacity.add_argument("--clients", type=int, default=500)
    capacity.add_argument("--duration-s", type=float, default=60.0)

    durability = sub.add_parser(
        "durability", help="kill -9 and restart: history survives, sessions do not"
    )
    common(durability, needs_url=False)
    durability.add_argument(
        "--serve-cmd",
        default=f"{sys.executable} -m anonroom serve",
        help="command used to launch the server under test",
    )
    durability.add_argument("--data-dir", default=None, help="defaults to a temp dir")
    durability.add_argument("--port", type=int, default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.scenario == "broadcast":
            report = asyncio.run(
                run_broadcast_check(args.url, args.clients, args.messages, args.seed)
            )
        elif args.scenario == "privacy":
            report = asyncio.run(
                run_privacy_check(args.url, args.clients, args.messages, args.seed)
            )
        elif args.scenario == "capacity":
            report = asyncio.run(
                run_capacity_check(args.url, args.clients, args.duration_s, args.seed)
            )
        else:
            data_dir = args.data_dir or tempfile.mkdtemp(prefix="anonroom-durability-")
            report = asyncio.run(
                run_durability_check(
                    shlex.split(args.serve_cmd), data_dir, args.port, args.seed
                )
            )
    except ValueError as exc:
        print(f"anonroom-bench: {exc}", file=sys.stderr)
        return 2

    payload = json.dumps(report.to_dict(), indent=2)
    print(payload)
    if args.report_out:
        with open(args.report_out, "w", encoding="utf-8") as f:
            f.write(payload + "\n")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
