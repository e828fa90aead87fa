"""`anonroom` command line entry point."""

import argparse
import logging
import os
import sys
from pathlib import Path

import uvicorn

from .errors import CorruptLog
from .server import ServerConfig, create_app

logger = logging.getLogger("anonroom")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="anonroom", description="Anonymous no-login chat room server"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    serve = sub.add_parser("serve", help="run the chat server")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8080)
    serve.add_argument(
        "--data-dir",
        default="./data",
        help="log directory (env ANONROOM_DATA_DIR overrides)",
    )
    serve.add_argument("--session-timeout-s", type=float, default=120.0)
    serve.add_argument("--presence-timeout-s", type=float, default=30.0)
    serve.add_argument("--max-wait-ms", type=int, default=30_000)
    serve.add_argument(
        "--static-dir",
        default=None,
        help="serve this directory at / (defaults to ./frontend/dist when present)",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO, format="%(asctime)s %(name)s %(levelname)s %(message)s"
    )

    data_dir = os.environ.get("ANONROOM_DATA_DIR") or args.data_dir
    static_dir = args.static_dir
    if static_dir is None and Path("frontend/dist").is_dir():
        static_dir = "frontend/dist"

    config = ServerConfig(
        data_dir=data_dir,
        session_timeout_s=args.session_timeout_s,
        presence_timeout_s=args.presence_timeout_s,
        max_wait_ms=args.max_wait_ms,
        static_dir=static_dir,
    )
    try:
        app = create_app(config)
    except CorruptLog as exc:
        print(f"anonroom: refusing to start: {exc.detail}", file=sys.stderr)
        return 2

    logger.info(
        "listening on http://%s:%d (data_dir=%s%s)",
        args.host,
        args.port,
        data_dir,
        f", static={static_dir}" if static_dir else "",
    )
    uvicorn.run(
        app,
        host=args.host,
        port=args.port,
        log_level="warning",
        access_log=False,
        # long-poll clients re-poll immediately; don't churn their connections
        timeout_keep_alive=75,
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
