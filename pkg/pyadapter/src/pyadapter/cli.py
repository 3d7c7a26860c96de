"""Command-line front end: pick a transport, pick a model, serve."""

from __future__ import annotations

import argparse
import sys

from .adapter import DEFAULT_MAX_BATCH, AdapterConfig, run_adapter
from .models import resolve_model


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pyadapter",
        description="serve a label function over the point-cloud oracle wire protocol")
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--stdio", action="store_true", help="serve on stdin/stdout until EOF")
    group.add_argument("--tcp", default=None, metavar="HOST:PORT",
                       help="bind and serve one connection at a time (port 0 picks a free one)")
    parser.add_argument("--model", required=True,
                        help="constant:K | centroid:DATADIR | callable:MODULE:ATTR")
    parser.add_argument("--max-batch", type=int, default=DEFAULT_MAX_BATCH,
                        help="largest accepted clouds-per-request")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        model = resolve_model(args.model)
    except (ValueError, FileNotFoundError, ImportError, AttributeError) as exc:
        raise SystemExit(f"cannot build model: {exc}") from None
    transport = "stdio" if args.stdio else f"tcp:{args.tcp}"
    config = AdapterConfig(transport=transport, model=model, max_batch=args.max_batch)
    try:
        return run_adapter(config)
    except KeyboardInterrupt:
        return 0


if __name__ == "__main__":
    sys.exit(main())
