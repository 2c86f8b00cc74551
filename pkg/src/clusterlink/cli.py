"""Command-line entry point: ``clusterlink {ingest,candgen,train,link,evaluate}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import SCHEMA, PipelineConfig, load_config
from .errors import ClusterLinkError, InvariantError
from . import pipeline

COMMANDS = {
    "ingest": pipeline.cmd_ingest,
    "candgen": pipeline.cmd_candgen,
    "train": pipeline.cmd_train,
    "link": pipeline.cmd_link,
    "evaluate": pipeline.cmd_evaluate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clusterlink", description=__doc__)
    parser.add_argument("--print-schema", action="store_true", help="print the documented config schema and exit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command")
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=(fn.__doc__ or "").strip().splitlines()[0])
        p.add_argument("--config", required=True, help="YAML pipeline config")
        p.add_argument("--out", help="artifact directory (overrides output_dir)")
        p.add_argument("--seed", type=int, help="overrides seed")
        p.add_argument("--threads", type=int, help="worker processes (overrides threads)")
        if name == "link":
            p.add_argument("--method", choices=("cluster", "independent"), help="overrides link.method")
    return parser


def resolve_config(args) -> PipelineConfig:
    cfg = load_config(args.config)
    if args.out is not None:
        # --out is relative to the working directory, not the config file
        cfg.output_dir = str(Path(args.out).resolve())
    if args.seed is not None:
        cfg.seed = args.seed
    if args.threads is not None:
        cfg.threads = args.threads
    if getattr(args, "method", None):
        cfg.link.method = args.method
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_schema:
        sys.stdout.write(SCHEMA)
        return 0
    if not args.command:
        parser.print_help(sys.stderr)
        return 2
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        COMMANDS[args.command](cfg)
    except InvariantError as exc:
        logging.getLogger("clusterlink").error("structural invariant failed: %s", exc)
        return 3
    except ClusterLinkError as exc:
        logging.getLogger("clusterlink").error("%s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
