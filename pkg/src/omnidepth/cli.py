"""Command-line entry point: ``omnidepth {render,estimate,eval,pipeline}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import load_config
from .errors import ConfigError, DataError, FormatError, InvariantViolation

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_INVARIANT = 4

log = logging.getLogger("omnidepth")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="omnidepth", description="Multi-camera omnidirectional depth estimation.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, type=Path, help="TOML run configuration")
        p.add_argument("--threads", type=int, help="worker threads (results do not depend on this)")
        p.add_argument("--seed", type=int, help="offset added to every soiling seed")
        p.add_argument("--output", type=Path, help="override [paths] output")
        p.add_argument("-v", "--verbose", action="store_true")

    def estimating(p):
        p.add_argument("--mode", choices=["pairwise", "sweep"], help="pipeline kind")
        p.add_argument("--views", type=int, help="use only the first N cameras of the rig")
        p.add_argument("--soiled", action="store_true", default=None, help="use soiled inputs and their masks")

    p = sub.add_parser("render", help="render a frame set from a scene and rig")
    common(p)
    p = sub.add_parser("estimate", help="estimate reference depth from a frame set")
    common(p)
    estimating(p)
    p.add_argument("--frame", type=Path, help="frame set directory (default: output directory)")
    p = sub.add_parser("eval", help="score an estimate against ground truth")
    common(p)
    p.add_argument("--pred", type=Path, help="predicted depth PFM")
    p.add_argument("--gt", type=Path, help="ground-truth depth PFM")
    p = sub.add_parser("pipeline", help="render, estimate and eval in one go")
    common(p)
    estimating(p)
    return parser


def _run(args) -> None:
    cfg = load_config(args.config)
    over = {"threads": args.threads, "seed": args.seed, "output_dir": args.output}
    if hasattr(args, "mode"):
        over.update(kind=args.mode, views=args.views, soiled=args.soiled)
    cfg = cfg.with_overrides(**over)
    pipeline.validate_runtime(cfg)
    if args.command == "render":
        out = pipeline.cmd_render(cfg)
        log.info("rendered frame set to %s", out)
    elif args.command == "estimate":
        pipeline.cmd_estimate(cfg, args.frame)
        log.info("wrote %s", cfg.output_dir / "estimate")
    elif args.command == "eval":
        doc = pipeline.cmd_eval(cfg, args.pred, args.gt)
        print((cfg.output_dir / "eval" / "report.txt").read_text(), end="")
        log.debug("%s", doc)
    else:
        pipeline.cmd_pipeline(cfg)
        print((cfg.output_dir / "eval" / "report.txt").read_text(), end="")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FormatError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except Exception as exc:  # noqa: BLE001 - last-resort reporting
        log.debug("internal error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
