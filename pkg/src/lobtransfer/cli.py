"""Command-line entry point: ``lobtransfer <verb> [options]``."""
from __future__ import annotations

import argparse
import logging
import sys
from typing import List, Optional

from .config import ScenarioError
from .experiments import KINDS, ExperimentManifest, StageError, run_experiment, summarize

log = logging.getLogger("lobtransfer")

ALL_TABLE1 = [f"table1:{i}" for i in range(1, 8)]


def parse_seeds(text: str) -> List[int]:
    """Comma-separated seeds; ``a-b`` expands to the inclusive range."""
    seeds: List[int] = []
    try:
        for part in (s.strip() for s in text.split(",")):
            if not part:
                continue
            lo, sep, hi = part.partition("-")
            if sep and lo:
                if int(hi) < int(lo):
                    raise ValueError(part)
                seeds.extend(range(int(lo), int(hi) + 1))
            else:
                seeds.append(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be integers or ranges like 0-9, got {text!r}") from None
    if not seeds:
        raise argparse.ArgumentTypeError("at least one seed is required")
    return seeds


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lobtransfer", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind)
        p.add_argument("--scenario", action="append", default=None,
                       help="scenario file or table1:N; repeatable (metric verbs default to all seven)")
        p.add_argument("--seeds", type=parse_seeds, default=[0])
        p.add_argument("--episodes", type=int, default=None)
        p.add_argument("--out", required=True)
        p.add_argument("--full-scale", action="store_true", help="100 ZI agents and a 09:30-16:00 day")
        if kind in ("reuse-gain", "prq"):
            p.add_argument("--library", action="append", default=None,
                           help="source scenario for a past policy; repeatable (default table1:2..7)")
            p.add_argument("--source-episodes", type=int, default=100)
            p.add_argument("--library-seed", type=int, default=0)
    p = sub.add_parser("summarize")
    p.add_argument("--out", required=True, help="directory holding earlier runs")
    p.add_argument("--jumpstart-episodes", type=int, default=10)
    return parser


def manifest_from_args(args: argparse.Namespace) -> ExperimentManifest:
    scenarios = args.scenario
    if scenarios is None:
        scenarios = ALL_TABLE1 if args.verb in ("sf-metrics", "rbm-metrics") else ["table1:1"]
    library = getattr(args, "library", None)
    if args.verb in ("reuse-gain", "prq") and library is None:
        library = ALL_TABLE1[1:]
    return ExperimentManifest(
        kind=args.verb,
        scenarios=scenarios,
        seeds=args.seeds,
        out=args.out,
        episodes=args.episodes,
        full_scale=args.full_scale,
        library=library or [],
        library_seed=getattr(args, "library_seed", 0),
        source_episodes=getattr(args, "source_episodes", 100),
    )


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    args = build_parser().parse_args(argv)
    if args.verb == "summarize":
        path = summarize(args.out, args.jumpstart_episodes)
        print(path.read_text(encoding="utf-8"), end="")
        return 0
    try:
        manifest = manifest_from_args(args)
        art = run_experiment(manifest)
    except (ValueError, ScenarioError) as exc:
        log.error("invalid experiment: %s", exc)
        return 2
    except StageError as exc:
        log.error("%s", exc)
        return 1
    log.info("wrote %d files under %s", len(art.files), art.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
