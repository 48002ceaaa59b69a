"""Command line front end.

One subcommand per pipeline stage, all driven by a JSON config file::

    citemap --config pipeline.json synth
    citemap --config pipeline.json score
    ...

Exit codes: 0 success, 1 invalid input or configuration, 2 missing upstream
artifact, 3 internal error.
"""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .errors import MissingArtifactError, ValidationError
from .pipeline import ALL_STAGES, load_config, run_stage

_STAGE_HELP = {
    "synth": "generate a planted-topic corpus and ranking tasks",
    "score": "extract citation features, fit weights, score importance",
    "sample": "sample triplets, drop contradictions, split train/validation",
    "train": "train the embedding projection head on the triplets",
    "embed": "embed every document with the trained model",
    "graph": "build the k-nearest-neighbour similarity graph",
    "stats": "summary statistics for the similarity, citation, and random graphs",
    "overlap": "edge overlap of the similarity graph with citation and random graphs",
    "cluster": "detect communities at each configured resolution",
    "accuracy": "label-similarity accuracy across granularity levels and methods",
    "map": "lay out topics, compute overlays, export the map table, SVG, and figure",
    "eval": "ranking and classification metrics for the embeddings",
    "sweep": "train across margin / hard-negative settings and compare validation MAP",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="citemap", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"citemap {__version__}")
    parser.add_argument("--config", required=True, help="path to the JSON pipeline configuration")
    parser.add_argument("--seed", type=int, default=None, help="override every stage seed")
    parser.add_argument("--threads", type=int, default=1, help="worker count (results never depend on it)")
    parser.add_argument("--strict", action="store_true", help="reject unknown keys in corpus records")
    sub = parser.add_subparsers(dest="stage", required=True, metavar="stage")
    for stage in ALL_STAGES:
        sub.add_parser(stage, help=_STAGE_HELP[stage])
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        outputs = run_stage(
            args.stage, cfg, seed_override=args.seed, strict=args.strict, threads=args.threads
        )
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except MissingArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - anything else is an internal failure
        print(f"internal error: {exc}", file=sys.stderr)
        return 3
    for path in outputs:
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
