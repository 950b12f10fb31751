"""Command-line entry point.

    evifuse <subcommand> --config <file> [--override key=value ...]

Subcommands map one-to-one onto pipeline stages; `run` chains them all.
Validation failures exit 2 with machine-readable JSON on stderr; runtime
failures exit 1 the same way.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .config import PipelineConfig
from .errors import EvifuseError, ValidationError
from .fixtures import FixtureSpec, write_fixture
from .metrics import render_report_text
from . import pipeline

STAGES = {
    "index": pipeline.stage_index,
    "query": pipeline.stage_query,
    "retrieve": pipeline.stage_retrieve,
    "rerank": pipeline.stage_rerank,
    "train": pipeline.stage_train,
    "l2r": pipeline.stage_l2r,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evifuse",
        description="Literature-augmented outcome prediction pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_command(name, help_text):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="pipeline config JSON")
        cmd.add_argument("--override", action="append", default=[],
                         help="dotted.path=value config override (repeatable)")
        return cmd

    add_config_command("index", "build the outcome-specific index")
    add_config_command("query", "parse notes and build retrieval queries")
    add_config_command("retrieve", "run sparse and dense retrieval")
    add_config_command("rerank", "pool, rescore, and select evidence")
    add_config_command("train", "train the outcome model (grid mode trains all points)")
    predict = add_config_command("predict", "emit prediction records for test notes")
    predict.add_argument("--model", default=None, help="model artifact override")
    evaluate = add_config_command("eval", "score predictions and write reports")
    evaluate.add_argument("--predictions", default=None,
                          help="prediction artifact to score (default: the run's)")
    evaluate.add_argument("--baseline", default=None,
                          help="baseline predictions for the confidence-increase report")
    add_config_command("l2r", "jointly train retriever projections and predictor")
    add_config_command("run", "run every stage in order")

    fixture = sub.add_parser("fixture", help="generate a synthetic corpus + notes")
    fixture.add_argument("--outdir", required=True)
    fixture.add_argument("--seed", type=int, default=0)
    fixture.add_argument("--docs", type=int, default=200)
    fixture.add_argument("--notes", type=int, default=60)
    fixture.add_argument("--classes", type=int, default=2)
    fixture.add_argument("--vocab", type=int, default=30)
    fixture.add_argument("--evidence-strength", type=float, default=0.9)
    fixture.add_argument("--noise-rate", type=float, default=0.1)
    return parser


def _fail(kind: str, exc: Exception, code: int) -> int:
    sys.stderr.write(json.dumps({"kind": kind, "error": str(exc)}) + "\n")
    return code


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("EVIFUSE_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)

    if args.command == "fixture":
        spec = FixtureSpec(seed=args.seed, n_docs=args.docs, n_notes=args.notes,
                           class_count=args.classes, vocab_size=args.vocab,
                           evidence_strength=args.evidence_strength,
                           noise_rate=args.noise_rate)
        try:
            paths = write_fixture(spec, args.outdir)
            config_path = _write_fixture_config(spec, args.outdir, paths)
        except EvifuseError as exc:
            return _fail("validation", exc, 2)
        print(json.dumps({**paths, "config": config_path}, indent=2, sort_keys=True))
        return 0

    try:
        config = PipelineConfig.load(args.config, args.override)
        config.validate()
    except EvifuseError as exc:
        return _fail("validation", exc, 2)

    try:
        if args.command == "run":
            report = pipeline.run_all_stages(config)
            print(render_report_text(report, title=f"outcome {config.outcome.outcome_id}"))
        elif args.command == "predict":
            if args.model:
                config.raw.setdefault("paths", {})["model"] = args.model
            path = pipeline.stage_predict(config)
            print(str(path))
        elif args.command == "eval":
            report = pipeline.stage_eval(
                config,
                predictions_path=Path(args.predictions) if args.predictions else None,
                baseline_path=Path(args.baseline) if args.baseline else None)
            print(render_report_text(report, title=f"outcome {config.outcome.outcome_id}"))
        else:
            result = STAGES[args.command](config)
            if isinstance(result, list):
                for path in result:
                    print(str(path))
            else:
                print(str(result))
    except ValidationError as exc:
        return _fail("validation", exc, 2)
    except EvifuseError as exc:
        return _fail("runtime", exc, 1)
    return 0


def _write_fixture_config(spec: FixtureSpec, outdir: str, paths: dict[str, str]) -> str:
    outcome = json.loads(Path(paths["outcome"]).read_text(encoding="utf-8"))
    config = {
        "outcome": outcome,
        "paths": {
            "workdir": str(Path(outdir) / "work"),
            "corpus": paths["corpus"],
            "notes": paths["notes"],
            "dictionary": paths["dictionary"],
            "lexicon": paths["lexicon"],
        },
        "providers": {"embedder": {"kind": "builtin", "dim": 256},
                      "scorer": {"kind": "builtin"}},
        "retrieval": {"pool_n": 20, "k": 5},
        "training": {"learning_rate": 5e-4, "epochs": 60, "grad_accumulation": 10,
                     "seed": spec.seed, "strategy": "soft_voting",
                     "train_fraction": 0.7},
        "eval": {"topk_fraction": 0.10, "ci_threshold": 0.10},
    }
    config_path = Path(outdir) / "config.json"
    config_path.write_text(json.dumps(config, indent=2, sort_keys=True) + "\n",
                           encoding="utf-8")
    return str(config_path)


if __name__ == "__main__":
    sys.exit(main())
