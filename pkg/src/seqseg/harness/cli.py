"""Command-line entry point: ``seqseg <subcommand> ...``.

Every subcommand exits 0 on success. Failures print a single line
``seqseg: error kind=<kind> message=<text>`` on stderr and exit 1.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..errors import SeqSegError
from ..synthdata import DatasetConfig, generate_dataset, write_dataset
from .ablation import ablate
from .config import TrainConfig, apply_seed_override, load_json
from .evaluation import EvalReport, compare, evaluate, render_panels
from .training import train


def _gen_data(args):
    cfg = DatasetConfig.from_dict(apply_seed_override(load_json(args.config)))
    write_dataset(generate_dataset(cfg), args.out, cfg)
    print(json.dumps({"out": str(args.out), "counts": cfg.split_counts(), "seed": cfg.seed}))


def _train_config(path) -> TrainConfig:
    return TrainConfig.from_dict(apply_seed_override(load_json(path)))


def _train(args):
    cfg = _train_config(args.config)
    records = train(cfg)
    best = min(records, key=lambda r: r["val_loss"])
    print(json.dumps({"checkpoint": cfg.checkpoint, "epochs": records[-1]["epoch"],
                      "best_epoch": best["epoch"], "best_val_loss": best["val_loss"]}))


def _eval(args):
    report = evaluate(args.checkpoint, args.data, args.split, args.num_masks)
    report.save(args.out)
    print(json.dumps({"out": str(args.out), "mean_ged": report.scores.mean_ged,
                      "mean_dice_avg": report.scores.mean_dice_avg, "num_samples": report.scores.num_samples}))


def _compare(args):
    result = compare(EvalReport.load(args.a), EvalReport.load(args.b), args.metric, args.alpha)
    print(json.dumps(result))


def _ablate(args):
    cfg = _train_config(args.config)
    table = ablate(cfg, args.out, args.num_masks)
    print(json.dumps({"out": str(args.out), "rows": table["rows"]}))


def _panels(args):
    written = render_panels(args.checkpoint, args.data, args.out, args.split, args.num_masks, args.limit)
    print(json.dumps({"out": str(args.out), "panels": len(written)}))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seqseg", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic multi-annotator dataset")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=_gen_data)

    p = sub.add_parser("train", help="train a model from a JSON config")
    p.add_argument("--config", required=True, type=Path)
    p.set_defaults(func=_train)

    p = sub.add_parser("eval", help="score a checkpoint on a dataset split")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--split", default="test")
    p.add_argument("--num-masks", type=int, default=3)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=_eval)

    p = sub.add_parser("compare", help="paired Wilcoxon test between two reports")
    p.add_argument("--a", required=True, type=Path)
    p.add_argument("--b", required=True, type=Path)
    p.add_argument("--metric", choices=("ged", "dice_avg"), default="ged")
    p.add_argument("--alpha", type=float, default=0.01)
    p.set_defaults(func=_compare)

    p = sub.add_parser("ablate", help="train and score the four ablation variants")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--num-masks", type=int, default=None, help="evaluation M (default: M_train)")
    p.set_defaults(func=_ablate)

    p = sub.add_parser("panels", help="render input | labels | predictions grids")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--split", default="test")
    p.add_argument("--num-masks", type=int, default=3)
    p.add_argument("--limit", type=int, default=8)
    p.set_defaults(func=_panels)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except SeqSegError as exc:
        print(f"seqseg: error kind={exc.kind} message={_one_line(exc)}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"seqseg: error kind=file message={_one_line(exc)}", file=sys.stderr)
        return 1
    return 0


def _one_line(exc) -> str:
    return " ".join(str(exc).split())


if __name__ == "__main__":
    sys.exit(main())
