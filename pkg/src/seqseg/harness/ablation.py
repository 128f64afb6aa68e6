"""Train and score the four ablation variants on one dataset and seed."""

from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path

from ..errors import InvalidArgumentError
from ..synthdata import dataset_checksum
from .config import TrainConfig
from .evaluation import evaluate
from .training import train

ABLATIONS = {
    "full": {"selector": "chunked", "bptt": True},
    "random_k": {"selector": "random_k", "bptt": True},
    "first_k": {"selector": "first_k", "bptt": True},
    "no_bptt": {"selector": "chunked", "bptt": False},
}


def ablate(base: TrainConfig, out_dir, eval_masks: int | None = None, split: str = "test") -> dict:
    """Returns the table dict; also writes ``ablation.json`` and ``ablation.txt``."""
    if base.variant != "seqsam":
        raise InvalidArgumentError("ablations apply to the seqsam variant")
    if base.M_train <= base.K:
        raise InvalidArgumentError(f"ablations need M_train > K, got M_train={base.M_train}, K={base.K}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    eval_masks = eval_masks or base.M_train
    rows = []
    for name, overrides in ABLATIONS.items():
        cfg = replace(base, checkpoint=str(out_dir / name / "model.ckpt"), **overrides)
        records = train(cfg)
        report = evaluate(cfg.checkpoint, cfg.dataset, split, eval_masks)
        report.save(out_dir / name / f"report_M{eval_masks}.json")
        rows.append({
            "variant": name,
            "selector": cfg.selector,
            "bptt": cfg.bptt,
            "dice_avg": report.scores.mean_dice_avg,
            "ged": report.scores.mean_ged,
            "eval_M": eval_masks,
            "epochs": records[-1]["epoch"],
            "dataset_sha256": dataset_checksum(cfg.dataset),
            "checkpoint": str(Path(name) / "model.ckpt"),
        })
    table = {"seed": base.seed, "M_train": base.M_train, "K": base.K, "rows": rows}
    (out_dir / "ablation.json").write_text(json.dumps(table, indent=2))
    (out_dir / "ablation.txt").write_text(format_table(table))
    return table


def format_table(table: dict) -> str:
    lines = [f"ablation  seed={table['seed']}  M_train={table['M_train']}  K={table['K']}",
             f"{'variant':<10} {'dice_avg':>9} {'ged':>9} {'eval_M':>7}"]
    for r in table["rows"]:
        lines.append(f"{r['variant']:<10} {r['dice_avg']:>9.4f} {r['ged']:>9.4f} {r['eval_M']:>7d}")
    return "\n".join(lines) + "\n"
