"""Evaluation, paired comparison, ablations and qualitative panels."""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from ..checkpoint import load_checkpoint
from ..errors import FormatError, InvalidArgumentError
from ..mask_ops import binarize
from ..metrics import SIGNIFICANCE_LEVEL, EvalScores, dice_avg, ged, wilcoxon_signed_rank
from ..model import upsample_nearest
from ..sequence_control import select_inference
from ..synthdata import dataset_checksum, read_split

# fields that legitimately differ between otherwise identical runs
NONDETERMINISTIC_FIELDS = ("wall_clock_s",)


@dataclass
class EvalReport:
    scores: EvalScores
    variant: str
    M_inference: int
    seed: int
    split: str = "test"
    checkpoint_sha256: str = ""
    dataset_sha256: str = ""
    wall_clock_s: float = 0.0
    csv_path: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "M_inference": self.M_inference,
            "seed": self.seed,
            "split": self.split,
            "checkpoint_sha256": self.checkpoint_sha256,
            "dataset_sha256": self.dataset_sha256,
            "mean_ged": self.scores.mean_ged,
            "mean_dice_avg": self.scores.mean_dice_avg,
            "num_samples": self.scores.num_samples,
            "csv_path": self.csv_path,
            "wall_clock_s": self.wall_clock_s,
            "scores": self.scores.to_dict(),
            **self.extra,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(scores=EvalScores.from_dict(d["scores"]), variant=d["variant"], M_inference=d["M_inference"],
                   seed=d["seed"], split=d.get("split", "test"), checkpoint_sha256=d.get("checkpoint_sha256", ""),
                   dataset_sha256=d.get("dataset_sha256", ""), wall_clock_s=d.get("wall_clock_s", 0.0),
                   csv_path=d.get("csv_path", ""))

    def save(self, json_path) -> None:
        """Write the JSON report plus a per-sample CSV next to it."""
        json_path = Path(json_path)
        json_path.parent.mkdir(parents=True, exist_ok=True)
        csv_path = json_path.with_suffix(".csv")
        self.csv_path = csv_path.name
        self.scores.write_csv(csv_path)
        json_path.write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, json_path) -> "EvalReport":
        json_path = Path(json_path)
        try:
            return cls.from_dict(json.loads(json_path.read_text()))
        except OSError as exc:
            raise FormatError(f"cannot read report: {exc.strerror}", json_path) from exc
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise FormatError("malformed report", json_path) from exc


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def predict_masks(model, samples, M: int, variant: str, chunk: int = 50) -> list[list[np.ndarray]]:
    """Binarised full-resolution masks, M per sample, in generation order."""
    d = model.config.downsample
    out = []
    with torch.no_grad():
        for start in range(0, len(samples), chunk):
            part = samples[start:start + chunk]
            images = np.stack([s.image for s in part])
            bboxes = np.array([s.bbox for s in part])
            if variant == "mcl":
                heads = model.config.num_heads
                if M > heads:
                    raise InvalidArgumentError(f"MCL model has {heads} heads; cannot emit {M} masks")
                logits = model.mcl_forward(images, bboxes, heads)
            else:
                logits = model.unroll(images, bboxes, M)
            probs = torch.sigmoid(upsample_nearest(logits, d)).numpy()
            for p in probs:
                out.append([binarize(m) for m in select_inference(list(p), M)])
    return out


def score_predictions(preds, samples) -> EvalScores:
    """GED and dice-avg of each sample's predicted masks against its labels."""
    return EvalScores(
        [s.sample_id for s in samples],
        [ged(p, s.labels) for p, s in zip(preds, samples)],
        [dice_avg(p, s.labels) for p, s in zip(preds, samples)],
    )


def evaluate(checkpoint, data_dir, split: str = "test", M_inference: int = 3) -> EvalReport:
    """Score a checkpoint on one split with M_inference masks per sample."""
    if M_inference < 1:
        raise InvalidArgumentError(f"M_inference must be >= 1, got {M_inference}")
    t0 = time.perf_counter()
    model, header = load_checkpoint(checkpoint)
    samples = read_split(Path(data_dir) / split)
    if samples and samples[0].image.shape != (model.config.image_size,) * 2:
        raise FormatError("checkpoint image size does not match the dataset", checkpoint)
    train_cfg = header["meta"].get("train_config", {})
    variant = train_cfg.get("variant", "seqsam")
    scores = score_predictions(predict_masks(model, samples, M_inference, variant), samples)
    return EvalReport(scores=scores, variant=variant, M_inference=M_inference, seed=train_cfg.get("seed", 0),
                      split=split, checkpoint_sha256=file_sha256(checkpoint),
                      dataset_sha256=dataset_checksum(data_dir), wall_clock_s=time.perf_counter() - t0)


def compare(report_a: EvalReport, report_b: EvalReport, metric: str = "ged", alpha: float = SIGNIFICANCE_LEVEL):
    """Paired Wilcoxon comparison of two reports on one metric.

    Returns a dict with the p-value, which report is better ("a", "b" or
    "tie") by mean score, and whether the difference is significant at
    ``alpha``.
    """
    if metric not in ("ged", "dice_avg"):
        raise InvalidArgumentError(f"metric must be 'ged' or 'dice_avg', got {metric!r}")
    if report_a.scores.sample_ids != report_b.scores.sample_ids:
        raise InvalidArgumentError("reports are not paired: sample ids differ")
    key = "per_sample_ged" if metric == "ged" else "per_sample_dice_avg"
    a = getattr(report_a.scores, key)
    b = getattr(report_b.scores, key)
    stat, p = wilcoxon_signed_rank(a, b)
    mean_a, mean_b = float(np.mean(a)), float(np.mean(b))
    if mean_a == mean_b:
        better = "tie"
    elif (mean_a < mean_b) == (metric == "ged"):
        better = "a"
    else:
        better = "b"
    return {"metric": metric, "statistic": stat, "p_value": p, "better": better,
            "significant": bool(p < alpha), "alpha": alpha, "mean_a": mean_a, "mean_b": mean_b}


def render_panels(checkpoint, data_dir, out_dir, split: str = "test", M: int = 3, limit: int | None = 8) -> list[Path]:
    """One PNG per sample: input | K labels | M binarised predictions."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise FormatError(f"cannot create output directory: {exc.strerror}", out_dir) from exc
    model, header = load_checkpoint(checkpoint)
    variant = header["meta"].get("train_config", {}).get("variant", "seqsam")
    samples = read_split(Path(data_dir) / split)
    if limit is not None:
        samples = samples[:limit]
    preds = predict_masks(model, samples, M, variant)
    written = []
    for s, masks in zip(samples, preds):
        tiles = [np.rint(np.clip(s.image, 0, 1) * 255).astype(np.uint8)]
        tiles += [(y * 255).astype(np.uint8) for y in s.labels]
        tiles += [(m * 255).astype(np.uint8) for m in masks]
        path = out_dir / f"{s.sample_id}_panel.png"
        try:
            Image.fromarray(np.concatenate(tiles, axis=1), mode="L").save(path, optimize=False)
        except OSError as exc:
            raise FormatError(f"cannot write panel: {exc.strerror}", path) from exc
        written.append(path)
    return written
