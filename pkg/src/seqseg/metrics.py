"""Distribution-aware evaluation metrics and paired significance testing."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import norm, rankdata

from .errors import InvalidArgumentError
from .mask_ops import as_binary_mask, dice, majority_vote

EXACT_MAX_N = 12
SIGNIFICANCE_LEVEL = 0.01


def _check_set(masks, what):
    if len(masks) == 0:
        raise InvalidArgumentError(f"{what} must be non-empty")
    return [as_binary_mask(m).astype(bool) for m in masks]


def _pairwise_dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # a: (P, J), b: (Q, J) booleans -> (P, Q) matrix of 1 - IoU
    a = a.astype(np.int64)
    b = b.astype(np.int64)
    inter = a @ b.T
    union = a.sum(1)[:, None] + b.sum(1)[None, :] - inter
    out = np.ones(inter.shape)
    nz = union > 0
    out[nz] = inter[nz] / union[nz]
    return 1.0 - out


def ged(pred_masks: Sequence, label_masks: Sequence) -> float:
    """Generalised energy distance between a prediction set and a label set.

    Each expectation is the mean over all ordered pairs, self-pairs
    included, so ``ged(A, A) == 0`` exactly. The finite-sample value can be
    negative and is returned unclipped.
    """
    preds = _check_set(pred_masks, "pred_masks")
    labels = _check_set(label_masks, "label_masks")
    if len({m.shape for m in preds + labels}) != 1:
        raise InvalidArgumentError("all masks must share one shape")
    p = np.stack(preds).reshape(len(preds), -1)
    y = np.stack(labels).reshape(len(labels), -1)
    cross = _pairwise_dist(y, p).mean()
    within_labels = _pairwise_dist(y, y).mean()
    within_preds = _pairwise_dist(p, p).mean()
    return float(2.0 * cross - within_labels - within_preds)


def dice_avg(pred_masks: Sequence, label_masks: Sequence) -> float:
    """Majority-vote the predictions, then average dice against every label."""
    _check_set(pred_masks, "pred_masks")
    _check_set(label_masks, "label_masks")
    vote = majority_vote(pred_masks)
    return float(np.mean([dice(vote, y) for y in label_masks]))


def _signed_ranks(scores_a, scores_b):
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise InvalidArgumentError(f"paired scores must be equal-length 1-D, got {a.shape} and {b.shape}")
    if a.size < 1:
        raise InvalidArgumentError("need at least one pair")
    d = a - b
    d = d[d != 0]
    ranks = rankdata(np.abs(d))  # average ranks for ties
    return d, ranks


def _exact_lower_tail_count(doubled_ranks: np.ndarray, w2: int) -> tuple[int, int]:
    """Count sign patterns with W+ <= w and with W+ >= S - w.

    Works on doubled ranks so tied half-ranks stay integral.
    """
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=object)
    counts[0] = 1
    for r in doubled_ranks.astype(np.int64):
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted
    w_plus = np.arange(total + 1)
    hit = (w_plus <= w2) | (w_plus >= total - w2)
    return int(counts[hit].sum()), 2 ** len(doubled_ranks)


def wilcoxon_signed_rank(scores_a, scores_b):
    """Two-sided Wilcoxon signed-rank test on paired scores.

    Zero differences are dropped and tied magnitudes get average ranks. The
    statistic is ``min(W+, W-)``. For up to 12 non-zero differences the p-value
    is the exact fraction of the 2**n equally likely sign patterns whose
    statistic is at most the observed one; beyond that a normal
    approximation with continuity correction and tie-corrected variance is
    used. Returns ``(statistic, p_value)``.
    """
    d, ranks = _signed_ranks(scores_a, scores_b)
    n = d.size
    if n == 0:
        return 0.0, 1.0
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    stat = min(w_plus, w_minus)
    if n <= EXACT_MAX_N:
        hits, total = _exact_lower_tail_count(np.rint(2 * ranks), int(round(2 * stat)))
        return stat, hits / total
    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - (tie_counts**3 - tie_counts).sum() / 48.0
    if var <= 0:
        return stat, 1.0
    z = (abs(stat - mean) - 0.5) / math.sqrt(var)
    p = 2.0 * norm.sf(max(z, 0.0))
    return stat, float(min(1.0, p))


@dataclass
class EvalScores:
    """Per-sample and aggregated evaluation scores."""

    sample_ids: list[str]
    per_sample_ged: list[float]
    per_sample_dice_avg: list[float]
    mean_ged: float = field(init=False)
    mean_dice_avg: float = field(init=False)
    num_samples: int = field(init=False)

    def __post_init__(self):
        n = len(self.sample_ids)
        if len(self.per_sample_ged) != n or len(self.per_sample_dice_avg) != n:
            raise InvalidArgumentError("per-sample lists must match the number of sample ids")
        self.num_samples = n
        self.mean_ged = float(np.mean(self.per_sample_ged)) if n else float("nan")
        self.mean_dice_avg = float(np.mean(self.per_sample_dice_avg)) if n else float("nan")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "EvalScores":
        return cls(list(data["sample_ids"]), list(data["per_sample_ged"]), list(data["per_sample_dice_avg"]))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["sample_id", "ged", "dice_avg"])
            for row in zip(self.sample_ids, self.per_sample_ged, self.per_sample_dice_avg):
                writer.writerow([row[0], repr(row[1]), repr(row[2])])

    @classmethod
    def read_csv(cls, path) -> "EvalScores":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls([r["sample_id"] for r in rows], [float(r["ged"]) for r in rows],
                   [float(r["dice_avg"]) for r in rows])

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))
