"""Pixel-level mask arithmetic shared by the set loss and the metrics.

Binary masks are 2-D arrays holding only 0 and 1. Hard metrics (dice, iou,
dist) work on numpy arrays; ``soft_dice_loss`` works on torch tensors so it
can sit inside the training graph.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
import torch

from .errors import InvalidArgumentError

EPS = 1e-6


def as_binary_mask(a) -> np.ndarray:
    """Validate ``a`` as a binary mask and return it as a uint8 array."""
    arr = np.asarray(a)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidArgumentError(f"mask must be a non-empty 2-D grid, got shape {arr.shape}")
    if not np.isin(arr, (0, 1)).all():
        raise InvalidArgumentError("mask elements must be exactly 0 or 1")
    return arr.astype(np.uint8, copy=False)


def _pair(a, b):
    a = as_binary_mask(a)
    b = as_binary_mask(b)
    if a.shape != b.shape:
        raise InvalidArgumentError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a.astype(bool), b.astype(bool)


def dice(a, b) -> float:
    """Smoothed dice score (2|a&b| + eps) / (|a| + |b| + eps)."""
    a, b = _pair(a, b)
    inter = np.count_nonzero(a & b)
    total = np.count_nonzero(a) + np.count_nonzero(b)
    return (2.0 * inter + EPS) / (total + EPS)


def iou(a, b) -> float:
    """Intersection over union; two empty masks count as perfect agreement."""
    a, b = _pair(a, b)
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


def dist(a, b) -> float:
    """The GED pairwise distance, 1 - IoU."""
    return 1.0 - iou(a, b)


def soft_dice_loss(p, y) -> torch.Tensor:
    """Soft dice loss 1 - (2 sum(p*y) + eps) / (sum(p) + sum(y) + eps).

    ``p`` holds probabilities, ``y`` a binary target. Leading batch
    dimensions are allowed: the reduction is over the last two axes, so
    ``p`` of shape (..., H, W) yields a loss of shape (...). Numpy inputs
    are converted to float64 tensors.
    """
    if not isinstance(p, torch.Tensor):
        p = torch.as_tensor(np.asarray(p, dtype=np.float64))
    if not isinstance(y, torch.Tensor):
        y = torch.as_tensor(np.asarray(y), dtype=p.dtype)
    y = y.to(p.dtype)
    if p.dim() < 2 or p.shape[-2:] != y.shape[-2:]:
        raise InvalidArgumentError(f"shape mismatch: {tuple(p.shape)} vs {tuple(y.shape)}")
    inter = (p * y).sum(dim=(-2, -1))
    total = p.sum(dim=(-2, -1)) + y.sum(dim=(-2, -1))
    return 1.0 - (2.0 * inter + EPS) / (total + EPS)


def binarize(p, threshold: float = 0.5) -> np.ndarray:
    """Threshold a probability grid; a pixel is foreground iff p >= threshold."""
    if not 0.0 < threshold < 1.0:
        raise InvalidArgumentError(f"threshold must lie in (0, 1), got {threshold}")
    if isinstance(p, torch.Tensor):
        p = p.detach().cpu().numpy()
    return (np.asarray(p) >= threshold).astype(np.uint8)


def majority_vote(masks: Sequence) -> np.ndarray:
    """Pixel-wise strict majority. Even-count ties resolve to background."""
    if len(masks) == 0:
        raise InvalidArgumentError("majority_vote needs at least one mask")
    stack = np.stack([as_binary_mask(m) for m in masks]) if _same_shape(masks) else None
    if stack is None:
        raise InvalidArgumentError("all masks must share one shape")
    votes = stack.sum(axis=0, dtype=np.int64)
    return (2 * votes > len(masks)).astype(np.uint8)


def _same_shape(masks) -> bool:
    shapes = {np.shape(m) for m in masks}
    return len(shapes) == 1
