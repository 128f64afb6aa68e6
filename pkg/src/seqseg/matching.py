"""Set-based loss: cost matrices, Hungarian assignment and a brute-force oracle.

Predictions are matched to an unordered set of labels by the permutation
that minimises the summed pairwise soft dice loss. The assignment is found
on detached values and then held fixed, so gradients only flow through the
matched pairs.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
import torch

from .errors import InvalidArgumentError, SizeLimitError
from .mask_ops import soft_dice_loss

BRUTE_FORCE_MAX_K = 8
# relative slack used when deciding that two assignment totals tie
TIE_RTOL = 1e-12


def _check_cost(cost) -> np.ndarray:
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1] or cost.shape[0] < 1:
        raise InvalidArgumentError(f"cost matrix must be square and non-empty, got shape {cost.shape}")
    if not np.isfinite(cost).all():
        raise InvalidArgumentError("cost matrix has non-finite entries")
    if (cost < 0).any():
        raise InvalidArgumentError("cost matrix has negative entries")
    return cost


def _row_order_total(cost: np.ndarray, mapping) -> float:
    # summation order is fixed (row 0 first) so equal mappings give equal floats
    total = 0.0
    for m, k in enumerate(mapping):
        total += float(cost[m, k])
    return total


def _tie_tol(best: float) -> float:
    return TIE_RTOL * max(1.0, abs(best))


def _kuhn_munkres(cost: np.ndarray) -> np.ndarray:
    """O(n^3) shortest augmenting path Hungarian method with dual potentials.

    Returns ``mapping`` with ``mapping[row] = column``.
    """
    n = cost.shape[0]
    inf = math.inf
    # 1-based bookkeeping; index 0 is a virtual column used as the path root
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    col_owner = np.zeros(n + 1, dtype=np.int64)
    way = np.zeros(n + 1, dtype=np.int64)
    for row in range(1, n + 1):
        col_owner[0] = row
        j0 = 0
        minv = np.full(n + 1, inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = col_owner[j0]
            delta = inf
            j1 = 0
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[col_owner[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if col_owner[j0] == 0:
                break
        while True:
            j1 = way[j0]
            col_owner[j0] = col_owner[j1]
            j0 = j1
            if j0 == 0:
                break
    mapping = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        mapping[col_owner[j] - 1] = j - 1
    return mapping


def _optimal_total(cost: np.ndarray) -> float:
    if cost.shape[0] == 0:
        return 0.0
    return _row_order_total(cost, _kuhn_munkres(cost))


def hungarian(cost):
    """Minimum-cost bijection between rows (predictions) and columns (labels).

    Ties between optimal assignments are broken towards the lexicographically
    smallest mapping: row 0 takes the lowest column that still admits an
    optimal completion, then row 1, and so on.

    Returns ``(mapping, total_cost)`` where ``mapping[m]`` is the label
    index assigned to prediction ``m``.
    """
    cost = _check_cost(cost)
    n = cost.shape[0]
    mapping = _kuhn_munkres(cost)
    best = _row_order_total(cost, mapping)
    tol = _tie_tol(best)

    # lexicographic refinement among optimal mappings
    rows = list(range(n))
    free_cols = list(range(n))
    fixed = np.empty(n, dtype=np.int64)
    acc = 0.0
    for r in rows:
        rest_rows = rows[r + 1:]
        for c in free_cols:
            remaining = [k for k in free_cols if k != c]
            sub = cost[np.ix_(rest_rows, remaining)]
            if acc + cost[r, c] + _optimal_total(sub) <= best + tol:
                fixed[r] = c
                acc += cost[r, c]
                free_cols = remaining
                break
        else:  # pragma: no cover - the optimum always admits a completion
            fixed = mapping
            break
    return fixed, _row_order_total(cost, fixed)


def brute_force_assignment(cost):
    """Exact minimum over all K! permutations, for K <= 8.

    ``itertools.permutations`` yields mappings in lexicographic order, so
    the first one within tie tolerance of the optimum is the same mapping
    ``hungarian`` picks.
    """
    cost = _check_cost(cost)
    n = cost.shape[0]
    if n > BRUTE_FORCE_MAX_K:
        raise SizeLimitError(f"brute force limited to K <= {BRUTE_FORCE_MAX_K}, got {n}")
    perms = list(itertools.permutations(range(n)))
    totals = [_row_order_total(cost, p) for p in perms]
    best = min(totals)
    tol = _tie_tol(best)
    for p, t in zip(perms, totals):
        if t <= best + tol:
            return np.array(p, dtype=np.int64), t


def _stack(masks, dtype=None) -> torch.Tensor:
    if isinstance(masks, torch.Tensor):
        return masks if dtype is None else masks.to(dtype)
    items = [m if isinstance(m, torch.Tensor) else torch.as_tensor(np.asarray(m, dtype=np.float64)) for m in masks]
    if len({tuple(t.shape) for t in items}) > 1:
        raise InvalidArgumentError("all masks must share one shape")
    out = torch.stack(items)
    return out if dtype is None else out.to(dtype)


def pairwise_dice_loss(preds, labels) -> torch.Tensor:
    """Differentiable (..., K, K) matrix of soft dice losses, rows = preds."""
    return soft_dice_loss(preds.unsqueeze(-3), labels.unsqueeze(-4))


def build_cost_matrix(preds, labels) -> np.ndarray:
    """K x K matrix with entry [m, k] = soft_dice_loss(preds[m], labels[k])."""
    if len(preds) != len(labels) or len(preds) < 1:
        raise InvalidArgumentError(f"need matching non-empty lists, got {len(preds)} preds and {len(labels)} labels")
    p = _stack(preds)
    y = _stack(labels, p.dtype)
    if p.shape[1:] != y.shape[1:]:
        raise InvalidArgumentError(f"shape mismatch: {tuple(p.shape[1:])} vs {tuple(y.shape[1:])}")
    with torch.no_grad():
        return pairwise_dice_loss(p, y).double().cpu().numpy()


def set_loss(preds, labels):
    """Permutation-minimised sum of pairwise dice losses.

    ``preds`` may be a list of probability grids or a (K, H, W) tensor; when
    it requires grad, the returned loss is differentiable with the matching
    held fixed. Returns ``(loss, mapping)``; ``loss`` is a 0-d tensor.
    """
    if len(preds) != len(labels) or len(preds) < 1:
        raise InvalidArgumentError(f"need matching non-empty lists, got {len(preds)} preds and {len(labels)} labels")
    p = _stack(preds)
    y = _stack(labels, p.dtype)
    if p.shape[1:] != y.shape[1:]:
        raise InvalidArgumentError(f"shape mismatch: {tuple(p.shape[1:])} vs {tuple(y.shape[1:])}")
    pair = pairwise_dice_loss(p, y)
    mapping, _ = hungarian(pair.detach().double().cpu().numpy())
    idx = torch.as_tensor(mapping)
    chosen = pair[torch.arange(len(mapping)), idx]
    # accumulate in row order to mirror the cost-matrix total exactly
    loss = chosen[0]
    for m in range(1, len(mapping)):
        loss = loss + chosen[m]
    return loss, mapping


def batched_set_loss(probs: torch.Tensor, labels: torch.Tensor):
    """Set loss for a batch: probs and labels are (N, K, H, W).

    Returns the per-sample losses (N,) and the list of mappings.
    """
    pair = pairwise_dice_loss(probs, labels.to(probs.dtype))
    costs = pair.detach().double().cpu().numpy()
    mappings = [hungarian(c)[0] for c in costs]
    idx = torch.as_tensor(np.stack(mappings))
    chosen = torch.gather(pair, 2, idx.unsqueeze(-1)).squeeze(-1)
    return chosen.sum(dim=1), mappings
