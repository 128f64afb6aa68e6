"""Choosing which of the M generated masks meet the K labels.

Training with M > K partitions the sequence into K contiguous chunks and
draws one mask per chunk. Inference with fewer masks than were trained
truncates the sequence. The two ablation selectors (random subset, first
K) live here too.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidArgumentError


@dataclass(frozen=True)
class ChunkPartition:
    """K contiguous, ordered, non-empty ranges covering range(M)."""

    ranges: tuple[range, ...]

    @property
    def sizes(self) -> list[int]:
        return [len(r) for r in self.ranges]

    @property
    def total(self) -> int:
        return sum(self.sizes)


def partition(M: int, K: int) -> ChunkPartition:
    """Balanced contiguous partition of M positions into K chunks.

    The first ``M % K`` chunks get ``ceil(M / K)`` elements and the rest
    ``floor(M / K)``, e.g. M=10, K=3 gives sizes [4, 3, 3].
    """
    if K < 1 or M < K:
        raise InvalidArgumentError(f"need M >= K >= 1, got M={M}, K={K}")
    base, extra = divmod(M, K)
    ranges = []
    start = 0
    for k in range(K):
        size = base + (1 if k < extra else 0)
        ranges.append(range(start, start + size))
        start += size
    return ChunkPartition(tuple(ranges))


def sample_per_chunk(part: ChunkPartition, rng: np.random.Generator) -> list[int]:
    """Draw one index uniformly from each chunk, in chunk order."""
    return [int(r.start + rng.integers(len(r))) for r in part.ranges]


def select_inference(seq: Sequence, M_out: int) -> list:
    """Keep the first ``M_out`` generated masks."""
    if M_out < 1 or M_out > len(seq):
        raise InvalidArgumentError(f"M_out must lie in [1, {len(seq)}], got {M_out}")
    return list(seq[:M_out])


SELECTORS = ("chunked", "random_k", "first_k")


def selection_indices(M: int, K: int, mode: str, rng: np.random.Generator) -> list[int]:
    """Indices into a length-M sequence picked by one of the training selectors."""
    if K < 1 or K > M:
        raise InvalidArgumentError(f"need 1 <= K <= M, got K={K}, M={M}")
    if mode == "chunked":
        return sample_per_chunk(partition(M, K), rng)
    if mode == "first_k":
        return list(range(K))
    if mode == "random_k":
        return sorted(int(i) for i in rng.choice(M, size=K, replace=False))
    raise InvalidArgumentError(f"unknown selector {mode!r}; expected one of {SELECTORS}")


def select_ablation(seq: Sequence, K: int, mode: str, rng: np.random.Generator | None = None) -> list:
    """Ablation selectors.

    ``random_k`` picks K masks uniformly without replacement and keeps them
    in ascending sequence order; ``first_k`` keeps the prefix.
    """
    if mode not in ("random_k", "first_k"):
        raise InvalidArgumentError(f"ablation mode must be 'random_k' or 'first_k', got {mode!r}")
    if K > len(seq):
        raise InvalidArgumentError(f"K={K} exceeds sequence length {len(seq)}")
    if mode == "random_k" and rng is None:
        raise InvalidArgumentError("random_k needs an rng")
    idx = selection_indices(len(seq), K, mode, rng)
    return [seq[i] for i in idx]
