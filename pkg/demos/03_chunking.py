"""
Picking K masks out of a longer sequence
========================================

The decoder emits M masks. Training keeps K of them, one from each of K
contiguous chunks, so every part of the sequence is supervised.
"""

import numpy as np

from seqseg import partition, sample_per_chunk, select_ablation, select_inference
from seqseg.sequence_control import selection_indices

rng = np.random.default_rng(0)

part = partition(10, 3)
print("chunks", part.ranges, "sizes", part.sizes)

for _ in range(3):
    print("picked", sample_per_chunk(part, rng))

seq = list("abcdefghij")
print("chunked  ", [seq[i] for i in selection_indices(10, 3, "chunked", rng)])
# the two ablation selectors
for mode in ("random_k", "first_k"):
    print(mode.ljust(9), select_ablation(seq, 3, mode, rng))

# at inference time the first M_out masks are returned
print("inference", select_inference(seq, 4))

# over many draws every index is picked about equally often within its chunk
counts = np.zeros(10, dtype=int)
for _ in range(3000):
    counts[sample_per_chunk(part, rng)] += 1
print("counts", counts)
