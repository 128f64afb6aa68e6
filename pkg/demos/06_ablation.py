"""
Ablation of the mask selector and of backprop through the loop
==============================================================

Trains the four variants on a small dataset and prints the table. Numbers
from a run this short are noisy; the acceptance suite averages three seeds.
"""

import tempfile
from pathlib import Path

from seqseg import DatasetConfig, generate_dataset, write_dataset
from seqseg.harness import TrainConfig, ablate
from seqseg.harness.ablation import format_table

work = Path(tempfile.mkdtemp())
write_dataset(generate_dataset(DatasetConfig(num_samples=240, seed=0)), work / "data")

base = TrainConfig(dataset=str(work / "data"), checkpoint=str(work / "base.ckpt"), M_train=6, max_epochs=3)
table = ablate(base, work / "ablation", eval_masks=10)
print(format_table(table))
