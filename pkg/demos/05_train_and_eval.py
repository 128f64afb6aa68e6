"""
Training and scoring one model
==============================

A short run on a small dataset. The full setting uses the default dataset
size and up to 200 epochs; this one is cut down to finish in about a minute.
"""

import tempfile
from pathlib import Path

from seqseg import DatasetConfig, generate_dataset, write_dataset
from seqseg.harness import TrainConfig, compare, evaluate, train

work = Path(tempfile.mkdtemp())
write_dataset(generate_dataset(DatasetConfig(num_samples=240, seed=0)), work / "data")

cfg = TrainConfig(dataset=str(work / "data"), checkpoint=str(work / "seq.ckpt"), M_train=3, max_epochs=4)
for rec in train(cfg):
    print("epoch", rec["epoch"], "val loss %.4f" % rec["val_loss"])

# the recurrent model can be asked for more masks than it was trained on
for M in (3, 6):
    rep = evaluate(cfg.checkpoint, work / "data", "test", M)
    print("M=%d  GED %.4f  dice_avg %.4f" % (M, rep.scores.mean_ged, rep.scores.mean_dice_avg))

# a multi-head baseline with the same budget
mcl = TrainConfig(dataset=str(work / "data"), checkpoint=str(work / "mcl.ckpt"), variant="mcl", M_train=3, max_epochs=4)
train(mcl)
a = evaluate(cfg.checkpoint, work / "data", "test", 3)
b = evaluate(mcl.checkpoint, work / "data", "test", 3)
print(compare(a, b, metric="ged"))
