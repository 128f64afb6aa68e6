"""
A small synthetic dataset
=========================

Each sample is a grey image with one blob and K annotator masks that
disagree along the boundary. Some annotators leave the mask empty.
"""

import sys
import tempfile

import numpy as np

from seqseg import DatasetConfig, generate_dataset, read_dataset, write_dataset
from seqseg.synthdata import dataset_checksum

cfg = DatasetConfig(num_samples=60, seed=3)
splits = generate_dataset(cfg)
print({k: len(v) for k, v in splits.items()})

s = splits["train"][0]
print("image", s.image.shape, s.image.dtype, "labels", np.shape(s.labels), "bbox", s.bbox)
areas = [int(l.sum()) for l in s.labels]
print("annotator areas", areas)

empty = np.mean([np.mean([l.sum() == 0 for l in smp.labels]) for smp in splits["train"]])
print("fraction of empty labels %.3f" % empty)

out = sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp()
write_dataset(splits, out, cfg)
back = read_dataset(out)
print("round trip equal:", np.array_equal(back["train"][0].labels, s.labels))
print("written to", out, "sha256", dataset_checksum(out)[:16])
