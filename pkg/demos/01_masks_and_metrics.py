"""
Masks, overlap scores and the set metrics
=========================================

Two overlapping squares, then a small set of predictions scored against a
set of annotator labels.
"""

import numpy as np

from seqseg import dice, dist, dice_avg, ged, iou, majority_vote

a = np.zeros((16, 16), dtype=np.uint8)
b = np.zeros((16, 16), dtype=np.uint8)
a[2:10, 2:10] = 1
b[4:12, 4:12] = 1

# dice and iou of the two squares; dist is 1 - iou
print("dice %.4f  iou %.4f  dist %.4f" % (dice(a, b), iou(a, b), dist(a, b)))

# two empty masks agree perfectly
empty = np.zeros_like(a)
print("empty vs empty iou:", iou(empty, empty))

# three annotators, shifted a pixel each way
labels = [np.roll(a, s, axis=1) for s in (-1, 0, 1)]
print("majority vote area:", int(majority_vote(labels).sum()), "of", int(a.sum()))

# a prediction set that matches the labels has GED near zero;
# collapsing every prediction onto one label pays for the missing spread
print("GED matched   %.4f" % ged(labels, labels))
print("GED collapsed %.4f" % ged([labels[1]] * 3, labels))
print("dice_avg collapsed %.4f" % dice_avg([labels[1]] * 3, labels))
