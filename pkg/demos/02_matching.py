"""
Optimal assignment and the set loss
===================================

The set loss pairs each prediction with one label so that the summed soft
dice loss is as small as possible. Order of the predictions does not matter.
"""

import numpy as np
import torch

from seqseg import brute_force_assignment, build_cost_matrix, hungarian, set_loss

rng = np.random.default_rng(0)

cost = rng.random((5, 5))
mapping, total = hungarian(cost)
print("mapping", mapping, "total %.6f" % total)

# exhaustive search agrees on small problems
bf_mapping, bf_total = brute_force_assignment(cost)
print("brute force", bf_mapping, "total %.6f" % bf_total)

# three labels, predictions are the same masks in shuffled order
labels = torch.tensor(rng.random((3, 8, 8)) > 0.5, dtype=torch.float64)
preds = labels[[2, 0, 1]].clone().requires_grad_(True)
print(np.round(build_cost_matrix(preds.detach(), labels), 3))

loss, m = set_loss(preds, labels)
print("set loss %.3g with mapping %s" % (loss.item(), m))

# the assignment is held fixed during backprop; gradients flow through the dice terms
loss.backward()
print("grad norm %.4f" % preds.grad.norm().item())
