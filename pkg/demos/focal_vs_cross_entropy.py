"""
Focal loss against cross-entropy
================================

Focal loss scales the cross-entropy of each row by (1 - p)^gamma, where p is
the probability given to the true class. Confident rows fade out and the hard
ones, often the rare classes, dominate the gradient.
"""

import numpy as np

from ctgsm.nn import FocalLossConfig, cross_entropy_loss, focal_loss

p_true = np.array([0.05, 0.2, 0.5, 0.8, 0.95, 0.99])
probs = np.stack([p_true, 1 - p_true], axis=1)
targets = np.zeros(len(p_true), dtype=int)

print(" p_true   CE      FL(g=1)  FL(g=2)  FL(g=5)")
for i, p in enumerate(p_true):
    row = probs[i:i + 1]
    ce, _ = cross_entropy_loss(row, targets[:1])
    fls = [focal_loss(row, targets[:1], FocalLossConfig(1.0, g))[0] for g in (1.0, 2.0, 5.0)]
    print(f" {p:5.2f}  {ce:6.3f}  " + "  ".join(f"{v:7.4f}" for v in fls))

# gamma = 0 gives back plain cross-entropy
print("gamma=0 equals CE:", focal_loss(probs, targets, FocalLossConfig(1.0, 0.0))[0] == cross_entropy_loss(probs, targets)[0])
