"""
Convolutional features over time
================================

Four filter heights slide over an embedded tweet; each filter keeps its
strongest response.
"""

import numpy as np

from offnet import RngStream
from offnet.layers import ConvBlock, ConvBranch, cnn_feature_extract

rng = RngStream(1)
L, d = 60, 300

# One branch of height 3 yields L - 3 + 1 positions per filter.
branch = ConvBranch.create(3, d, 36, rng)
fmap, _ = branch.forward(rng.normal(size=(1, L, d)))
print("feature map", fmap.shape)

# Heights 1, 3, 5 and 7 with 36 filters each give a 144-wide vector.
branches = [ConvBranch.create(h, d, 36, rng) for h in (1, 3, 5, 7)]
features = cnn_feature_extract(branches, rng.normal(size=(L, d)))
print("pooled features", features.shape)

# Every filter is followed by relu, so an all-zero input gives all zeros.
print("zero input ->", np.abs(cnn_feature_extract(branches, np.zeros((L, d)))).max())

# The block layer does the same for a batch and refuses too-short inputs.
block = ConvBlock.create((1, 3, 5, 7), 4, 2, rng)
try:
    block.forward(np.zeros((1, 6, 4)))
except ValueError as exc:
    print("short input:", exc)
