"""
Recurrent cells by hand
=======================

A GRU step, an LSTM step and a bidirectional pass, followed by a finite
difference check of the backward rule.
"""

import numpy as np

from offnet import RngStream
from offnet.gradcheck import check_layer
from offnet.layers import Bidirectional, GruCell, LstmCell, bidirectional_run, gru_step, lstm_step

# A one-unit GRU with every weight 1 and every bias 0. From a zero state
# only the input path is active: z = r = sigmoid(1), h = z * tanh(1).
cell = GruCell.constant(1, 1, 1.0, bias=0.0)
trace = gru_step(cell, [1.0], [0.0])
print("GRU  z=%.4f r=%.4f h=%.4f" % (trace.z_t[0], trace.r_t[0], trace.h_t[0]))

# The same cell for an LSTM: c = i * tanh(1), h = o * tanh(c).
(h, c), _ = lstm_step(LstmCell.constant(1, 1, 1.0, bias=0.0), [1.0], ([0.0], [0.0]))
print("LSTM c=%.4f h=%.4f" % (c[0], h[0]))

# Bidirectional: forward states and backward states are concatenated per step.
rng = RngStream(0)
fwd, bwd = GruCell.create(8, 16, rng), GruCell.create(8, 16, rng)
seq = rng.normal(size=(10, 8))
out = bidirectional_run(fwd, bwd, seq)
print("bidirectional output", out.shape)

# Backward pass against central differences. Errors near 1e-9 are expected.
layer = Bidirectional.gru(3, 4, rng)
errors = check_layer(layer, rng.normal(size=(2, 5, 3)))
print("worst relative error %.2e" % max(errors.values()))
