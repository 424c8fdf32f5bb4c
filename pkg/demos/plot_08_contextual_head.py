"""
Head over contextual vectors
============================

The contextual model reads precomputed per-token vectors (an external
encoder's output) through BiLSTM and BiGRU layers. The bundled file was
built from a stand-in encoder, so this only shows the mechanics.
"""

import numpy as np

from offnet import RngStream
from offnet.data_eval import get_schema, load_tsv
from offnet.models import ModelSpec, build_model, decide
from offnet.optim import TrainConfig, train
from offnet.pipeline import contextual_dataset, load_contextual
from offnet.synthetic import bundled_path

ids, vectors, mask = load_contextual(bundled_path("synthetic32_contextual.npz"))
print("vectors", vectors.shape, "first mask row", mask[0].astype(int))

ds = load_tsv(bundled_path("synthetic32.tsv"), get_schema("A"))
data = contextual_dataset(ds, bundled_path("synthetic32_contextual.npz"))
spec = ModelSpec.bert_bi_head(vectors.shape[2], seq_len=vectors.shape[1], lstm_units=32, rnn_units=32)
model = build_model(spec, RngStream(0))
model, history = train(model, data, data, TrainConfig(epochs=6, batch_size=16, lr=1e-3, optimizer="adam"))
print("val loss per epoch", np.round(history.val_loss, 4))
print("training accuracy", np.mean(decide(model.predict(data.x, data.mask)) == data.y))
