"""
Training a BiGRU classifier
===========================

Clean the bundled 32-tweet corpus, train the recurrent model with
AMSGrad and early stopping, then save and reload the checkpoint.
"""

import os
import tempfile

import numpy as np

from offnet import RngStream
from offnet.data_eval import get_schema, load_tsv
from offnet.embed_aug import load_embeddings
from offnet.models import ModelSpec, build_model, decide
from offnet.optim import TrainConfig, load_checkpoint, save_checkpoint, train
from offnet.pipeline import encode_dataset, token_lists
from offnet.synthetic import bundled_path
from offnet.textprep import Vocab

ds = load_tsv(bundled_path("synthetic32.tsv"), get_schema("A"))
table = load_embeddings(bundled_path("synthetic_embeddings.txt"))
print(ds.records[0])

# The vocabulary comes from the cleaned training tokens; rows for known
# words are copied from the embedding table.
vocab = Vocab.build(token_lists(ds))
data = encode_dataset(ds, vocab, max_len=12)
spec = ModelSpec.keis_bigru(len(vocab), table.dimension, seq_len=12)
model = build_model(spec, RngStream(0), table.matrix_for(vocab))
print("parameters:", model.n_params())

# Validation here is the training set itself, which makes this an overfit check.
model, history = train(model, data, data, TrainConfig(epochs=15, batch_size=8))
print(history.to_csv())
acc = np.mean(decide(model.predict(data.x, data.mask)) == data.y)
print("best epoch", history.best_epoch, "training accuracy", acc)

with tempfile.TemporaryDirectory() as tmp:
    path = os.path.join(tmp, "bigru.ckpt")
    save_checkpoint(model, path, {"vocab": vocab.to_list()})
    again, meta = load_checkpoint(path, spec)
    same = all(again.params()[k].tobytes() == v.tobytes() for k, v in model.params().items())
    print("checkpoint %d bytes, bit-exact reload: %s" % (os.path.getsize(path), same))
