"""
Weighted ensemble
=================

The recurrent and convolutional models vote with weights 0.6 and 0.4;
the weighted probability is thresholded at 0.5.
"""

import numpy as np

from offnet import RngStream
from offnet.data_eval import get_schema, load_tsv
from offnet.embed_aug import load_embeddings
from offnet.models import Ensemble, EnsembleWeights, ModelSpec, build_model, decide, ensemble_predict
from offnet.optim import TrainConfig, train
from offnet.pipeline import encode_dataset, token_lists
from offnet.synthetic import bundled_path
from offnet.textprep import Vocab

print(ensemble_predict(1.0, 0.0))   # 0.6
print(ensemble_predict(0.5, 0.25))  # 0.4

ds = load_tsv(bundled_path("synthetic32.tsv"), get_schema("A"))
table = load_embeddings(bundled_path("synthetic_embeddings.txt"))
vocab = Vocab.build(token_lists(ds))
data = encode_dataset(ds, vocab, 12)
emb = table.matrix_for(vocab)

members = []
for i, maker in enumerate((ModelSpec.keis_bigru, ModelSpec.keis_cnn)):
    model = build_model(maker(len(vocab), table.dimension, seq_len=12), RngStream(i), emb)
    train(model, data, data, TrainConfig(epochs=8, batch_size=8))
    members.append(model)

ens = Ensemble(*members, EnsembleWeights(0.6, 0.4))
p = ens.predict(data.x, data.mask)
for name, probs in (("bigru", members[0].predict(data.x, data.mask)),
                    ("cnn", members[1].predict(data.x, data.mask)), ("ensemble", p)):
    print("%-8s accuracy %.3f" % (name, np.mean(decide(probs) == data.y)))
