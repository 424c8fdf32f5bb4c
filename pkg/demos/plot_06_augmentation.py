"""
Synonym augmentation
====================

Frequent training words are mapped to their nearest embedding neighbour
and every tweet containing one gets a rewritten copy. The held-out set
uses rare forms the original training data never shows.
"""

from offnet import RngStream
from offnet.data_eval import score
from offnet.embed_aug import augment_corpus, build_synonym_table, expand, nearest_neighbors
from offnet.models import ModelSpec, build_model, decide
from offnet.optim import TrainConfig, train
from offnet.pipeline import encode_dataset, token_lists
from offnet.synthetic import make_synonym_corpus
from offnet.textprep import Vocab

train_ds, val_ds, table = make_synonym_corpus(200, 100, seed=0)
print(nearest_neighbors("insult0", table, 3))

syn = build_synonym_table(train_ds, table, top_n=1000, min_cos=0.7)
print(syn.to_tsv())
new = augment_corpus(train_ds, syn, rng=RngStream(0))
print(len(new), "synthetic records, e.g.", new.records[0])


def heldout_f1(ds):
    vocab = Vocab.build(token_lists(ds))
    tr, va = encode_dataset(ds, vocab, 8), encode_dataset(val_ds, vocab, 8)
    spec = ModelSpec.keis_bigru(len(vocab), table.dimension, seq_len=8)
    model = build_model(spec, RngStream(0), table.matrix_for(vocab))
    model, _ = train(model, tr, tr, TrainConfig())
    pred = decide(model.predict(va.x, va.mask))
    return score([ds.schema.labels[k] for k in pred], val_ds.labels, ds.schema).macro_f1


print("held-out macro-F1 without augmentation %.3f" % heldout_f1(train_ds))
print("held-out macro-F1 with augmentation    %.3f" % heldout_f1(expand(train_ds, new)))
