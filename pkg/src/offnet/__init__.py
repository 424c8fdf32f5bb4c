"""Offensive-tweet classifiers built from scratch on numpy.

Two systems: a weighted ensemble of a bidirectional-GRU and a multi-width
CNN text classifier over word embeddings, and a Bi-LSTM/Bi-GRU head over
precomputed contextual token vectors. Around them sit tweet cleaning,
embedding loading, synonym augmentation, AMSGrad training with early
stopping, and macro-F1 scoring of OLID-style TSV data.
"""
from .core import RngStream, activation, init_params, matmul
from .data_eval import (
    SCHEMAS,
    DataRecord,
    Dataset,
    LabelSchema,
    MetricsReport,
    get_schema,
    load_tsv,
    score,
    stratified_split,
    write_tsv,
)
from .embed_aug import (
    EmbeddingTable,
    SynonymTable,
    augment_corpus,
    build_synonym_table,
    load_embeddings,
    nearest_neighbors,
)
from .models import (
    Ensemble,
    EnsembleWeights,
    Model,
    ModelSpec,
    build_model,
    ensemble_predict,
)
from .optim import (
    Amsgrad,
    EncodedSet,
    TrainConfig,
    TrainHistory,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .textprep import CleanConfig, Vocab, clean_text, encode, prepare_contextual_input, tokenize

__version__ = "0.1.0"
