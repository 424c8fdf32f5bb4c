"""The three classifier architectures and the weighted two-model ensemble."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .core import RngStream
from .layers import (
    EVAL,
    Bidirectional,
    ConvBlock,
    Dense,
    Dropout,
    Embedding,
    GaussianNoise,
    GlobalAveragePool,
    Recurrent,
    regularized_names,
)

ARCHITECTURES = ("keis_bigru", "keis_cnn", "bert_bi_head")
HEADS = {"binary": 1, "three_class": 3}


@dataclass(frozen=True)
class ModelSpec:
    """Declarative architecture description.

    ``input_dim`` is the word-embedding width for the two token-id
    architectures and the contextual-vector width for ``bert_bi_head``.
    Use the ``keis_bigru`` / ``keis_cnn`` / ``bert_bi_head`` constructors to
    get the reference layer sizes.
    """

    architecture: str
    input_dim: int
    head: str = "binary"
    seq_len: int = 60
    vocab_size: int = 0
    rnn_units: int = 128
    lstm_units: int = 300
    dense_units: int = 35
    noise_std: float = 0.1
    dropout: float = 0.2
    filter_heights: tuple = (1, 3, 5, 7)
    n_filters: int = 36
    bidirectional_gru: bool = True
    trainable_embeddings: bool = True
    head_stddev: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "filter_heights", tuple(int(h) for h in self.filter_heights))
        self.validate()

    @classmethod
    def keis_bigru(cls, vocab_size, embed_dim=300, head="binary", seq_len=60, **kw):
        return cls("keis_bigru", embed_dim, head, seq_len, vocab_size,
                   **{"rnn_units": 128, "dropout": 0.2, **kw})

    @classmethod
    def keis_cnn(cls, vocab_size, embed_dim=300, head="binary", seq_len=60, **kw):
        return cls("keis_cnn", embed_dim, head, seq_len, vocab_size, **{"dropout": 0.25, **kw})

    @classmethod
    def bert_bi_head(cls, context_dim=768, head="binary", seq_len=60, **kw):
        return cls("bert_bi_head", context_dim, head, seq_len,
                   **{"rnn_units": 300, "lstm_units": 300, "dropout": 0.2, **kw})

    @property
    def token_input(self):
        return self.architecture != "bert_bi_head"

    @property
    def n_classes(self):
        return 2 if self.head == "binary" else 3

    def validate(self):
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.architecture!r}; expected one of {ARCHITECTURES}")
        if self.head not in HEADS:
            raise ValueError(f"unknown head {self.head!r}; expected 'binary' or 'three_class'")
        if self.input_dim < 1 or self.seq_len < 1:
            raise ValueError("input_dim and seq_len must be positive")
        if self.token_input and self.vocab_size < 2:
            raise ValueError("token-id architectures need vocab_size >= 2 (padding and OOV rows)")
        if self.architecture == "keis_cnn" and self.seq_len < max(self.filter_heights):
            raise ValueError(
                f"keis_cnn needs seq_len >= {max(self.filter_heights)} (largest filter height), "
                f"got {self.seq_len}"
            )
        if not 0 <= self.dropout < 1 or self.noise_std < 0:
            raise ValueError("dropout must lie in [0, 1) and noise_std must be non-negative")

    def to_dict(self):
        d = asdict(self)
        d["filter_heights"] = list(self.filter_heights)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def digest(self):
        """Short stable hash of the spec, used to match checkpoints."""
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]


class Model:
    """A sequential stack of layers ending in a sigmoid or softmax head."""

    def __init__(self, spec: ModelSpec, layers):
        self.spec = spec
        self.layers = list(layers)
        names = [l.name for l in self.layers]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate layer names {names}")

    def __repr__(self):
        return f"Model({self.spec.architecture}, head={self.spec.head}, params={self.n_params()})"

    def params(self):
        out = {}
        for layer in self.layers:
            for k, v in layer.params().items():
                out[f"{layer.name}.{k}"] = v
        return out

    def regularized(self):
        return [f"{layer.name}.{k}" for layer in self.layers for k in regularized_names(layer)]

    def n_params(self):
        return int(sum(p.size for p in self.params().values()))

    def _check_input(self, x, mask):
        x = np.asarray(x)
        if self.spec.token_input:
            if x.ndim != 2 or not np.issubdtype(x.dtype, np.integer):
                raise ValueError(f"{self.spec.architecture} expects integer ids [batch, time], got {x.dtype} {list(x.shape)}")
        elif x.ndim != 3 or x.shape[-1] != self.spec.input_dim:
            raise ValueError(
                f"bert_bi_head expects [batch, time, {self.spec.input_dim}] vectors, got {list(x.shape)}"
            )
        if mask is not None and np.shape(mask) != x.shape[:2]:
            raise ValueError(f"mask shape {list(np.shape(mask))} does not match input {list(x.shape[:2])}")
        return x

    def forward(self, x, mask=None, mode=EVAL, rng=None):
        """Run every layer; returns ``(probs, traces)``.

        ``probs`` is ``[batch]`` (positive-class probability) for a binary
        head and ``[batch, 3]`` for a three-class head.
        """
        h = self._check_input(x, mask)
        traces = []
        for layer in self.layers:
            h, tr = layer.forward(h, mask, mode, rng)
            traces.append(tr)
        if self.spec.head == "binary":
            h = h[:, 0]
        return h, traces

    def backward(self, traces, grad_probs):
        g = np.asarray(grad_probs, dtype=np.float64)
        if self.spec.head == "binary":
            g = g[:, None]
        grads = {}
        for layer, tr in zip(reversed(self.layers), reversed(traces)):
            g, lg = layer.backward(tr, g)
            for k, v in lg.items():
                grads[f"{layer.name}.{k}"] = v
        return grads

    def predict(self, x, mask=None):
        return self.forward(x, mask, EVAL)[0]

    def get_weights(self):
        return {k: v.copy() for k, v in self.params().items()}

    def set_weights(self, weights):
        params = self.params()
        if set(weights) != set(params):
            raise ValueError("weight names do not match the model's parameters")
        for k, v in weights.items():
            if params[k].shape != np.shape(v):
                raise ValueError(f"{k}: shape {list(np.shape(v))} != {list(params[k].shape)}")
            params[k][...] = v


def build_model(spec: ModelSpec, rng: RngStream, embedding_matrix=None) -> Model:
    """Instantiate ``spec``.

    Kernels use Glorot-uniform, biases zeros (LSTM forget bias one), the
    output layer of ``bert_bi_head`` a truncated normal. For token-id
    architectures ``embedding_matrix`` (``[vocab_size, input_dim]``) seeds
    the lookup table; otherwise rows are U(-0.05, 0.05) with a zero
    padding row.
    """
    spec.validate()
    n_out = HEADS[spec.head]
    head_act = "sigmoid" if spec.head == "binary" else "softmax"
    d = spec.input_dim
    layers = []

    if spec.token_input:
        if embedding_matrix is None:
            table = rng.uniform(-0.05, 0.05, (spec.vocab_size, d))
            table[0] = 0.0
        else:
            table = np.array(embedding_matrix, dtype=np.float64)
            if table.shape != (spec.vocab_size, d):
                raise ValueError(
                    f"embedding matrix shape {list(table.shape)} != [{spec.vocab_size}, {d}]"
                )
        layers.append(Embedding(table, spec.trainable_embeddings))

    if spec.architecture == "keis_bigru":
        layers += [
            Bidirectional.gru(d, spec.rnn_units, rng, "bigru"),
            GaussianNoise(spec.noise_std),
            GlobalAveragePool(),
            Dense.create(2 * spec.rnn_units, spec.dense_units, rng, act="relu", name="dense"),
            Dropout(spec.dropout),
            Dense.create(spec.dense_units, n_out, rng, act=head_act, name="out"),
        ]
    elif spec.architecture == "keis_cnn":
        block = ConvBlock.create(spec.filter_heights, d, spec.n_filters, rng)
        layers += [
            GaussianNoise(spec.noise_std),
            block,
            Dropout(spec.dropout),
            Dense.create(block.output_size, spec.dense_units, rng, act="relu", name="dense"),
            Dense.create(spec.dense_units, n_out, rng, act=head_act, name="out"),
        ]
    else:
        lstm = Bidirectional.lstm(d, spec.lstm_units, rng, "bilstm")
        if spec.bidirectional_gru:
            gru = Bidirectional.gru(lstm.output_size, spec.rnn_units, rng, "bigru")
            width = gru.output_size
        else:
            gru = Recurrent.gru(lstm.output_size, spec.rnn_units, rng, "gru")
            width = spec.rnn_units
        layers += [
            GaussianNoise(spec.noise_std),
            lstm,
            gru,
            GlobalAveragePool(),
            Dropout(spec.dropout),
            Dense.create(width, n_out, rng, act=head_act, init="truncated_normal",
                         name="out", stddev=spec.head_stddev),
        ]
    return Model(spec, layers)


def predict(model: Model, x, mask=None):
    return model.predict(x, mask)


# ---------------------------------------------------------------------------
# ensemble


@dataclass(frozen=True)
class EnsembleWeights:
    w_bigru: float = 0.6
    w_cnn: float = 0.4

    def __post_init__(self):
        if self.w_bigru < 0 or self.w_cnn < 0 or abs(self.w_bigru + self.w_cnn - 1.0) > 1e-12:
            raise ValueError(
                f"ensemble weights must be non-negative and sum to 1, got {self.w_bigru}, {self.w_cnn}"
            )


def ensemble_predict(p_bigru, p_cnn, w: EnsembleWeights = EnsembleWeights()):
    """Weighted average of the two members' probabilities."""
    p1 = np.asarray(p_bigru, dtype=np.float64)
    p2 = np.asarray(p_cnn, dtype=np.float64)
    if np.any((p1 < 0) | (p1 > 1)) or np.any((p2 < 0) | (p2 > 1)):
        raise ValueError("ensemble inputs must be probabilities in [0, 1]")
    out = w.w_bigru * p1 + w.w_cnn * p2
    return float(out) if out.ndim == 0 else out


@dataclass
class Ensemble:
    bigru: Model
    cnn: Model
    weights: EnsembleWeights = field(default_factory=EnsembleWeights)

    def __post_init__(self):
        if self.bigru.spec.head != self.cnn.spec.head:
            raise ValueError("ensemble members must share a head type")

    @property
    def spec(self):
        return self.bigru.spec

    def predict(self, x, mask=None):
        return ensemble_predict(self.bigru.predict(x, mask), self.cnn.predict(x, mask), self.weights)


def decide(probs):
    """Class indices from head outputs.

    Binary: index 1 (positive class) when ``p > 0.5``, otherwise 0, so an
    exact tie goes to the negative class. Three-class: argmax.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim == 1:
        return (probs > 0.5).astype(np.int64)
    return np.argmax(probs, axis=-1)


def with_head(spec: ModelSpec, head: str) -> ModelSpec:
    return replace(spec, head=head)
