"""Word-embedding tables, cosine neighbour search and synonym augmentation."""
from __future__ import annotations

import gzip
import warnings
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .core import RngStream
from .data_eval import DataRecord, Dataset, atomic_write_text
from .textprep import OOV, PAD, Vocab, tokenize


class EmbeddingError(ValueError):
    pass


class EmbeddingTable:
    """Immutable ``word -> vector`` map of a fixed dimension."""

    def __init__(self, words, vectors):
        vectors = np.asarray(vectors, dtype=np.float64)
        words = list(words)
        if vectors.ndim != 2 or len(words) != len(vectors):
            raise EmbeddingError("need one vector row per word")
        if len(set(words)) != len(words):
            raise EmbeddingError("words must be unique")
        self.words = words
        self.vectors = vectors
        self.vectors.setflags(write=False)
        self.index = {w: i for i, w in enumerate(words)}
        norms = np.linalg.norm(vectors, axis=1)
        self._norms = norms

    @classmethod
    def from_dict(cls, mapping):
        words = list(mapping)
        return cls(words, np.array([mapping[w] for w in words], dtype=np.float64).reshape(len(words), -1))

    @property
    def dimension(self):
        return self.vectors.shape[1]

    def __len__(self):
        return len(self.words)

    def __contains__(self, word):
        return word in self.index

    def __getitem__(self, word):
        return self.vectors[self.index[word]]

    def cosine(self, a, b):
        va, vb = self[a], self[b]
        na, nb = self._norms[self.index[a]], self._norms[self.index[b]]
        if na == 0 or nb == 0:
            return 0.0
        return float(va @ vb / (na * nb))

    def matrix_for(self, vocab: Vocab, rng: RngStream | None = None, oov_scale=0.05):
        """``[len(vocab), dim]`` lookup rows; padding is zero, unknown words U(-s, s)."""
        rng = rng or RngStream(0, 3)
        out = np.zeros((len(vocab), self.dimension))
        for i, tok in enumerate(vocab.itos):
            if tok == PAD:
                continue
            if tok in self.index and tok != OOV:
                out[i] = self[tok]
            else:
                out[i] = rng.uniform(-oov_scale, oov_scale, self.dimension)
        return out


def _open_text(path):
    if str(path).endswith(".gz"):
        return gzip.open(path, "rt", encoding="utf-8")
    return open(path, encoding="utf-8")


def load_embeddings(path, expected_dim=None) -> EmbeddingTable:
    """Parse word2vec text format (optionally gzipped).

    An optional first line ``"<count> <dim>"`` is a header; every other
    line is a word followed by ``dim`` numbers separated by whitespace.
    Repeated words keep their first vector and emit a warning.
    """
    words, rows, seen = [], [], set()
    dim = None
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                dim = int(parts[1])
                continue
            word, nums = parts[0], parts[1:]
            if dim is None:
                dim = len(nums)
            if len(nums) != dim:
                raise EmbeddingError(f"{path}:{lineno}: expected {dim} numbers after {word!r}, found {len(nums)}")
            try:
                vec = [float(x) for x in nums]
            except ValueError as exc:
                raise EmbeddingError(f"{path}:{lineno}: non-numeric field ({exc})") from None
            if word in seen:
                warnings.warn(f"{path}:{lineno}: duplicate word {word!r} ignored", stacklevel=2)
                continue
            seen.add(word)
            words.append(word)
            rows.append(vec)
    if dim is None:
        raise EmbeddingError(f"{path}: no embedding rows found")
    if expected_dim is not None and dim != expected_dim:
        raise EmbeddingError(f"{path}: dimension {dim} does not match expected {expected_dim}")
    return EmbeddingTable(words, np.array(rows, dtype=np.float64).reshape(len(words), dim))


def save_embeddings(table: EmbeddingTable, path):
    lines = [f"{len(table)} {table.dimension}"]
    for w, v in zip(table.words, table.vectors):
        lines.append(w + " " + " ".join(repr(float(x)) for x in v))
    atomic_write_text(path, "\n".join(lines) + "\n")


def nearest_neighbors(word, table: EmbeddingTable, k=1):
    """Top-``k`` ``(word, cosine)`` pairs, excluding ``word`` itself.

    Ordered by descending cosine, ties by the neighbour's spelling.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if word not in table:
        raise KeyError(f"unknown word {word!r}")
    i = table.index[word]
    q = table.vectors[i]
    qn = table._norms[i]
    with np.errstate(divide="ignore", invalid="ignore"):
        cos = table.vectors @ q / (table._norms * qn)
    cos = np.where(np.isfinite(cos), cos, 0.0)
    cos[i] = -np.inf
    k = min(k, len(table) - 1)
    if k == 0:
        return []
    # everything tied with the k-th best value competes on spelling
    kth = np.partition(cos, len(cos) - k)[len(cos) - k]
    cand = np.flatnonzero(cos >= kth)
    ranked = sorted(cand, key=lambda j: (-cos[j], table.words[j]))[:k]
    return [(table.words[j], float(cos[j])) for j in ranked]


@dataclass
class SynonymTable:
    """``source -> (replacement, cosine)``."""

    pairs: dict = field(default_factory=dict)
    min_cos: float = 0.0

    def __post_init__(self):
        for src, (dst, cos) in self.pairs.items():
            if src == dst:
                raise ValueError(f"{src!r} maps to itself")
            if cos < self.min_cos:
                raise ValueError(f"{src!r} -> {dst!r} has cosine {cos} below {self.min_cos}")

    def __len__(self):
        return len(self.pairs)

    def __contains__(self, word):
        return word in self.pairs

    def replacement(self, word):
        return self.pairs[word][0]

    def to_tsv(self):
        return "".join(f"{s}\t{d}\t{c!r}\n" for s, (d, c) in self.pairs.items())

    def save(self, path):
        atomic_write_text(path, self.to_tsv())

    @classmethod
    def load(cls, path, min_cos=0.0):
        pairs = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                parts = line.rstrip("\n").split("\t")
                if len(parts) != 3:
                    raise ValueError(f"{path}:{lineno}: expected source, replacement, cosine")
                pairs[parts[0]] = (parts[1], float(parts[2]))
        return cls(pairs, min_cos)


def _token_lists(corpus):
    if isinstance(corpus, Dataset):
        return [tokenize(t) for t in corpus.texts]
    out = []
    for item in corpus:
        out.append(tokenize(item) if isinstance(item, str) else list(item))
    return out


def build_synonym_table(corpus, table: EmbeddingTable, top_n=1000, min_cos=0.7) -> SynonymTable:
    """Map each of the ``top_n`` most frequent in-vocabulary corpus words to
    its nearest neighbour, keeping pairs with cosine at least ``min_cos``.

    ``corpus`` is a :class:`Dataset`, a list of strings or a list of token
    lists. Frequency ties keep first-appearance order.
    """
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    if not 0 <= min_cos <= 1:
        raise ValueError("min_cos must lie in [0, 1]")
    lists = _token_lists(corpus)
    if not any(lists):
        raise ValueError("cannot build a synonym table from an empty corpus")
    counts = Counter(t for toks in lists for t in toks if t in table)
    pairs = {}
    if len(table) < 2:
        return SynonymTable(pairs, min_cos)
    for word, _ in counts.most_common(top_n):
        (nb, cos), = nearest_neighbors(word, table, 1)
        if cos >= min_cos:
            pairs[word] = (nb, cos)
    return SynonymTable(pairs, min_cos)


def augment_corpus(dataset: Dataset, syn: SynonymTable, policy="replace_all", k=1,
                   rng: RngStream | None = None) -> Dataset:
    """Synthetic copies of every record that contains a synonym source word.

    ``replace_all`` substitutes every matching token; ``per_tweet_max``
    substitutes at most ``k`` randomly chosen matches. New records keep the
    label and get the id ``<id>_aug``.
    """
    if policy not in ("replace_all", "per_tweet_max"):
        raise ValueError(f"unknown policy {policy!r}")
    if policy == "per_tweet_max" and k < 1:
        raise ValueError("k must be >= 1")
    rng = rng or RngStream(0, 4)
    taken = set(dataset.ids)
    out = []
    for rec in dataset.records:
        toks = tokenize(rec.text)
        hits = [i for i, t in enumerate(toks) if t in syn]
        if not hits:
            continue
        if policy == "per_tweet_max" and len(hits) > k:
            hits = sorted(hits[j] for j in rng.permutation(len(hits))[:k])
        for i in hits:
            toks[i] = syn.replacement(toks[i])
        new_id = f"{rec.id}_aug"
        n = 1
        while new_id in taken:
            n += 1
            new_id = f"{rec.id}_aug{n}"
        taken.add(new_id)
        out.append(DataRecord(new_id, " ".join(toks), rec.label))
    return dataset.with_records(out)


def expand(dataset: Dataset, augmented: Dataset) -> Dataset:
    """Originals followed by their synthetic copies."""
    return dataset.with_records(list(dataset.records) + list(augmented.records))
