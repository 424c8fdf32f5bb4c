"""Small deterministic corpora for smoke tests, demos and the bundled data files."""
from __future__ import annotations

from importlib import resources

import numpy as np

from .core import RngStream
from .data_eval import DataRecord, Dataset, get_schema
from .embed_aug import EmbeddingTable
from .textprep import CLS, SEP, prepare_contextual_input

NEUTRAL = [
    "day", "good", "team", "game", "weather", "coffee", "music", "city", "friend", "book",
    "play", "watch", "read", "nice", "morning", "train", "walk", "new", "home", "song",
]
OFFENSIVE = ["idiot", "stupid", "trash", "loser", "moron", "dumb"]
DECORATIONS = ["@USER ", "", "", "!!", " http://t.co/abc", "", "..."]


def make_corpus(n=32, seed=0) -> Dataset:
    """Balanced OFF/NOT tweets; every OFF tweet holds at least one insult word.

    Texts carry mentions, URLs and punctuation so the cleaning step has
    something to do.
    """
    rng = RngStream(seed, 10)
    records = []
    for i in range(n):
        off = i % 2 == 0
        length = int(rng.integers(3, 8))
        toks = [NEUTRAL[j] for j in rng.integers(0, len(NEUTRAL), length)]
        if off:
            k = int(rng.integers(1, 3))
            for pos in rng.permutation(length)[:k]:
                toks[pos] = OFFENSIVE[int(rng.integers(0, len(OFFENSIVE)))]
        deco = DECORATIONS[int(rng.integers(0, len(DECORATIONS)))]
        text = " ".join(toks)
        text = deco + text if deco.startswith("@") else text + deco
        records.append(DataRecord(f"syn{i + 1:03d}", text, "OFF" if off else "NOT"))
    return Dataset(records, get_schema("A"))


def make_embeddings(words, dim=16, seed=0, groups=None, spread=0.6) -> EmbeddingTable:
    """Random vectors; words sharing a ``groups`` key cluster around one centre."""
    rng = RngStream(seed, 11)
    groups = groups or {}
    centres = {}
    rows = []
    for w in words:
        g = groups.get(w)
        if g is None:
            rows.append(rng.normal(0.0, 1.0, dim))
            continue
        if g not in centres:
            centres[g] = rng.normal(0.0, 1.0, dim)
        rows.append(centres[g] + spread * rng.normal(0.0, 1.0, dim))
    return EmbeddingTable(list(words), np.array(rows))


def corpus_embeddings(dim=16, seed=0) -> EmbeddingTable:
    groups = {w: "off" for w in OFFENSIVE}
    return make_embeddings(NEUTRAL + OFFENSIVE, dim, seed, groups)


def contextual_vectors(token_lists, table: EmbeddingTable, max_len=12, seed=0, noise=0.1):
    """Stand-in for an external encoder: ``[CLS] tok... [SEP]`` rows built from
    word vectors plus a position signal and noise. Returns ``(vectors, mask)``."""
    rng = RngStream(seed, 12)
    d = table.dimension
    pos = np.sin(np.arange(max_len)[:, None] / (1.0 + np.arange(d)[None, :]))
    special = {CLS: rng.normal(0.0, 1.0, d), SEP: rng.normal(0.0, 1.0, d)}
    n = len(token_lists)
    vec = np.zeros((n, max_len, d))
    mask = np.zeros((n, max_len))
    for i, toks in enumerate(token_lists):
        framed, m = prepare_contextual_input(toks, max_len)
        mask[i] = m
        for t, tok in enumerate(framed):
            if not m[t]:
                break
            base = special.get(tok)
            if base is None:
                base = table[tok] if tok in table else np.zeros(d)
            vec[i, t] = base + 0.1 * pos[t] + noise * rng.normal(0.0, 1.0, d)
    return vec, mask


def make_synonym_corpus(n_train=200, n_val=100, seed=0, dim=16, n_concepts=6, noise_words=12):
    """Corpus with planted synonyms for augmentation experiments.

    Each offensive concept has a common form used in training and a rare
    form, close to it in embedding space, that only the held-out set uses.
    Returns ``(train, val, table)``.
    """
    rng = RngStream(seed, 13)
    common = [f"insult{c}" for c in range(n_concepts)]
    rare = [f"slur{c}" for c in range(n_concepts)]
    neutral = [f"word{j}" for j in range(noise_words)]
    groups = {w: f"c{c}" for c, w in enumerate(common)}
    groups.update({w: f"c{c}" for c, w in enumerate(rare)})
    table = make_embeddings(neutral + common + rare, dim, seed, groups, spread=0.15)

    def sample(n, forms, prefix):
        records = []
        for i in range(n):
            off = bool(rng.random() < 0.5)
            toks = [neutral[j] for j in rng.integers(0, len(neutral), int(rng.integers(4, 8)))]
            if off:
                toks[int(rng.integers(0, len(toks)))] = forms[int(rng.integers(0, len(forms)))]
            records.append(DataRecord(f"{prefix}{i:04d}", " ".join(toks), "OFF" if off else "NOT"))
        return Dataset(records, get_schema("A"))

    return sample(n_train, common, "tr"), sample(n_val, rare, "va"), table


def bundled_path(name):
    """Path of a file shipped in ``offnet/data`` (``synthetic32.tsv`` and friends)."""
    return str(resources.files("offnet").joinpath("data", name))


def write_bundle(directory, seed=0, max_len=12):
    """Regenerate the shipped files: corpus TSV, embeddings, contextual vectors."""
    import os

    from .data_eval import write_tsv
    from .embed_aug import save_embeddings
    from .pipeline import save_contextual, token_lists

    ds = make_corpus(32, seed)
    table = corpus_embeddings(16, seed)
    write_tsv(ds, os.path.join(directory, "synthetic32.tsv"))
    save_embeddings(table, os.path.join(directory, "synthetic_embeddings.txt"))
    vec, mask = contextual_vectors(token_lists(ds), table, max_len, seed)
    save_contextual(os.path.join(directory, "synthetic32_contextual.npz"), ds.ids, vec, mask)
