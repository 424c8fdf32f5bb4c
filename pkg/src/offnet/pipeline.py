"""Glue from datasets to model-ready arrays, and the contextual-vector file.

Contextual-vector file (``.npz``, written without pickling):

    ids      [n]        unicode record ids, matching the TSV id column
    vectors  [n, L, D]  float64 per-token vectors from an external encoder,
                        row 0 being [CLS] and the last unmasked row [SEP]
    mask     [n, L]     int8 attention mask, 1 for [CLS]..[SEP], 0 for padding
"""
from __future__ import annotations

import os

import numpy as np

from .data_eval import DataError, Dataset
from .optim import EncodedSet
from .textprep import CleanConfig, Vocab, clean_text, encode_batch, tokenize


def token_lists(dataset: Dataset, clean: CleanConfig | None = None):
    return [tokenize(clean_text(t, clean)) for t in dataset.texts]


def labels_of(dataset: Dataset):
    return dataset.label_indices() if dataset.labeled else None


def encode_dataset(dataset: Dataset, vocab: Vocab, max_len, clean: CleanConfig | None = None) -> EncodedSet:
    ids, mask = encode_batch(token_lists(dataset, clean), vocab, max_len)
    return EncodedSet(ids, mask, labels_of(dataset), dataset.ids)


def save_contextual(path, ids, vectors, mask):
    ids = np.asarray([str(i) for i in ids])
    vectors = np.asarray(vectors, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.int8)
    if vectors.ndim != 3 or mask.shape != vectors.shape[:2] or len(ids) != len(vectors):
        raise ValueError("contextual file needs ids [n], vectors [n, L, D] and mask [n, L]")
    tmp = f"{path}.tmp{os.getpid()}.npz"
    try:
        np.savez(tmp, ids=ids, vectors=vectors, mask=mask)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def load_contextual(path):
    """Returns ``(ids, vectors, mask)``."""
    with np.load(path, allow_pickle=False) as z:
        missing = {"ids", "vectors", "mask"} - set(z.files)
        if missing:
            raise DataError(f"{path}: missing arrays {sorted(missing)}")
        ids = [str(i) for i in z["ids"]]
        vectors = z["vectors"].astype(np.float64)
        mask = z["mask"].astype(np.float64)
    if vectors.ndim != 3 or mask.shape != vectors.shape[:2] or len(ids) != len(vectors):
        raise DataError(f"{path}: inconsistent shapes ids {len(ids)}, vectors {vectors.shape}, mask {mask.shape}")
    if np.any(mask.sum(axis=1) == 0):
        raise DataError(f"{path}: a row has an all-zero attention mask")
    return ids, vectors, mask


def contextual_dataset(dataset: Dataset, path) -> EncodedSet:
    """Rows of the contextual file matching ``dataset``'s ids, in dataset order."""
    ids, vectors, mask = load_contextual(path)
    where = {rid: i for i, rid in enumerate(ids)}
    missing = [r for r in dataset.ids if r not in where]
    if missing:
        raise DataError(f"{path}: no contextual vectors for ids {missing[:5]}"
                        + (" ..." if len(missing) > 5 else ""))
    rows = [where[r] for r in dataset.ids]
    return EncodedSet(vectors[rows], mask[rows], labels_of(dataset), dataset.ids)
