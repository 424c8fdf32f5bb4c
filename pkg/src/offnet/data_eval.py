"""OLID-style TSV datasets, label schemas, stratified splits and macro-F1."""
from __future__ import annotations

import json
import os
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .core import RngStream


class DataError(ValueError):
    """Malformed dataset input; messages carry the file and line."""


@dataclass(frozen=True)
class LabelSchema:
    """Label set of one sub-task.

    Binary schemas list the negative class first, so class index 1 is the
    positive class a sigmoid head scores.
    """

    task: str
    labels: tuple

    @property
    def positive(self):
        return self.labels[1] if len(self.labels) == 2 else None

    @property
    def head(self):
        return "binary" if len(self.labels) == 2 else "three_class"

    def index(self, label):
        try:
            return self.labels.index(label)
        except ValueError:
            raise DataError(f"label {label!r} not in task {self.task} schema {list(self.labels)}") from None


SCHEMAS = {
    "A": LabelSchema("A", ("NOT", "OFF")),
    "B": LabelSchema("B", ("UNT", "TIN")),
    "C": LabelSchema("C", ("IND", "GRP", "OTH")),
}


def get_schema(task) -> LabelSchema:
    if isinstance(task, LabelSchema):
        return task
    try:
        return SCHEMAS[str(task).upper()]
    except KeyError:
        raise ValueError(f"unknown task {task!r}; expected A, B or C") from None


@dataclass(frozen=True)
class DataRecord:
    id: str
    text: str
    label: str | None = None


@dataclass
class Dataset:
    records: list
    schema: LabelSchema
    labeled: bool = True

    def __post_init__(self):
        seen = set()
        for r in self.records:
            if r.id in seen:
                raise DataError(f"duplicate id {r.id!r}")
            seen.add(r.id)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __eq__(self, other):
        return (isinstance(other, Dataset) and self.schema == other.schema
                and self.labeled == other.labeled and self.records == other.records)

    @property
    def ids(self):
        return [r.id for r in self.records]

    @property
    def texts(self):
        return [r.text for r in self.records]

    @property
    def labels(self):
        return [r.label for r in self.records]

    def label_indices(self):
        return np.array([self.schema.index(r.label) for r in self.records], dtype=np.int64)

    def class_counts(self):
        counts = Counter(r.label for r in self.records)
        return {lab: counts.get(lab, 0) for lab in self.schema.labels}

    def with_records(self, records):
        return Dataset(list(records), self.schema, self.labeled)


def load_tsv(path, schema, labeled=True) -> Dataset:
    """Read ``id<TAB>text[<TAB>label]`` lines.

    A first line whose id field is literally ``id`` is taken as a header and
    skipped. Blank lines are ignored.
    """
    schema = get_schema(schema)
    want = 3 if labeled else 2
    records, seen = [], {}
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if lineno == 1 and parts[0].strip().lower() == "id":
                continue
            if len(parts) != want:
                raise DataError(f"{path}:{lineno}: expected {want} tab-separated fields, found {len(parts)}")
            rid = parts[0].strip()
            label = None
            if labeled:
                label = parts[2].strip()
                if label not in schema.labels:
                    raise DataError(
                        f"{path}:{lineno}: invalid label {label!r} for task {schema.task} "
                        f"(allowed: {', '.join(schema.labels)})"
                    )
            if rid in seen:
                raise DataError(f"{path}:{lineno}: duplicate id {rid!r} (first on line {seen[rid]})")
            seen[rid] = lineno
            records.append(DataRecord(rid, parts[1], label))
    return Dataset(records, schema, labeled)


def write_tsv(dataset: Dataset, path, header=False):
    """Write ``dataset`` in the same layout :func:`load_tsv` reads."""
    lines = []
    if header:
        lines.append("id\ttweet\tlabel" if dataset.labeled else "id\ttweet")
    for r in dataset.records:
        for field_ in (r.id, r.text):
            if "\t" in field_ or "\n" in field_ or "\r" in field_:
                raise DataError(f"record {r.id!r} contains a tab or newline")
        lines.append(f"{r.id}\t{r.text}\t{r.label}" if dataset.labeled else f"{r.id}\t{r.text}")
    text = "".join(l + "\n" for l in lines)
    atomic_write_text(path, text)


def atomic_write_text(path, text):
    tmp = f"{path}.tmp{os.getpid()}"
    try:
        with open(tmp, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def stratified_split(dataset: Dataset, val_fraction=0.2, rng: RngStream | None = None):
    """Split into ``(train, val)`` keeping class proportions.

    Each class sends ``round(count * val_fraction)`` records (halves round
    up) to validation. Both parts keep the original file order.
    """
    if not 0 < val_fraction < 1:
        raise ValueError(f"val_fraction must lie in (0, 1), got {val_fraction}")
    if not dataset.labeled:
        raise DataError("stratified_split needs a labeled dataset")
    rng = rng or RngStream(0)
    by_class = {lab: [] for lab in dataset.schema.labels}
    for i, r in enumerate(dataset.records):
        by_class[r.label].append(i)
    val_idx = set()
    for lab, idx in by_class.items():
        if not idx:
            raise DataError(f"class {lab!r} has no records; cannot stratify")
        n_val = int(np.floor(len(idx) * val_fraction + 0.5))
        pick = rng.permutation(len(idx))[:n_val]
        val_idx.update(idx[j] for j in pick)
    train = [r for i, r in enumerate(dataset.records) if i not in val_idx]
    val = [r for i, r in enumerate(dataset.records) if i in val_idx]
    return dataset.with_records(train), dataset.with_records(val)


# ---------------------------------------------------------------------------
# scoring


def confusion_matrix(gold_idx, pred_idx, n_classes):
    """Rows are gold classes, columns predicted classes."""
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(gold_idx, dtype=np.int64), np.asarray(pred_idx, dtype=np.int64)), 1)
    return cm


def f1_from_confusion(cm):
    """Per-class precision, recall and F1, using 0 wherever a ratio is 0/0."""
    cm = np.asarray(cm, dtype=np.float64)
    tp = np.diag(cm)
    pred_tot = cm.sum(axis=0)
    gold_tot = cm.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(pred_tot > 0, tp / pred_tot, 0.0)
        recall = np.where(gold_tot > 0, tp / gold_tot, 0.0)
        denom = precision + recall
        f1 = np.where(denom > 0, 2 * precision * recall / denom, 0.0)
    return precision, recall, f1


def macro_f1(gold_idx, pred_idx, n_classes):
    return float(np.mean(f1_from_confusion(confusion_matrix(gold_idx, pred_idx, n_classes))[2]))


@dataclass
class MetricsReport:
    labels: tuple
    precision: dict
    recall: dict
    f1: dict
    support: dict
    macro_f1: float
    accuracy: float
    confusion: list = field(default_factory=list)

    def to_dict(self):
        return {
            "labels": list(self.labels),
            "per_class": {
                lab: {"precision": self.precision[lab], "recall": self.recall[lab], "f1": self.f1[lab]}
                for lab in self.labels
            },
            "macro_f1": self.macro_f1,
            "accuracy": self.accuracy,
            "confusion": self.confusion,
            "support": self.support,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self):
        width = max(8, max(len(l) for l in self.labels) + 2)
        out = [f"{'':<{width}}{'precision':>10}{'recall':>10}{'f1':>10}{'support':>10}"]
        for lab in self.labels:
            out.append(f"{lab:<{width}}{self.precision[lab]:>10.4f}{self.recall[lab]:>10.4f}"
                       f"{self.f1[lab]:>10.4f}{self.support[lab]:>10d}")
        out.append("")
        out.append(f"macro-F1  {self.macro_f1:.4f}")
        out.append(f"accuracy  {self.accuracy:.4f}")
        out.append("confusion (rows = gold, cols = predicted): " + " ".join(self.labels))
        for lab, row in zip(self.labels, self.confusion):
            out.append(f"  {lab:<{width}}" + " ".join(f"{v:>6d}" for v in row))
        return "\n".join(out) + "\n"


def score(preds, golds, schema) -> MetricsReport:
    """Per-class P/R/F1, macro-F1 over every schema class, accuracy, confusion."""
    schema = get_schema(schema)
    if len(preds) != len(golds):
        raise ValueError(f"length mismatch: {len(preds)} predictions vs {len(golds)} gold labels")
    p_idx = [schema.index(p) for p in preds]
    g_idx = [schema.index(g) for g in golds]
    cm = confusion_matrix(g_idx, p_idx, len(schema.labels))
    precision, recall, f1 = f1_from_confusion(cm)
    n = len(golds)
    labs = schema.labels
    return MetricsReport(
        labels=labs,
        precision={l: float(v) for l, v in zip(labs, precision)},
        recall={l: float(v) for l, v in zip(labs, recall)},
        f1={l: float(v) for l, v in zip(labs, f1)},
        support={l: int(v) for l, v in zip(labs, cm.sum(axis=1))},
        macro_f1=float(np.mean(f1)),
        accuracy=float(np.trace(cm) / n) if n else 0.0,
        confusion=cm.tolist(),
    )
