import json
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from offnet.core import RngStream
from offnet.data_eval import (
    DataError,
    DataRecord,
    Dataset,
    get_schema,
    load_tsv,
    score,
    stratified_split,
    write_tsv,
)

A, B, C = get_schema("A"), get_schema("B"), get_schema("C")


def counting_oracle(preds, golds, labels):
    """Macro-F1 from plain counting loops."""
    f1s = []
    for lab in labels:
        tp = sum(1 for p, g in zip(preds, golds) if p == lab and g == lab)
        fp = sum(1 for p, g in zip(preds, golds) if p == lab and g != lab)
        fn = sum(1 for p, g in zip(preds, golds) if p != lab and g == lab)
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1s.append(2 * prec * rec / (prec + rec) if prec + rec else 0.0)
    return sum(f1s) / len(f1s)


def two_class(n_off, n_not):
    recs = [DataRecord(f"o{i}", f"text {i}", "OFF") for i in range(n_off)]
    recs += [DataRecord(f"n{i}", f"text {i}", "NOT") for i in range(n_not)]
    return Dataset(recs, A)


# -- schemas and loading ------------------------------------------------------

def test_schemas():
    assert A.positive == "OFF" and B.positive == "TIN" and C.head == "three_class"
    assert A.index("NOT") == 0 and A.index("OFF") == 1
    with pytest.raises(ValueError):
        get_schema("D")


def test_load_table_row(tmp_path):
    p = tmp_path / "d.tsv"
    p.write_text("1713\tHaha, det er genialt!\tNOT\n", encoding="utf-8")
    ds = load_tsv(p, A)
    assert ds.records[0] == DataRecord("1713", "Haha, det er genialt!", "NOT")


def test_load_errors(tmp_path):
    p = tmp_path / "d.tsv"
    p.write_text("1\tok\tNOT\n2\tbad\toff\n")
    with pytest.raises(DataError, match=r"d\.tsv:2: invalid label 'off'"):
        load_tsv(p, A)
    p.write_text("1\tok\tNOT\n2\tonly two\n")
    with pytest.raises(DataError, match=":2:"):
        load_tsv(p, A)
    p.write_text("1\tok\tNOT\n1\tagain\tOFF\n")
    with pytest.raises(DataError, match="duplicate"):
        load_tsv(p, A)


def test_load_header_and_unlabeled(tmp_path):
    p = tmp_path / "d.tsv"
    p.write_text("id\ttweet\n7\thello there\n")
    ds = load_tsv(p, A, labeled=False)
    assert ds.ids == ["7"] and ds.records[0].label is None


def test_class_counts(tmp_path):
    ds = two_class(402, 1598)
    write_tsv(ds, tmp_path / "d.tsv")
    assert load_tsv(tmp_path / "d.tsv", A).class_counts() == {"OFF": 402, "NOT": 1598}


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.text(alphabet=st.characters(blacklist_characters="\t\n\r\x0b\x0c\x1c\x1d\x1e\x85  "), min_size=1),
                          st.sampled_from(C.labels)), max_size=15))
def test_tsv_roundtrip(tmp_path_factory, rows):
    ds = Dataset([DataRecord(f"id{i}", t, l) for i, (t, l) in enumerate(rows)], C)
    p = tmp_path_factory.mktemp("rt") / "d.tsv"
    write_tsv(ds, p)
    assert load_tsv(p, C) == ds


# -- splitting ----------------------------------------------------------------

def test_split_30_70():
    train, val = stratified_split(two_class(30, 70), 0.2, RngStream(0))
    assert val.class_counts() == {"OFF": 6, "NOT": 14}
    assert len(train) == 80


def test_split_danish_counts():
    ds = two_class(398, 2568)
    train, val = stratified_split(ds, 0.2, RngStream(0))
    assert val.class_counts() == {"OFF": 80, "NOT": 514}
    assert len(train) + len(val) == 2966
    assert Counter(train.records + val.records) == Counter(ds.records)
    assert not set(train.ids) & set(val.ids)


def test_split_deterministic():
    ds = two_class(17, 40)
    assert stratified_split(ds, 0.2, RngStream(3))[1].ids == stratified_split(ds, 0.2, RngStream(3))[1].ids


def test_split_errors():
    with pytest.raises(DataError):
        stratified_split(two_class(0, 10))
    with pytest.raises(ValueError):
        stratified_split(two_class(3, 10), 1.0)


# -- scoring ------------------------------------------------------------------

def test_score_perfect_and_hand_case():
    assert score(["OFF", "NOT"], ["OFF", "NOT"], A).macro_f1 == 1.0
    rep = score(["OFF"] * 4, ["OFF", "OFF", "NOT", "NOT"], A)
    assert rep.f1["OFF"] == pytest.approx(2 / 3) and rep.f1["NOT"] == 0.0
    assert rep.macro_f1 == pytest.approx(1 / 3)


def test_score_errors():
    with pytest.raises(ValueError):
        score(["OFF"], ["OFF", "NOT"], A)
    with pytest.raises(ValueError):
        score(["IND"], ["OFF"], A)


@pytest.mark.parametrize("seed", range(5))
def test_score_matches_counting_oracle(seed):
    rng = RngStream(seed, 90)
    for _ in range(100):
        n = int(rng.integers(1, 13))
        golds = [C.labels[int(i)] for i in rng.integers(0, 3, n)]
        preds = [C.labels[int(i)] for i in rng.integers(0, 3, n)]
        assert score(preds, golds, C).macro_f1 == pytest.approx(counting_oracle(preds, golds, C.labels), abs=1e-12)


@settings(max_examples=200)
@given(st.lists(st.tuples(st.sampled_from(C.labels), st.sampled_from(C.labels)), min_size=1, max_size=30),
       st.permutations(C.labels))
def test_score_properties(pairs, perm):
    preds, golds = [p for p, _ in pairs], [g for _, g in pairs]
    rep = score(preds, golds, C)
    assert 0.0 <= rep.macro_f1 <= 1.0
    for lab, row in zip(rep.labels, rep.confusion):
        assert sum(row) == rep.support[lab]
    rename = dict(zip(C.labels, perm))
    renamed = score([rename[p] for p in preds], [rename[g] for g in golds], C)
    assert renamed.macro_f1 == pytest.approx(rep.macro_f1, abs=1e-12)
    if all(p == g for p, g in pairs) and len(set(golds)) == 3:
        assert rep.macro_f1 == rep.accuracy == 1.0


def test_report_formats():
    rep = score(["IND", "GRP", "GRP"], ["IND", "GRP", "OTH"], C)
    d = json.loads(rep.to_json())
    assert {"per_class", "macro_f1", "accuracy", "confusion", "support"} <= set(d)
    assert d["confusion"][2] == [0, 1, 0]
    assert "macro-F1" in rep.to_text()
