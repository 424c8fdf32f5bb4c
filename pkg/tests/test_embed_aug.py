import gzip
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from offnet.core import RngStream
from offnet.data_eval import DataRecord, Dataset, get_schema
from offnet.embed_aug import (
    EmbeddingError,
    EmbeddingTable,
    SynonymTable,
    augment_corpus,
    build_synonym_table,
    expand,
    load_embeddings,
    nearest_neighbors,
    save_embeddings,
)
from offnet.textprep import Vocab, tokenize


def dataset(texts, labels=None):
    labels = labels or ["NOT"] * len(texts)
    return Dataset([DataRecord(str(i), t, l) for i, (t, l) in enumerate(zip(texts, labels))], get_schema("A"))


def brute_force_neighbors(word, words, vectors, k):
    q = vectors[words.index(word)]
    scored = []
    for w, v in zip(words, vectors):
        if w == word:
            continue
        den = np.linalg.norm(q) * np.linalg.norm(v)
        scored.append((w, float(q @ v / den) if den else 0.0))
    scored.sort(key=lambda p: (-p[1], p[0]))
    return scored[:k]


# -- loading -------------------------------------------------------------------

def test_load_with_header(tmp_path):
    p = tmp_path / "e.txt"
    p.write_text("2 3\na 1 0 0\nb 0 1 0\n")
    t = load_embeddings(p)
    assert len(t) == 2 and t.dimension == 3
    np.testing.assert_array_equal(t["b"], [0, 1, 0])


def test_load_without_header_and_gzip(tmp_path):
    p = tmp_path / "e.txt.gz"
    with gzip.open(p, "wt") as fh:
        fh.write("a 1 2\nb 3 4\n")
    assert load_embeddings(p, expected_dim=2).words == ["a", "b"]


def test_load_errors(tmp_path):
    p = tmp_path / "e.txt"
    p.write_text("2 3\na 1 0 0\nb 0 1\n")
    with pytest.raises(EmbeddingError, match=":3:"):
        load_embeddings(p)
    p.write_text("a 1 x 0\n")
    with pytest.raises(EmbeddingError, match=":1:"):
        load_embeddings(p)
    p.write_text("a " + " ".join(["0.5"] * 400) + "\n")
    with pytest.raises(EmbeddingError, match="400 does not match expected 300"):
        load_embeddings(p, expected_dim=300)
    p.write_text("")
    with pytest.raises(EmbeddingError):
        load_embeddings(p)


def test_duplicate_word_keeps_first(tmp_path):
    p = tmp_path / "e.txt"
    p.write_text("a 1 0\na 0 1\n")
    with pytest.warns(UserWarning, match="duplicate"):
        t = load_embeddings(p)
    np.testing.assert_array_equal(t["a"], [1, 0])


def test_save_load_roundtrip(tmp_path, rng):
    t = EmbeddingTable([f"w{i}" for i in range(5)], rng.normal(size=(5, 4)))
    save_embeddings(t, tmp_path / "e.txt")
    again = load_embeddings(tmp_path / "e.txt")
    assert again.words == t.words and again.vectors.tobytes() == t.vectors.tobytes()


def test_table_is_read_only(rng):
    t = EmbeddingTable(["a"], rng.normal(size=(1, 2)))
    with pytest.raises(ValueError):
        t.vectors[0, 0] = 1.0


def test_matrix_for_vocab(rng):
    t = EmbeddingTable(["a", "b"], [[1.0, 2.0], [3.0, 4.0]])
    m = t.matrix_for(Vocab(["b", "zz"]), rng)
    np.testing.assert_array_equal(m[0], 0)
    np.testing.assert_array_equal(m[2], [3, 4])
    assert np.all(np.abs(m[[1, 3]]) <= 0.05)


# -- neighbours ----------------------------------------------------------------

def test_toy_neighbors():
    t = EmbeddingTable(["a", "b", "c"], [[1, 0], [0, 1], [1, 0]])
    assert nearest_neighbors("a", t, 1) == [("c", 1.0)]
    assert t.cosine("a", "b") == 0.0
    with pytest.raises(KeyError):
        nearest_neighbors("q", t)
    with pytest.raises(ValueError):
        nearest_neighbors("a", t, 0)


@pytest.mark.parametrize("seed", range(5))
def test_neighbors_match_brute_force(seed):
    rng = RngStream(seed, 80)
    words = [f"w{i:02d}" for i in range(50)]
    vectors = rng.normal(size=(50, 8))
    t = EmbeddingTable(words, vectors)
    for w in words:
        got, want = nearest_neighbors(w, t, 5), brute_force_neighbors(w, words, vectors, 5)
        assert [g[0] for g in got] == [o[0] for o in want]
        np.testing.assert_allclose([g[1] for g in got], [o[1] for o in want], rtol=0, atol=1e-12)


def test_neighbor_ties_lexicographic():
    t = EmbeddingTable(["q", "d", "b", "c", "z"], [[1, 0], [1, 0], [1, 0], [0, 1], [1, 0]])
    assert [w for w, _ in nearest_neighbors("q", t, 3)] == ["b", "d", "z"]


def test_neighbors_deterministic_from_file(tmp_path, rng):
    t = EmbeddingTable([f"w{i}" for i in range(30)], rng.normal(size=(30, 5)))
    save_embeddings(t, tmp_path / "e.txt")
    a, b = load_embeddings(tmp_path / "e.txt"), load_embeddings(tmp_path / "e.txt")
    assert all(nearest_neighbors(w, a, 3) == nearest_neighbors(w, b, 3) for w in a.words)


# -- synonym table ---------------------------------------------------------------

def five_word_table():
    words = ["good", "great", "bad", "day", "cat"]
    vectors = np.array([[1.0, 0.0, 0.0], [0.9, np.sqrt(1 - 0.81), 0.0],
                        [-1.0, 0.2, 0.0], [0.0, 0.0, 1.0], [0.0, -1.0, 0.3]])
    return EmbeddingTable(words, vectors)


def test_synonym_table_example():
    t = five_word_table()
    syn = build_synonym_table(["good good day", "good cat"], t, top_n=1, min_cos=0.7)
    assert list(syn.pairs) == ["good"]
    dst, cos = syn.pairs["good"]
    assert dst == "great" and cos == pytest.approx(0.9, abs=1e-12)


def test_synonym_table_threshold_and_clamping():
    t = five_word_table()
    assert len(build_synonym_table(["good great bad day cat"], t, min_cos=1.0)) == 0
    syn = build_synonym_table(["good great bad day cat"], t, top_n=10_000, min_cos=0.0)
    assert set(syn.pairs) <= set(t.words)
    assert all(s != d and c >= 0.0 for s, (d, c) in syn.pairs.items())
    with pytest.raises(ValueError):
        build_synonym_table([""], t)
    with pytest.raises(ValueError):
        build_synonym_table(["good"], t, min_cos=1.5)


def test_synonym_table_invariants():
    with pytest.raises(ValueError):
        SynonymTable({"a": ("a", 1.0)})
    with pytest.raises(ValueError):
        SynonymTable({"a": ("b", 0.5)}, min_cos=0.7)


def test_synonym_table_tsv_roundtrip(tmp_path):
    syn = SynonymTable({"good": ("great", 0.9), "bad": ("awful", 0.75)}, 0.7)
    syn.save(tmp_path / "s.tsv")
    assert (tmp_path / "s.tsv").read_text() == "good\tgreat\t0.9\nbad\tawful\t0.75\n"
    assert SynonymTable.load(tmp_path / "s.tsv").pairs == syn.pairs


# -- augmentation ----------------------------------------------------------------

def test_augment_examples():
    syn = SynonymTable({"good": ("great", 0.9)})
    out = augment_corpus(dataset(["good day", "bad night"], ["OFF", "NOT"]), syn)
    assert len(out) == 1
    rec = out.records[0]
    assert rec.text == "great day" and rec.label == "OFF" and rec.id == "0_aug"


def test_augment_count_7000():
    rng = RngStream(0, 81)
    syn = SynonymTable({"good": ("great", 0.9), "fine": ("okay", 0.8)})
    filler = ["day", "night", "rain", "sun", "city"]
    texts = []
    for i in range(7000):
        toks = [filler[int(j)] for j in rng.integers(0, 5, 4)]
        if i % 5 < 2:
            toks[int(rng.integers(0, 4))] = "good" if i % 2 else "fine"
        texts.append(" ".join(toks))
    scanned = sum(any(t in syn.pairs for t in s.split()) for s in texts)
    out = augment_corpus(dataset(texts), syn)
    assert scanned == 2800 and len(out) == 2800
    assert len(expand(dataset(texts), out)) == 9800


@settings(max_examples=100, deadline=None)
@given(st.lists(st.lists(st.sampled_from(["a", "b", "c", "d"]), min_size=1, max_size=6), min_size=1, max_size=20),
       st.sampled_from(["replace_all", "per_tweet_max"]), st.integers(1, 3))
def test_augment_invariants(token_lists, policy, k):
    syn = SynonymTable({"a": ("x", 0.9), "b": ("y", 0.8)})
    labels = ["OFF" if i % 3 else "NOT" for i in range(len(token_lists))]
    ds = dataset([" ".join(t) for t in token_lists], labels)
    out = augment_corpus(ds, syn, policy, k, RngStream(0))
    orig = {r.id: r for r in ds.records}
    assert len(out) == sum(any(t in syn for t in toks) for toks in token_lists)
    for rec in out.records:
        src = orig[rec.id[: -len("_aug")]]
        assert rec.label == src.label
        before, after = tokenize(src.text), tokenize(rec.text)
        assert len(before) == len(after)
        changed = sum(x != y for x, y in zip(before, after))
        assert changed >= 1
        if policy == "per_tweet_max":
            assert changed <= k


def test_augment_id_collision():
    ds = Dataset([DataRecord("1", "good", "NOT"), DataRecord("1_aug", "fine", "NOT")], get_schema("A"))
    out = augment_corpus(ds, SynonymTable({"good": ("great", 0.9)}))
    assert out.ids == ["1_aug2"]
