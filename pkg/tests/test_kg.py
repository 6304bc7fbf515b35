import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kgextrap.errors import ConstraintViolation, EmptyGraphError, ParseError
from kgextrap.kg import (
    KnowledgeGraph,
    QueryCategory,
    SeenMask,
    Vocab,
    build_seen_mask,
    categorize,
    categorize_all,
    category_counts,
    graph_from_labels,
    load_graph,
    save_graph,
)


def write(path, lines):
    path.write_text("".join(l + "\n" for l in lines), encoding="utf-8")
    return path


def test_load_two_lines(tmp_path):
    g, dup = load_graph(write(tmp_path / "g.txt", ["a\tr1\tb", "b\tr2\tc"]))
    assert (g.n_entities, g.n_relations, len(g.support), dup) == (3, 2, 2, 0)
    assert g.entities.labels == ("a", "b", "c")


def test_duplicates_dropped(tmp_path):
    g, dup = load_graph(write(tmp_path / "g.txt", ["a\tr1\tb", "b\tr2\tc", "a\tr1\tb"]))
    assert len(g.support) == 2 and dup == 1


def test_extend_keeps_shared_index(tmp_path):
    train, _ = load_graph(write(tmp_path / "tr.txt", ["x\tr1\ta", "a\tr1\ty"]))
    test, _ = load_graph(write(tmp_path / "te.txt", ["c\tr2\ta"]), base=train)
    assert test.entities.index("a") == train.entities.index("a")
    assert test.entities.labels[: train.n_entities] == train.entities.labels


def test_malformed_line_names_line(tmp_path):
    p = write(tmp_path / "bad.txt", ["a\tr\tb", "a\tr"])
    with pytest.raises(ParseError, match=":2"):
        load_graph(p)


def test_empty_file(tmp_path):
    with pytest.raises(EmptyGraphError):
        load_graph(write(tmp_path / "e.txt", []))


def test_graph_invariants():
    ents, rels = Vocab(["a", "b"]), Vocab(["r"])
    with pytest.raises(ValueError):
        KnowledgeGraph(ents, rels, [(0, 0, 1)], [(0, 0, 1)])
    with pytest.raises(ValueError):
        KnowledgeGraph(ents, rels, [(0, 0, 1), (0, 0, 1)])
    with pytest.raises(ValueError):
        KnowledgeGraph(ents, rels, [(0, 1, 1)])


def test_seen_mask_intersection():
    train = graph_from_labels([("a", "r", "b")])
    test = graph_from_labels([("b", "r", "c")])
    m = build_seen_mask(test, train)
    assert m.entities.tolist() == [True, False]
    assert m.relations.tolist() == [True]


def test_seen_mask_needs_overlap():
    train = graph_from_labels([("a", "r", "b")])
    with pytest.raises(ConstraintViolation):
        build_seen_mask(graph_from_labels([("c", "r", "d")]), train)
    with pytest.raises(ConstraintViolation):
        build_seen_mask(graph_from_labels([("a", "q", "b")]), train)


def test_categorize_examples():
    m = SeenMask(np.array([False, True]), np.array([True, False]))
    assert categorize((0, 0, 1), m) is QueryCategory.UNSEEN_ENTITY
    assert categorize((1, 1, 1), m) is QueryCategory.UNSEEN_RELATION
    assert categorize((0, 1, 1), m) is QueryCategory.UNSEEN_BOTH
    assert categorize((1, 0, 1), m) is QueryCategory.ALL_SEEN


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 2), st.integers(0, 5)), min_size=1, max_size=20), st.data())
def test_categorize_total(triples, data):
    ent = np.array(data.draw(st.lists(st.booleans(), min_size=6, max_size=6)))
    rel = np.array(data.draw(st.lists(st.booleans(), min_size=3, max_size=3)))
    ent[0] = rel[0] = True
    m = SeenMask(ent, rel)
    cats = categorize_all(np.array(triples), m)
    assert [categorize(t, m) for t in triples] == list(cats)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.sampled_from("abcdef"), st.sampled_from(["p", "q"]), st.sampled_from("abcdef")), min_size=1, max_size=25))
def test_roundtrip(tmp_path_factory, lines):
    d = tmp_path_factory.mktemp("rt")
    p = write(d / "g.txt", ["\t".join(t) for t in lines])
    g, _ = load_graph(p)
    save_graph(g, d / "out.txt")
    g2, dup = load_graph(d / "out.txt")
    assert dup == 0
    assert set(g2.labeled(g2.support)) == set(lines)


def test_category_counts_sum():
    train = graph_from_labels([("a", "r", "b"), ("b", "s", "c")])
    test = graph_from_labels([("a", "r", "x"), ("x", "s", "b")], [("a", "r", "b"), ("x", "r", "b"), ("a", "t", "b"), ("x", "t", "a")])
    m = build_seen_mask(test, train)
    counts = category_counts(test, m)
    assert sum(counts.values()) == 4
    assert counts[QueryCategory.ALL_SEEN] == 1 and counts[QueryCategory.UNSEEN_BOTH] == 1
