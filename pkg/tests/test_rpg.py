import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kgextrap.rpg import MetaRelation as M, build_rpg, dump_edges, dump_histogram, in_meta_edges

from oracles import rpg_edges

triples_st = st.lists(st.tuples(st.integers(0, 7), st.integers(0, 3), st.integers(0, 7)), min_size=0, max_size=30, unique=True)


def edges(support, n_rel=4):
    return {(s, int(k), t) for s, k, t in build_rpg(np.array(support, dtype=np.int64).reshape(-1, 3), n_rel).edges.tolist()}


def test_chain():
    assert edges([(0, 0, 1), (1, 1, 2)]) == rpg_edges([(0, 0, 1), (1, 1, 2)]) == {(0, M.TH, 1), (1, M.HT, 0)}


def test_shared_head():
    assert edges([(0, 0, 1), (0, 1, 2)]) == {(0, M.HH, 1), (1, M.HH, 0)}


def test_mixed():
    e = edges([(0, 0, 1), (2, 1, 1), (1, 1, 3)])
    assert {(0, M.TT, 1), (1, M.TT, 0), (0, M.TH, 1), (1, M.HT, 0)} <= e
    assert e == rpg_edges([(0, 0, 1), (2, 1, 1), (1, 1, 3)])


def test_self_pairs():
    # same relation through distinct triples, and a loop triple
    assert (0, M.TH, 0) in edges([(0, 0, 1), (1, 0, 2)])
    assert edges([(0, 0, 0)]) == {(0, M.TH, 0), (0, M.HT, 0)}


def test_in_meta_edges():
    rpg = build_rpg(np.array([(0, 0, 1), (1, 1, 2)]), 3)
    assert in_meta_edges(rpg, 1) == [M.TH]
    assert in_meta_edges(rpg, 2) == []
    with pytest.raises(IndexError):
        in_meta_edges(rpg, 3)
    rpg = build_rpg(np.array([(5, 1, 0), (0, 0, 6), (7, 2, 8), (7, 0, 9)]), 3)
    assert sorted(in_meta_edges(rpg, 0)) == sorted([M.TH, M.HH])


@settings(max_examples=250, deadline=None)
@given(triples_st)
def test_oracle_equivalence(support):
    assert edges(support) == rpg_edges(support)


@settings(max_examples=100, deadline=None)
@given(triples_st, st.randoms())
def test_inverse_symmetry_and_order(support, rnd):
    e = edges(support)
    for s, k, t in e:
        partner = {M.TH: M.HT, M.HT: M.TH, M.HH: M.HH, M.TT: M.TT}[M(k)]
        assert (t, int(partner), s) in e
    shuffled = list(support)
    rnd.shuffle(shuffled)
    assert edges(shuffled) == e


def test_kind_mode():
    rpg = build_rpg(np.array([(0, 0, 1), (1, 1, 2), (3, 2, 1)]), 3)
    by_edge, by_kind = rpg.in_kind_counts("edge"), rpg.in_kind_counts("kind")
    assert by_edge[1].tolist() == [2, 0, 0, 0]
    assert by_kind[1].tolist() == [1, 0, 0, 0]


def test_dumps(tmp_path):
    rpg = build_rpg(np.array([(0, 0, 1), (1, 1, 2)]), 2)
    dump_edges(rpg, tmp_path / "e.tsv", ["p", "q"])
    assert (tmp_path / "e.tsv").read_text().splitlines() == ["p\tTH\tq", "q\tHT\tp"]
    dump_histogram(rpg, tmp_path / "h.tsv", ["p", "q"])
    assert (tmp_path / "h.tsv").read_text().splitlines()[2] == "q\t1\t0\t0\t0"
