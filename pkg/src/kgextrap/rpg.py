"""Relation position graph: relations as nodes, relative positions as edges.

Two relations sharing an entity stand in one of four relative positions.
``(r1, TH, r2)`` means some tail entity of ``r1`` is the head entity of
``r2``; ``HT`` is its inverse, ``HH``/``TT`` are symmetric.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels


class MetaRelation(enum.IntEnum):
    TH = 0
    HT = 1
    HH = 2
    TT = 3


N_META = len(MetaRelation)


@dataclass(frozen=True, eq=False)
class RelationPositionGraph:
    n_relations: int
    # (n, 3) rows of (source relation, MetaRelation, target relation), sorted
    edges: np.ndarray

    def edge_set(self) -> set[tuple[int, MetaRelation, int]]:
        return {(s, MetaRelation(k), t) for s, k, t in self.edges.tolist()}

    def in_kind_counts(self, mode: str = "edge") -> np.ndarray:
        """``(n_relations, 4)`` counts of in-going meta-relations per rel-node.

        ``mode="edge"`` counts each distinct ``(source, kind)`` in-edge once;
        ``mode="kind"`` collapses to a 0/1 indicator per kind.
        """
        counts = np.zeros((self.n_relations, N_META), dtype=np.int64)
        if len(self.edges):
            np.add.at(counts, (self.edges[:, 2], self.edges[:, 1]), 1)
        if mode == "kind":
            counts = (counts > 0).astype(np.int64)
        elif mode != "edge":
            raise ValueError(f"unknown rpg mode {mode!r}")
        return counts


def build_rpg(support, n_relations: int) -> RelationPositionGraph:
    """Build the RPG of a support triple set (order-insensitive)."""
    support = np.asarray(support, dtype=np.int64).reshape(-1, 3)
    if support.size and support[:, 1].max() >= n_relations:
        raise IndexError("relation index exceeds n_relations")
    adj = kernels.rpg_adjacency(support[:, 0], support[:, 1], support[:, 2], n_relations)
    kind, src, dst = np.nonzero(adj)
    edges = np.stack([src, kind, dst], axis=1).astype(np.int64)
    order = np.lexsort((edges[:, 2], edges[:, 1], edges[:, 0]))
    edges = np.ascontiguousarray(edges[order])
    edges.setflags(write=False)
    return RelationPositionGraph(n_relations, edges)


def in_meta_edges(rpg: RelationPositionGraph, r: int) -> list[MetaRelation]:
    """Meta-relation kinds of all in-edges of rel-node ``r``."""
    if not 0 <= r < rpg.n_relations:
        raise IndexError(f"relation {r} is not a rel-node of this RPG ({rpg.n_relations} nodes)")
    rows = rpg.edges[rpg.edges[:, 2] == r]
    return [MetaRelation(k) for k in rows[:, 1].tolist()]


def dump_edges(rpg: RelationPositionGraph, path, relation_labels=None) -> None:
    """Write ``source<TAB>kind<TAB>target`` lines."""
    name = (lambda i: relation_labels[i]) if relation_labels is not None else str
    with Path(path).open("w", encoding="utf-8") as fh:
        for s, k, t in rpg.edges.tolist():
            fh.write(f"{name(s)}\t{MetaRelation(k).name}\t{name(t)}\n")


def dump_histogram(rpg: RelationPositionGraph, path, relation_labels=None, mode: str = "edge") -> None:
    """Per-relation counts of in-going meta-relations, one TSV row per relation."""
    counts = rpg.in_kind_counts(mode)
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write("relation\t" + "\t".join(m.name for m in MetaRelation) + "\n")
        for r in range(rpg.n_relations):
            label = relation_labels[r] if relation_labels is not None else str(r)
            fh.write(label + "\t" + "\t".join(str(c) for c in counts[r]) + "\n")
