"""Immutable knowledge-graph model: vocabularies, triple stores, seen masks."""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import ConstraintViolation, EmptyGraphError, ParseError

logger = logging.getLogger(__name__)


class Triple(NamedTuple):
    head: int
    relation: int
    tail: int


class Vocab:
    """Ordered, immutable label vocabulary with O(1) label -> index lookup."""

    __slots__ = ("_labels", "_index")

    def __init__(self, labels: Iterable[str] = ()):
        self._labels = tuple(labels)
        self._index = {lab: i for i, lab in enumerate(self._labels)}
        if len(self._index) != len(self._labels):
            raise ValueError("duplicate labels in vocabulary")

    @property
    def labels(self) -> tuple[str, ...]:
        return self._labels

    def __len__(self) -> int:
        return len(self._labels)

    def __contains__(self, label) -> bool:
        return label in self._index

    def __getitem__(self, i: int) -> str:
        return self._labels[i]

    def __iter__(self):
        return iter(self._labels)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self._labels == other._labels

    def __hash__(self) -> int:
        return hash(self._labels)

    def __repr__(self) -> str:
        return f"Vocab({len(self)} labels)"

    def index(self, label: str) -> int:
        return self._index[label]

    def get(self, label: str, default: int = -1) -> int:
        return self._index.get(label, default)

    def extend(self, labels: Iterable[str]) -> "Vocab":
        """New vocabulary with unseen ``labels`` appended in first-appearance order."""
        extra = []
        seen = set(self._index)
        for lab in labels:
            if lab not in seen:
                seen.add(lab)
                extra.append(lab)
        return Vocab(self._labels + tuple(extra))

    def lookup(self, labels: Sequence[str]) -> np.ndarray:
        """Indices of ``labels`` in this vocabulary, -1 where absent."""
        return np.fromiter((self._index.get(lab, -1) for lab in labels), dtype=np.int64, count=len(labels))


def _as_triple_array(triples) -> np.ndarray:
    arr = np.asarray(triples, dtype=np.int64)
    if arr.size == 0:
        arr = np.zeros((0, 3), dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"triples must have shape (n, 3), got {arr.shape}")
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


def triple_keys(triples: np.ndarray, n_entities: int, n_relations: int) -> np.ndarray:
    """Encode (h, r, t) rows as unique int64 keys."""
    t = np.asarray(triples, dtype=np.int64)
    return (t[:, 0] * n_relations + t[:, 1]) * n_entities + t[:, 2]


@dataclass(frozen=True, eq=False)
class KnowledgeGraph:
    """A triple store over entity and relation vocabularies.

    ``support`` and ``query`` are read-only ``(n, 3)`` int64 arrays of
    (head, relation, tail) indices. A pure training graph has no queries.
    """

    entities: Vocab
    relations: Vocab
    support: np.ndarray
    query: np.ndarray = field(default_factory=lambda: _as_triple_array([]))

    def __post_init__(self):
        object.__setattr__(self, "support", _as_triple_array(self.support))
        object.__setattr__(self, "query", _as_triple_array(self.query))
        n_e, n_r = len(self.entities), len(self.relations)
        for name, arr in (("support", self.support), ("query", self.query)):
            if arr.size == 0:
                continue
            if arr.min() < 0 or arr[:, [0, 2]].max() >= n_e or arr[:, 1].max() >= n_r:
                raise ValueError(f"{name} triple index out of vocabulary bounds")
            keys = triple_keys(arr, n_e, n_r)
            if np.unique(keys).size != keys.size:
                raise ValueError(f"duplicate triples in {name}")
        if self.support.size and self.query.size:
            if np.intersect1d(self.keys(self.support), self.keys(self.query)).size:
                raise ValueError("support and query triples overlap")

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    @property
    def all_triples(self) -> np.ndarray:
        return np.concatenate([self.support, self.query])

    def keys(self, triples: np.ndarray) -> np.ndarray:
        return triple_keys(triples, self.n_entities, self.n_relations)

    def active_entities(self) -> np.ndarray:
        """Sorted indices of entities occurring in at least one triple."""
        t = self.all_triples
        return np.unique(np.concatenate([t[:, 0], t[:, 2]]))

    def active_relations(self) -> np.ndarray:
        return np.unique(self.all_triples[:, 1])

    def labeled(self, triples: np.ndarray) -> list[tuple[str, str, str]]:
        e, r = self.entities, self.relations
        return [(e[h], r[rel], e[t]) for h, rel, t in np.asarray(triples).tolist()]

    def __repr__(self) -> str:
        return (
            f"KnowledgeGraph({self.n_entities} entities, {self.n_relations} relations, "
            f"{len(self.support)} support, {len(self.query)} query)"
        )


def graph_from_labels(support, query=(), base: "tuple[Vocab, Vocab] | None" = None) -> KnowledgeGraph:
    """Build a graph from labeled triples, dropping duplicates.

    Vocabularies are built in first-appearance order (support before
    query), or extended atop ``base`` so shared labels keep their indices.
    Query triples that duplicate a support triple are dropped.
    """
    graph, _ = _build(list(support), list(query), base)
    return graph


def _build(support, query, base):
    ent_order, rel_order = [], []
    for h, r, t in list(support) + list(query):
        ent_order.extend((h, t))
        rel_order.append(r)
    if base is None:
        ents, rels = Vocab().extend(ent_order), Vocab().extend(rel_order)
    else:
        ents, rels = base[0].extend(ent_order), base[1].extend(rel_order)

    n_dup = 0
    seen = set()
    out = []
    for part in (support, query):
        rows = []
        for h, r, t in part:
            key = (h, r, t)
            if key in seen:
                n_dup += 1
                continue
            seen.add(key)
            rows.append((ents.index(h), rels.index(r), ents.index(t)))
        out.append(rows)
    return KnowledgeGraph(ents, rels, out[0], out[1]), n_dup


def read_triple_file(path) -> list[tuple[str, str, str]]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"triple file not found: {path}")
    rows = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(f"{path}:{lineno}: expected 3 TAB-separated fields, got {len(parts)}")
            rows.append((parts[0], parts[1], parts[2]))
    return rows


def load_graph(triple_file, query_file=None, base: "KnowledgeGraph | tuple[Vocab, Vocab] | None" = None):
    """Load a graph from TAB-separated triple files.

    Returns ``(graph, n_duplicates)``. With ``base`` given (a graph or a
    ``(entities, relations)`` vocabulary pair) the vocabularies extend the
    base ones; otherwise they are built from scratch.
    """
    support = read_triple_file(triple_file)
    query = read_triple_file(query_file) if query_file is not None else []
    if not support and not query:
        raise EmptyGraphError(f"no triples in {triple_file}")
    if isinstance(base, KnowledgeGraph):
        base = (base.entities, base.relations)
    graph, n_dup = _build(support, query, base)
    if n_dup:
        logger.warning("dropped %d duplicate triples while loading %s", n_dup, triple_file)
    return graph, n_dup


def write_triples(path, graph: KnowledgeGraph, triples: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for h, r, t in graph.labeled(triples):
            fh.write(f"{h}\t{r}\t{t}\n")


def save_graph(graph: KnowledgeGraph, support_path, query_path=None) -> None:
    write_triples(support_path, graph, graph.support)
    if query_path is not None:
        write_triples(query_path, graph, graph.query)


@dataclass(frozen=True, eq=False)
class SeenMask:
    """Which entities/relations of a graph are known to the trained model."""

    entities: np.ndarray
    relations: np.ndarray

    def __post_init__(self):
        for name in ("entities", "relations"):
            arr = np.array(getattr(self, name), dtype=bool)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not self.entities.any() or not self.relations.any():
            raise ConstraintViolation("a seen mask needs at least one seen entity and one seen relation")

    @property
    def n_unseen_entities(self) -> int:
        return int((~self.entities).sum())

    @property
    def n_unseen_relations(self) -> int:
        return int((~self.relations).sum())


def build_seen_mask(test_graph: KnowledgeGraph, train_graph: "KnowledgeGraph | tuple[Vocab, Vocab]") -> SeenMask:
    """Mark test components whose labels occur in the training vocabulary."""
    if isinstance(train_graph, KnowledgeGraph):
        train_ents, train_rels = train_graph.entities, train_graph.relations
    else:
        train_ents, train_rels = train_graph
    ents = np.array([lab in train_ents for lab in test_graph.entities], dtype=bool)
    rels = np.array([lab in train_rels for lab in test_graph.relations], dtype=bool)
    if not ents.any():
        raise ConstraintViolation("test and train graphs share no entities")
    if not rels.any():
        raise ConstraintViolation("test and train graphs share no relations")
    return SeenMask(ents, rels)


class QueryCategory(enum.Enum):
    UNSEEN_ENTITY = "u_ent"
    UNSEEN_RELATION = "u_rel"
    UNSEEN_BOTH = "u_both"
    ALL_SEEN = "all_seen"


def categorize(triple, mask: SeenMask) -> QueryCategory:
    h, r, t = triple
    ent_unseen = not (mask.entities[h] and mask.entities[t])
    if mask.relations[r]:
        return QueryCategory.UNSEEN_ENTITY if ent_unseen else QueryCategory.ALL_SEEN
    return QueryCategory.UNSEEN_BOTH if ent_unseen else QueryCategory.UNSEEN_RELATION


def categorize_all(triples: np.ndarray, mask: SeenMask) -> np.ndarray:
    """Vectorised :func:`categorize`; returns an object array of categories."""
    t = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    ent_unseen = ~(mask.entities[t[:, 0]] & mask.entities[t[:, 2]])
    rel_seen = mask.relations[t[:, 1]]
    out = np.empty(len(t), dtype=object)
    out[rel_seen & ent_unseen] = QueryCategory.UNSEEN_ENTITY
    out[rel_seen & ~ent_unseen] = QueryCategory.ALL_SEEN
    out[~rel_seen & ent_unseen] = QueryCategory.UNSEEN_BOTH
    out[~rel_seen & ~ent_unseen] = QueryCategory.UNSEEN_RELATION
    return out


def category_counts(graph: KnowledgeGraph, mask: SeenMask) -> dict[QueryCategory, int]:
    cats = categorize_all(graph.query, mask)
    return {c: int(sum(1 for x in cats if x is c)) for c in QueryCategory}
