"""Small synthetic knowledge graphs with deterministic relational structure."""
from __future__ import annotations

import numpy as np

from .kg import KnowledgeGraph, graph_from_labels

# displacement of each relation on the grid
DEFAULT_OFFSETS = (
    (1, 0), (0, 1), (1, 1), (1, -1), (2, 0), (0, 2),
    (2, 1), (1, 2), (2, -1), (3, 0), (0, 3), (2, 2),
)


def grid_kg(width: int = 20, height: int = 20, offsets=DEFAULT_OFFSETS, keep_prob: float = 0.3, seed: int = 0) -> KnowledgeGraph:
    """Entities are grid cells; relation ``k`` links a cell to the cell displaced by ``offsets[k]``.

    Each candidate triple is kept with probability ``keep_prob``. The
    result is compositional: every relation is a fixed translation, so
    facts about a cell follow from its position.
    """
    rng = np.random.default_rng(seed)
    triples = []
    for k, (dx, dy) in enumerate(offsets):
        for x in range(width):
            for y in range(height):
                u, v = x + dx, y + dy
                if 0 <= u < width and 0 <= v < height and rng.random() < keep_prob:
                    triples.append((f"c{x}_{y}", f"move{dx}_{dy}".replace("-", "m"), f"c{u}_{v}"))
    return graph_from_labels(triples)


def chain_kg(n_triples: int = 50, n_relations: int = 5, n_entities: int | None = None, seed: int = 0) -> KnowledgeGraph:
    """A random graph with exactly ``n_triples`` distinct triples touching every entity.

    Up to ``n_triples + 1`` entities it is connected (a random tree plus
    extra edges); beyond that it is a forest of random trees.
    """
    rng = np.random.default_rng(seed)
    n_entities = max(2, n_triples // 2 + 1) if n_entities is None else n_entities
    if not 2 <= n_entities <= 2 * n_triples:
        raise ValueError("need 2 <= n_entities <= 2 * n_triples")
    seen, triples = set(), []
    n_trees = max(1, n_entities - n_triples)
    for i in range(1, n_entities):
        # entities 0..n_trees-1 are roots; the rest attach to an earlier entity of any tree
        if i < n_trees:
            continue
        j = i - n_trees if i < 2 * n_trees else int(rng.integers(i))
        t = (f"e{j}", f"r{int(rng.integers(n_relations))}", f"e{i}")
        seen.add(t)
        triples.append(t)
    while len(triples) < n_triples:
        a, b = rng.integers(n_entities, size=2)
        if a == b:
            continue
        t = (f"e{a}", f"r{int(rng.integers(n_relations))}", f"e{b}")
        if t not in seen:
            seen.add(t)
            triples.append(t)
    return graph_from_labels(triples[:n_triples])


def schema_kg(
    n_types: int = 6,
    per_type: int = 60,
    n_base: int = 14,
    n_composed: int = 8,
    keep_base: float = 0.8,
    keep_composed: float = 0.6,
    seed: int = 0,
) -> KnowledgeGraph:
    """Typed entities with functional relations and relations composed from them.

    Base relation ``k`` maps type ``src`` onto type ``dst`` through a fixed
    random bijection. A composed relation is the chain of two base
    relations whose types line up, so each of its facts is implied by a
    two-step path. Every fact is kept independently with the given
    probability.
    """
    rng = np.random.default_rng(seed)
    base = []
    for k in range(n_base):
        src, dst = rng.integers(n_types, size=2)
        base.append((int(src), int(dst), rng.permutation(per_type)))
    chains = [(i, j) for i in range(n_base) for j in range(n_base) if base[i][1] == base[j][0]]
    if len(chains) < n_composed:
        raise ValueError("not enough composable base relation pairs; raise n_base or lower n_composed")
    picked = [chains[c] for c in sorted(rng.choice(len(chains), size=n_composed, replace=False).tolist())]

    name = lambda t, i: f"t{t}_{i}"
    triples = []
    for k, (src, dst, perm) in enumerate(base):
        for i in range(per_type):
            if rng.random() < keep_base:
                triples.append((name(src, i), f"base{k}", name(dst, int(perm[i]))))
    for c, (i, j) in enumerate(picked):
        src, _, p1 = base[i]
        _, dst, p2 = base[j]
        for e in range(per_type):
            if rng.random() < keep_composed:
                triples.append((name(src, e), f"comp{c}", name(dst, int(p2[p1[e]]))))
    return graph_from_labels(list(dict.fromkeys(triples)))
