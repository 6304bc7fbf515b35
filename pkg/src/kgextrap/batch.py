"""Flattened task representation used by the model.

A meta-batch of tasks is the disjoint union of their graphs: entity and
relation indices are offset per task, so one forward pass embeds every
task while no information crosses task boundaries.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kg import KnowledgeGraph, SeenMask, triple_keys
from .rpg import build_rpg


@dataclass(frozen=True, eq=False)
class PreparedTask:
    n_entities: int
    n_relations: int
    support: np.ndarray  # (s, 3) local indices
    query: np.ndarray  # (q, 3)
    entity_ids: np.ndarray  # training-graph row per entity, -1 if unseen
    relation_ids: np.ndarray
    meta_counts: np.ndarray  # (n_relations, 4) in-going meta-relation counts
    true_keys: np.ndarray  # sorted keys of support ∪ query
    query_task: np.ndarray  # (q,) task index of each query
    task_entity_lo: np.ndarray  # (n_tasks,) first entity index of each task
    task_entity_hi: np.ndarray
    n_tasks: int = 1

    def keys(self, triples) -> np.ndarray:
        return triple_keys(triples, self.n_entities, self.n_relations)


def prepare(graph: KnowledgeGraph, mask: SeenMask, entity_ids, relation_ids, rpg_mode: str = "edge") -> PreparedTask:
    """Precompute everything a forward pass needs for one (task) graph."""
    entity_ids = np.where(mask.entities, np.asarray(entity_ids, dtype=np.int64), -1)
    relation_ids = np.where(mask.relations, np.asarray(relation_ids, dtype=np.int64), -1)
    rpg = build_rpg(graph.support, graph.n_relations)
    keys = np.sort(graph.keys(graph.all_triples))
    return PreparedTask(
        n_entities=graph.n_entities,
        n_relations=graph.n_relations,
        support=np.asarray(graph.support),
        query=np.asarray(graph.query),
        entity_ids=entity_ids,
        relation_ids=relation_ids,
        meta_counts=rpg.in_kind_counts(rpg_mode),
        true_keys=keys,
        query_task=np.zeros(len(graph.query), dtype=np.int64),
        task_entity_lo=np.zeros(1, dtype=np.int64),
        task_entity_hi=np.array([graph.n_entities], dtype=np.int64),
    )


def prepare_task(task, rpg_mode: str = "edge") -> PreparedTask:
    return prepare(task.graph, task.mask, task.entity_ids, task.relation_ids, rpg_mode)


def with_query(pt: PreparedTask, query: np.ndarray) -> PreparedTask:
    """Same graph, different query rows (all attributed to task 0)."""
    query = np.asarray(query, dtype=np.int64).reshape(-1, 3)
    return PreparedTask(
        pt.n_entities, pt.n_relations, pt.support, query, pt.entity_ids, pt.relation_ids,
        pt.meta_counts, pt.true_keys, np.zeros(len(query), dtype=np.int64),
        pt.task_entity_lo, pt.task_entity_hi, pt.n_tasks,
    )


def collate(tasks: list[PreparedTask]) -> PreparedTask:
    """Disjoint union of prepared tasks, in order."""
    if len(tasks) == 1:
        return tasks[0]
    e_off = np.cumsum([0] + [t.n_entities for t in tasks])
    r_off = np.cumsum([0] + [t.n_relations for t in tasks])
    n_e, n_r = int(e_off[-1]), int(r_off[-1])

    def shift(arr, k):
        return arr + np.array([e_off[k], r_off[k], e_off[k]], dtype=np.int64)

    support = np.concatenate([shift(t.support, k) for k, t in enumerate(tasks)])
    query = np.concatenate([shift(t.query, k) for k, t in enumerate(tasks)])
    return PreparedTask(
        n_entities=n_e,
        n_relations=n_r,
        support=support,
        query=query,
        entity_ids=np.concatenate([t.entity_ids for t in tasks]),
        relation_ids=np.concatenate([t.relation_ids for t in tasks]),
        meta_counts=np.concatenate([t.meta_counts for t in tasks]),
        true_keys=np.sort(triple_keys(np.concatenate([support, query]), n_e, n_r)),
        query_task=np.concatenate([np.full(len(t.query), k, dtype=np.int64) for k, t in enumerate(tasks)]),
        task_entity_lo=e_off[:-1].astype(np.int64),
        task_entity_hi=e_off[1:].astype(np.int64),
        n_tasks=len(tasks),
    )


def training_negatives(pt: PreparedTask, n: int, rng: np.random.Generator, max_rounds: int = 20):
    """``n`` filtered corruptions per query, drawn with replacement.

    Each query corrupts its head or tail (chosen uniformly) with entities
    of its own task; replacements rebuilding a true triple are redrawn.
    Returns ``(negatives (q, n, 3), keep (q,) bool)``; queries with no
    valid corruption at all are marked ``keep=False``.
    """
    q = len(pt.query)
    lo = pt.task_entity_lo[pt.query_task]
    hi = pt.task_entity_hi[pt.query_task]
    slot = np.where(rng.random(q) < 0.5, 0, 2)
    neg = np.repeat(pt.query[:, None, :], n, axis=1)
    rows = np.arange(q)[:, None]
    draw = lambda shape, l, h: l + (rng.random(shape) * (h - l)).astype(np.int64)
    neg[rows, np.arange(n)[None, :], slot[:, None]] = draw((q, n), lo[:, None], hi[:, None])
    keep = np.ones(q, dtype=bool)
    for _ in range(max_rounds):
        bad = np.isin(pt.keys(neg.reshape(-1, 3)), pt.true_keys).reshape(q, n)
        if not bad.any():
            return neg, keep
        qi, ni = np.nonzero(bad)
        neg[qi, ni, slot[qi]] = draw(len(qi), lo[qi], hi[qi])
    # slow path: enumerate the valid replacements for the stubborn queries
    bad = np.isin(pt.keys(neg.reshape(-1, 3)), pt.true_keys).reshape(q, n)
    for i in np.flatnonzero(bad.any(axis=1)):
        cand = np.repeat(pt.query[i][None, :], hi[i] - lo[i], axis=0)
        cand[:, slot[i]] = np.arange(lo[i], hi[i])
        ok = cand[~np.isin(pt.keys(cand), pt.true_keys)]
        if len(ok) == 0:
            keep[i] = False
            continue
        j = np.flatnonzero(bad[i])
        neg[i, j] = ok[(rng.random(len(j)) * len(ok)).astype(np.int64)]
    return neg, keep
