"""Input features for task components.

Seen components look up rows of the learnable feature banks. An unseen
relation averages the meta-relation vectors of its in-going RPG edges;
an unseen entity averages direction-specific projections of the
relations it touches in the support triples (one term per incidence).
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .batch import PreparedTask
from .errors import ContractError


def _assemble(n: int, seen_idx, seen_rows: ad.Tensor | None, unseen_idx, unseen_rows: ad.Tensor | None) -> ad.Tensor:
    """Interleave seen and unseen rows back into local index order."""
    parts = [p for p in (seen_rows, unseen_rows) if p is not None]
    stacked = parts[0] if len(parts) == 1 else ad.concat(parts, axis=0)
    order = np.concatenate([seen_idx, unseen_idx]) if len(parts) == 2 else (seen_idx if seen_rows is not None else unseen_idx)
    if len(order) != n:
        raise ContractError("feature assembly does not cover every component")
    if np.array_equal(order, np.arange(n)):
        return stacked
    return ad.gather(stacked, np.argsort(order, kind="stable"))


def bounded_random(bank: np.ndarray, n_rows: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random rows bounded componentwise by the min/max of ``bank``."""
    lo, hi = bank.min(axis=0), bank.max(axis=0)
    return lo + rng.random((n_rows, bank.shape[1])) * (hi - lo)


def meta_relation_weights(meta_counts: np.ndarray) -> np.ndarray:
    """Row-normalised in-edge kind counts; isolated rel-nodes weigh all kinds equally."""
    counts = np.asarray(meta_counts, dtype=np.float64)
    totals = counts.sum(axis=1, keepdims=True)
    return np.where(totals > 0, counts / np.where(totals > 0, totals, 1.0), 0.25)


def relation_features(pt: PreparedTask, relation_bank: ad.Tensor, meta: ad.Tensor, random_unseen=None) -> ad.Tensor:
    """``(n_relations, d_r)`` features; ``random_unseen`` = rng enables the -RelFeat ablation."""
    seen = pt.relation_ids >= 0
    seen_idx, unseen_idx = np.flatnonzero(seen), np.flatnonzero(~seen)
    seen_rows = ad.gather(relation_bank, pt.relation_ids[seen_idx]) if len(seen_idx) else None
    unseen_rows = None
    if len(unseen_idx):
        if random_unseen is not None:
            unseen_rows = ad.constant(bounded_random(relation_bank.data, len(unseen_idx), random_unseen))
        else:
            w = meta_relation_weights(pt.meta_counts[unseen_idx])
            unseen_rows = ad.matmul(ad.constant(w), meta)
    return _assemble(pt.n_relations, seen_idx, seen_rows, unseen_idx, unseen_rows)


def entity_features(
    pt: PreparedTask,
    rel_feats: ad.Tensor,
    entity_bank: ad.Tensor,
    w_in: ad.Tensor,
    w_out: ad.Tensor,
    random_unseen=None,
) -> ad.Tensor:
    """``(n_entities, d_e)`` features; ``random_unseen`` = rng enables the -EntFeat ablation."""
    seen = pt.entity_ids >= 0
    seen_idx, unseen_idx = np.flatnonzero(seen), np.flatnonzero(~seen)
    seen_rows = ad.gather(entity_bank, pt.entity_ids[seen_idx]) if len(seen_idx) else None
    unseen_rows = None
    if len(unseen_idx):
        if random_unseen is not None:
            unseen_rows = ad.constant(bounded_random(entity_bank.data, len(unseen_idx), random_unseen))
        else:
            pos = np.full(pt.n_entities, -1, dtype=np.int64)
            pos[unseen_idx] = np.arange(len(unseen_idx))
            h, r, t = pt.support[:, 0], pt.support[:, 1], pt.support[:, 2]
            out_mask, in_mask = pos[h] >= 0, pos[t] >= 0
            hits = np.bincount(pos[h[out_mask]], minlength=len(unseen_idx)) + np.bincount(
                pos[t[in_mask]], minlength=len(unseen_idx)
            )
            if np.any(hits == 0):
                missing = unseen_idx[np.flatnonzero(hits == 0)[0]]
                raise ContractError(f"unseen entity {missing} has no support triple to build its feature from")
            proj_out = ad.linear(ad.gather(rel_feats, r[out_mask]), w_out)
            proj_in = ad.linear(ad.gather(rel_feats, r[in_mask]), w_in)
            unseen_rows = ad.scatter_mean(
                ad.concat([proj_out, proj_in], axis=0),
                np.concatenate([pos[h[out_mask]], pos[t[in_mask]]]),
                len(unseen_idx),
            )
    return _assemble(pt.n_entities, seen_idx, seen_rows, unseen_idx, unseen_rows)
