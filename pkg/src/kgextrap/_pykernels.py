"""Pure numpy implementations of the hot kernels.

Every function here has a twin in ``_ckernels.pyx`` that must return
bit-identical results; ``kernels.py`` picks one at import.
"""
import numpy as np

N_KINDS = 4  # TH, HT, HH, TT


def segment_sum(values, index, n_groups):
    values = np.ascontiguousarray(values, dtype=np.float64)
    index = np.ascontiguousarray(index, dtype=np.int64)
    flat = values.reshape(values.shape[0], -1)
    out = np.zeros((n_groups, flat.shape[1]), dtype=np.float64)
    np.add.at(out, index, flat)
    return out.reshape((n_groups,) + values.shape[1:])


def rpg_adjacency(heads, rels, tails, n_relations):
    heads = np.asarray(heads, dtype=np.int64)
    rels = np.asarray(rels, dtype=np.int64)
    tails = np.asarray(tails, dtype=np.int64)
    adj = np.zeros((N_KINDS, n_relations, n_relations), dtype=bool)
    if heads.size == 0:
        return adj
    n_ent = int(max(heads.max(), tails.max())) + 1
    head_inc = np.zeros((n_ent, n_relations), dtype=np.int64)
    tail_inc = np.zeros((n_ent, n_relations), dtype=np.int64)
    np.add.at(head_inc, (heads, rels), 1)
    np.add.at(tail_inc, (tails, rels), 1)
    adj[0] = (tail_inc.T @ head_inc) > 0
    adj[1] = adj[0].T
    hh = (head_inc.T @ head_inc) > 0
    tt = (tail_inc.T @ tail_inc) > 0
    # a relation pairs with itself only through two distinct incidences
    np.fill_diagonal(hh, (head_inc >= 2).any(axis=0))
    np.fill_diagonal(tt, (tail_inc >= 2).any(axis=0))
    adj[2] = hh
    adj[3] = tt
    return adj


def random_walk(indptr, indices, start, uniforms):
    path = [int(start)]
    cur = int(start)
    for u in uniforms:
        lo, hi = indptr[cur], indptr[cur + 1]
        deg = hi - lo
        if deg == 0:
            break
        k = int(u * deg)
        if k >= deg:
            k = deg - 1
        cur = int(indices[lo + k])
        path.append(cur)
    return np.asarray(path, dtype=np.int64)
