"""Knowledge-extrapolation GNN over support triples.

Each layer sends ``W_out [h_r; h_t]`` to the head and ``W_in [h_r; h_h]``
to the tail of every support triple, averages an entity's messages over
its incidences, adds ``W_self h_e``, and updates relations with
``W_rel h_r``. Hidden layers use relu; the last layer is linear.
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .errors import ContractError


def layer_names(l: int) -> tuple[str, str, str, str]:
    return (f"gnn.{l}.W_out", f"gnn.{l}.W_in", f"gnn.{l}.W_self", f"gnn.{l}.W_rel")


def layer_shapes(n_layers: int, d_ent: int, d_rel: int, hidden: int, out_ent: int, out_rel: int):
    """``{name: shape}`` for all GNN weights; dims chain layer to layer."""
    shapes = {}
    e_in, r_in = d_ent, d_rel
    for l in range(n_layers):
        last = l == n_layers - 1
        e_out, r_out = (out_ent, out_rel) if last else (hidden, hidden)
        w_out, w_in, w_self, w_rel = layer_names(l)
        shapes[w_out] = (e_out, r_in + e_in)
        shapes[w_in] = (e_out, r_in + e_in)
        shapes[w_self] = (e_out, e_in)
        shapes[w_rel] = (r_out, r_in)
        e_in, r_in = e_out, r_out
    return shapes


def encode(support: np.ndarray, ent: ad.Tensor, rel: ad.Tensor, params: dict, n_layers: int):
    """Return ``(entity_embeddings, relation_embeddings)`` after ``n_layers`` layers."""
    support = np.asarray(support, dtype=np.int64).reshape(-1, 3)
    n_e = ent.shape[0]
    h, r, t = support[:, 0], support[:, 1], support[:, 2]
    degree = np.bincount(h, minlength=n_e) + np.bincount(t, minlength=n_e)
    if np.any(degree == 0):
        raise ContractError(f"entity {int(np.flatnonzero(degree == 0)[0])} has no support triple; cannot aggregate")
    targets = np.concatenate([h, t])
    for l in range(n_layers):
        w_out, w_in, w_self, w_rel = (params[k] for k in layer_names(l))
        rel_rows = ad.gather(rel, r)
        to_head = ad.linear(ad.concat([rel_rows, ad.gather(ent, t)], axis=-1), w_out)
        to_tail = ad.linear(ad.concat([rel_rows, ad.gather(ent, h)], axis=-1), w_in)
        agg = ad.scatter_mean(ad.concat([to_head, to_tail], axis=0), targets, n_e)
        ent_next = agg + ad.linear(ent, w_self)
        rel_next = ad.linear(rel, w_rel)
        if l < n_layers - 1:
            ent_next, rel_next = ad.relu(ent_next), ad.relu(rel_next)
        ent, rel = ent_next, rel_next
    return ent, rel
