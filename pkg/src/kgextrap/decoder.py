"""Triple score functions and the self-adversarial negative sampling loss."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ContractError, ShapeError


class ScoreFunction(str, enum.Enum):
    TRANSE = "transe"
    DISTMULT = "distmult"
    COMPLEX = "complex"
    ROTATE = "rotate"

    @property
    def is_complex(self) -> bool:
        return self in (ScoreFunction.COMPLEX, ScoreFunction.ROTATE)

    def relation_output_dim(self, dim: int) -> int:
        """Width of the model's raw relation output (RotatE emits one phase per complex coordinate)."""
        return dim // 2 if self is ScoreFunction.ROTATE else dim


@dataclass(frozen=True)
class LossConfig:
    margin: float = 10.0
    n_negatives: int = 32
    adversarial_temperature: float = 1.0

    def __post_init__(self):
        if self.n_negatives < 1:
            raise ValueError("n_negatives must be >= 1")
        if self.adversarial_temperature < 0:
            raise ValueError("adversarial_temperature must be >= 0")


def as_complex(x: ad.Tensor) -> ad.Tensor:
    """View ``(..., d)`` interleaved real/imaginary values as ``(..., d/2, 2)``."""
    if x.shape[-1] % 2:
        raise ShapeError(f"complex embeddings need an even width, got {x.shape[-1]}")
    return ad.reshape(x, x.shape[:-1] + (x.shape[-1] // 2, 2))


def relation_view(fn: ScoreFunction, rel: ad.Tensor) -> ad.Tensor:
    """Map raw relation outputs to the vectors the score function consumes.

    RotatE relations are phases θ turned into unit complex numbers
    ``(cos θ, sin θ)``, interleaved to width ``2·len(θ)``.
    """
    fn = ScoreFunction(fn)
    if fn is ScoreFunction.ROTATE:
        c = ad.complex_from_phase(rel)
        return ad.reshape(c, rel.shape[:-1] + (2 * rel.shape[-1],))
    return rel


def score(h, r, t, fn) -> ad.Tensor:
    """Plausibility of triples; higher is better.

    Inputs are ``(d,)`` vectors or ``(n, d)`` rows. Complex models read
    them as interleaved pairs; RotatE expects ``r`` already in complex
    form (see :func:`relation_view`).
    """
    fn = ScoreFunction(fn)
    h, r, t = ad.constant(h), ad.constant(r), ad.constant(t)
    if not (h.shape == r.shape == t.shape):
        raise ShapeError(f"score: embedding shapes differ: {h.shape}, {r.shape}, {t.shape}")
    if fn is ScoreFunction.TRANSE:
        return -ad.l1_norm(h + r - t)
    if fn is ScoreFunction.DISTMULT:
        return ad.sum_(h * r * t, axis=-1)
    hc, rc, tc = as_complex(h), as_complex(r), as_complex(t)
    if fn is ScoreFunction.COMPLEX:
        prod = ad.complex_mul(ad.complex_mul(hc, rc), ad.complex_conj(tc))
        return ad.sum_(ad.complex_real(prod), axis=-1)
    diff = ad.complex_mul(hc, rc) - tc
    return -ad.sum_(ad.complex_abs(diff), axis=-1)


def score_triples(fn, ent: ad.Tensor, rel_vectors: ad.Tensor, triples: np.ndarray) -> ad.Tensor:
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    return score(
        ad.gather(ent, triples[:, 0]), ad.gather(rel_vectors, triples[:, 1]), ad.gather(ent, triples[:, 2]), fn
    )


def adversarial_weights(neg_scores, alpha: float) -> np.ndarray:
    """Softmax of ``alpha``-scaled negative scores along the last axis (no gradient)."""
    s = np.asarray(neg_scores.data if isinstance(neg_scores, ad.Tensor) else neg_scores, dtype=np.float64)
    if s.size == 0:
        raise ContractError("adversarial weights need at least one negative score")
    z = alpha * s
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def task_loss(pos: ad.Tensor, neg: ad.Tensor, cfg: LossConfig, query_task=None, n_tasks: int = 1, adv_weights=None):
    """Self-adversarial loss summed over tasks, averaged over each task's queries.

    ``pos`` has shape ``(q,)`` and ``neg`` ``(q, n)``. ``adv_weights``
    overrides the (detached) softmax weights, e.g. to freeze them for a
    finite-difference check.
    """
    if pos.shape[0] == 0:
        raise ContractError("task loss needs at least one query triple")
    if neg.ndim != 2 or neg.shape[0] != pos.shape[0]:
        raise ShapeError(f"negative scores must be (q, n) with q={pos.shape[0]}, got {neg.shape}")
    gamma = cfg.margin
    p = adversarial_weights(neg.data, cfg.adversarial_temperature) if adv_weights is None else np.asarray(adv_weights)
    pos_term = -ad.log_sigmoid(gamma + pos)
    neg_term = -ad.sum_(ad.constant(p) * ad.log_sigmoid(-gamma - neg), axis=1)
    per_query = pos_term + neg_term
    if query_task is None:
        return ad.mean(per_query)
    per_task = ad.scatter_mean(per_query, np.asarray(query_task, dtype=np.int64), n_tasks)
    return ad.sum_(per_task)
