"""Parameter store and forward pass of the meta-learned extrapolation model."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .batch import PreparedTask
from .decoder import ScoreFunction, relation_view, score_triples
from .encoder import encode, layer_shapes
from .featurizer import entity_features, relation_features
from .rpg import N_META

ABLATIONS = ("Meta", "RelFeat", "EntFeat", "GNN")


@dataclass(frozen=True)
class ModelConfig:
    score_fn: str = "transe"
    dim: int = 32
    hidden_dim: int = 32
    n_layers: int = 2
    rpg_mode: str = "edge"
    ablations: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "score_fn", ScoreFunction(self.score_fn).value)
        object.__setattr__(self, "ablations", frozenset(self.ablations))
        unknown = set(self.ablations) - set(ABLATIONS)
        if unknown:
            raise ValueError(f"unknown ablations {sorted(unknown)}; valid: {list(ABLATIONS)}")
        if ScoreFunction(self.score_fn).is_complex and self.dim % 2:
            raise ValueError("complex score functions need an even dim")
        if self.rpg_mode not in ("edge", "kind"):
            raise ValueError("rpg_mode must be 'edge' or 'kind'")

    @property
    def fn(self) -> ScoreFunction:
        return ScoreFunction(self.score_fn)

    @property
    def use_gnn(self) -> bool:
        return "GNN" not in self.ablations

    @property
    def relation_feature_dim(self) -> int:
        # without the GNN, relation features are the relation embeddings
        return self.dim if self.use_gnn else self.fn.relation_output_dim(self.dim)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ablations"] = sorted(self.ablations)
        return d


def _uniform(rng, shape, bound):
    return rng.uniform(-bound, bound, size=shape)


class MakerModel:
    """Feature banks, meta-relation vectors, direction weights and GNN weights."""

    def __init__(self, n_entities: int, n_relations: int, cfg: ModelConfig | None = None, seed: int = 0):
        self.cfg = cfg or ModelConfig()
        self.n_entities, self.n_relations = n_entities, n_relations
        rng = np.random.default_rng(seed)
        d_e, d_r = self.cfg.dim, self.cfg.relation_feature_dim
        shapes = {
            "entity_features": (n_entities, d_e),
            "relation_features": (n_relations, d_r),
            "meta_relations": (N_META, d_r),
            "W_ent_in": (d_e, d_r),
            "W_ent_out": (d_e, d_r),
        }
        if self.cfg.use_gnn:
            shapes.update(
                layer_shapes(
                    self.cfg.n_layers, d_e, d_r, self.cfg.hidden_dim, self.cfg.dim, self.cfg.fn.relation_output_dim(self.cfg.dim)
                )
            )
        self.params: dict[str, ad.Tensor] = {}
        for name in sorted(shapes):
            shape = shapes[name]
            if name in ("entity_features", "relation_features", "meta_relations"):
                bound = 1.0 / np.sqrt(shape[1])
            else:
                bound = np.sqrt(6.0 / (shape[0] + shape[1]))
            self.params[name] = ad.parameter(_uniform(rng, shape, bound), name=name)

    # sparse rows: only banks indexed by training-graph ids
    SPARSE = frozenset({"entity_features", "relation_features"})

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for k, v in arrays.items():
            if k in self.params:
                if self.params[k].shape != v.shape:
                    raise ValueError(f"shape mismatch for {k}: {v.shape} vs {self.params[k].shape}")
                self.params[k].data = np.array(v, dtype=np.float64)

    def features(self, pt: PreparedTask, rng: np.random.Generator | None = None):
        p, abl = self.params, self.cfg.ablations
        rel_rng = rng if "RelFeat" in abl else None
        ent_rng = rng if "EntFeat" in abl else None
        if (rel_rng is not None or ent_rng is not None) and rng is None:
            raise ValueError("random-feature ablations need an rng")
        rel = relation_features(pt, p["relation_features"], p["meta_relations"], random_unseen=rel_rng)
        ent = entity_features(pt, rel, p["entity_features"], p["W_ent_in"], p["W_ent_out"], random_unseen=ent_rng)
        return ent, rel

    def embed(self, pt: PreparedTask, rng: np.random.Generator | None = None):
        """``(entity_embeddings, relation_vectors)`` for every component of ``pt``."""
        ent, rel = self.features(pt, rng)
        if self.cfg.use_gnn:
            ent, rel = encode(pt.support, ent, rel, self.params, self.cfg.n_layers)
        return ent, relation_view(self.cfg.fn, rel)

    def score(self, ent: ad.Tensor, rel_vectors: ad.Tensor, triples) -> ad.Tensor:
        return score_triples(self.cfg.fn, ent, rel_vectors, triples)
