"""Asmp-KGE: a conventional KGE model whose unseen components are derived analytically.

After ordinary training on the training graph, each unseen entity or
relation of an emerging graph is computed from the support triples in
which its two partners are seen, by inverting the score function
(``h + r = t`` for TransE and analogous products for the others), and
averaging over those anchor triples. Components without any anchor get
the mean embedding of all trained entities (or relations).
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .batch import prepare, with_query, training_negatives
from .checkpoint import load_tensors, save_tensors
from .decoder import LossConfig, ScoreFunction, relation_view, score_triples, task_loss
from .errors import ContractError, DivergenceError
from .evaluator import EvalConfig, EvalReport, evaluate
from .kg import KnowledgeGraph, SeenMask, Vocab, build_seen_mask
from .optim import AdamState, adam_step, clip_global_norm

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class KgeConfig:
    score_fn: str = "transe"
    dim: int = 32
    # selected on validation; the meta-trainer's 1e-3 leaves this model near random within the epoch budget
    learning_rate: float = 0.01
    batch_size: int = 64
    max_epochs: int = 200
    max_steps: int | None = None
    # validate every this many epochs; model selection mirrors the meta-trainer
    validation_every: int = 10
    early_stop_patience: int = 3
    grad_clip: float = 1.0
    rng_seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)
    valid_eval: EvalConfig = field(default_factory=lambda: EvalConfig(n_repeats=1))

    def __post_init__(self):
        object.__setattr__(self, "score_fn", ScoreFunction(self.score_fn).value)
        if ScoreFunction(self.score_fn).is_complex and self.dim % 2:
            raise ValueError("complex score functions need an even dim")

    @property
    def fn(self) -> ScoreFunction:
        return ScoreFunction(self.score_fn)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["valid_eval"]["hits_at"] = list(self.valid_eval.hits_at)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "KgeConfig":
        d = dict(d)
        d["loss"] = LossConfig(**d["loss"])
        v = dict(d["valid_eval"])
        v["hits_at"] = tuple(v["hits_at"])
        d["valid_eval"] = EvalConfig(**v)
        return cls(**d)


class KgeModel:
    """Entity and relation embedding tables of a transductive KGE model.

    RotatE relations are stored as phases (``dim/2`` per relation).
    """

    def __init__(self, entity_labels, relation_labels, cfg: KgeConfig | None = None, seed: int | None = None):
        self.cfg = cfg or KgeConfig()
        self.entity_labels = tuple(entity_labels)
        self.relation_labels = tuple(relation_labels)
        rng = np.random.default_rng(self.cfg.rng_seed if seed is None else seed)
        d = self.cfg.dim
        bound = 1.0 / math.sqrt(d)
        ent = rng.uniform(-bound, bound, size=(len(self.entity_labels), d))
        if self.cfg.fn is ScoreFunction.ROTATE:
            rel = rng.uniform(-np.pi, np.pi, size=(len(self.relation_labels), d // 2))
        else:
            rel = rng.uniform(-bound, bound, size=(len(self.relation_labels), d))
        self.params = {"entity": ad.parameter(ent, "entity"), "relation": ad.parameter(rel, "relation")}

    SPARSE = frozenset({"entity", "relation"})

    @property
    def fn(self) -> ScoreFunction:
        return self.cfg.fn

    @property
    def vocab(self) -> tuple[Vocab, Vocab]:
        return Vocab(self.entity_labels), Vocab(self.relation_labels)

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.params.items()}

    def entity_embeddings(self) -> np.ndarray:
        return self.params["entity"].data

    def relation_vectors(self) -> np.ndarray:
        """Relation vectors in the form the score function consumes."""
        return relation_view(self.fn, ad.constant(self.params["relation"].data)).data

    def score(self, triples) -> np.ndarray:
        return score_triples(self.fn, ad.constant(self.entity_embeddings()), ad.constant(self.relation_vectors()), triples).data

    def save(self, path) -> None:
        save_tensors(
            path,
            {f"param.{k}": v for k, v in self.arrays().items()},
            {"kind": "kge", "config": self.cfg.to_dict(), "entities": list(self.entity_labels), "relations": list(self.relation_labels)},
        )

    @classmethod
    def load(cls, path) -> "KgeModel":
        tensors, meta = load_tensors(path)
        if meta.get("kind") != "kge":
            raise ContractError(f"{path} is not a KGE checkpoint")
        m = cls(meta["entities"], meta["relations"], KgeConfig.from_dict(meta["config"]))
        for k in m.params:
            m.params[k].data = tensors[f"param.{k}"]
        return m

    def copy(self) -> "KgeModel":
        m = KgeModel.__new__(KgeModel)
        m.cfg, m.entity_labels, m.relation_labels = self.cfg, self.entity_labels, self.relation_labels
        m.params = {k: ad.parameter(v.data.copy(), k) for k, v in self.params.items()}
        return m


@dataclass
class KgeTrainResult:
    model: KgeModel
    log: list[dict]
    best_report: EvalReport | None = None


def kge_loss(model: KgeModel, triples, negatives, loss_cfg: LossConfig):
    ent = model.params["entity"]
    rel = relation_view(model.fn, model.params["relation"])
    pos = score_triples(model.fn, ent, rel, triples)
    neg = ad.reshape(score_triples(model.fn, ent, rel, negatives.reshape(-1, 3)), (len(triples), negatives.shape[1]))
    return task_loss(pos, neg, loss_cfg)


def train_kge(train_kg: KnowledgeGraph, cfg: KgeConfig | None = None, valid_kg: KnowledgeGraph | None = None) -> KgeTrainResult:
    """Train on all triples of ``train_kg`` with the self-adversarial loss.

    With ``valid_kg`` the model is validated every ``validation_every``
    epochs through :func:`derive_unseen` and the best one is returned.
    """
    cfg = cfg or KgeConfig()
    if len(train_kg.support) == 0:
        raise ContractError("training graph is empty")
    model = KgeModel(train_kg.entities.labels, train_kg.relations.labels, cfg)
    adam = AdamState(lr=cfg.learning_rate, sparse=KgeModel.SPARSE)
    rng = np.random.default_rng([cfg.rng_seed, 2])
    n_e, n_r = train_kg.n_entities, train_kg.n_relations
    full = prepare(train_kg, SeenMask(np.ones(n_e, bool), np.ones(n_r, bool)), np.arange(n_e), np.arange(n_r))
    triples = np.asarray(train_kg.support)

    log: list[dict] = []
    best, best_mrr, best_report, bad = model.copy(), -1.0, None, 0
    step = 0
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(len(triples))
        for lo in range(0, len(order), cfg.batch_size):
            batch = with_query(full, triples[np.sort(order[lo : lo + cfg.batch_size])])
            neg, keep = training_negatives(batch, cfg.loss.n_negatives, rng)
            if not keep.any():
                continue
            with ad.Tape() as tape:
                loss = kge_loss(model, batch.query[keep], neg[keep], cfg.loss)
            if not math.isfinite(loss.item()):
                err = DivergenceError(f"non-finite KGE loss at step {step}")
                err.model = best
                raise err
            grads = tape.backward(loss, model.params)
            clip_global_norm(grads, cfg.grad_clip)
            adam_step(model.arrays(), grads, adam)
            step += 1
            log.append({"step": step, "epoch": epoch, "loss": round(loss.item(), 10)})
            if cfg.max_steps is not None and step >= cfg.max_steps:
                break
        done = cfg.max_steps is not None and step >= cfg.max_steps
        last = done or epoch == cfg.max_epochs - 1
        if valid_kg is not None and ((epoch + 1) % cfg.validation_every == 0 or last):
            report = evaluate_asmp(model, valid_kg, cfg.valid_eval, label="valid")
            report.step = step
            mrr = report.metric("all", "mrr")
            log.append({"step": step, "valid_mrr": round(mrr, 10)})
            if mrr > best_mrr:
                best, best_mrr, best_report, bad = model.copy(), mrr, report, 0
            else:
                bad += 1
                if bad >= cfg.early_stop_patience:
                    break
        if done:
            break
    if valid_kg is None:
        best = model
    return KgeTrainResult(best, log, best_report)


# ---------------------------------------------------------------- derivation


def _to_c(x: np.ndarray) -> np.ndarray:
    return x[..., 0::2] + 1j * x[..., 1::2]


def _from_c(z: np.ndarray) -> np.ndarray:
    out = np.empty(z.shape[:-1] + (2 * z.shape[-1],))
    out[..., 0::2], out[..., 1::2] = z.real, z.imag
    return out


def hr2t(fn, h, r):
    """Tail implied by head ``h`` and relation vector ``r``."""
    fn = ScoreFunction(fn)
    if fn is ScoreFunction.TRANSE:
        return h + r
    if fn is ScoreFunction.DISTMULT:
        return h * r
    return _from_c(_to_c(h) * _to_c(r))


def tr2h(fn, t, r):
    """Head implied by tail ``t`` and relation vector ``r``."""
    fn = ScoreFunction(fn)
    if fn is ScoreFunction.TRANSE:
        return t - r
    if fn is ScoreFunction.DISTMULT:
        return t * r
    if fn is ScoreFunction.COMPLEX:
        return _from_c(np.conj(np.conj(_to_c(t)) * _to_c(r)))
    rc = _to_c(r)
    if np.any(np.abs(rc) == 0):
        raise ZeroDivisionError("relation has a zero-modulus coordinate")
    return _from_c(_to_c(t) / rc)


def ht2r(fn, h, t):
    """Relation vector implied by head ``h`` and tail ``t``."""
    fn = ScoreFunction(fn)
    if fn is ScoreFunction.TRANSE:
        return t - h
    if fn is ScoreFunction.DISTMULT:
        return h * t
    if fn is ScoreFunction.COMPLEX:
        return _from_c(np.conj(_to_c(h) * np.conj(_to_c(t))))
    hc = _to_c(h)
    if np.any(np.abs(hc) == 0):
        raise ZeroDivisionError("head has a zero-modulus coordinate")
    return _from_c(_to_c(t) / hc)


@dataclass
class DerivationPlan:
    """Anchor support-triple rows for every unseen component, fixed before any derivation."""

    entity_anchors: dict[int, list[int]]
    relation_anchors: dict[int, list[int]]

    @property
    def entity_fallbacks(self) -> list[int]:
        return [e for e, a in self.entity_anchors.items() if not a]

    @property
    def relation_fallbacks(self) -> list[int]:
        return [r for r, a in self.relation_anchors.items() if not a]


def one_pass_inference_order(test_kg: KnowledgeGraph, mask: SeenMask) -> DerivationPlan:
    """Anchors use only components seen in training; derived ones never anchor others."""
    ents = {int(e): [] for e in np.flatnonzero(~mask.entities)}
    rels = {int(r): [] for r in np.flatnonzero(~mask.relations)}
    for i, (h, r, t) in enumerate(np.asarray(test_kg.support).tolist()):
        sh, sr, st = mask.entities[h], mask.relations[r], mask.entities[t]
        if not sh and sr and st:
            ents[h].append(i)
        if not st and sh and sr:
            ents[t].append(i)
        if not sr and sh and st:
            rels[r].append(i)
    return DerivationPlan(ents, rels)


def derive_unseen(model: KgeModel, test_kg: KnowledgeGraph, mask: SeenMask | None = None):
    """Embeddings for every test entity and relation vector, in test-graph index order.

    Returns ``(entity (n_e, d), relation_vectors (n_r, d))``; relation
    vectors are in score-function form (complex pairs for RotatE).
    """
    fn = model.fn
    if mask is None:
        mask = build_seen_mask(test_kg, model.vocab)
    e_vocab, r_vocab = model.vocab
    e_ids = e_vocab.lookup(test_kg.entities.labels)
    r_ids = r_vocab.lookup(test_kg.relations.labels)
    train_ent, train_rel = model.entity_embeddings(), model.relation_vectors()
    d = train_ent.shape[1]
    ent = np.empty((test_kg.n_entities, d))
    rel = np.empty((test_kg.n_relations, train_rel.shape[1]))
    ent[mask.entities] = train_ent[e_ids[mask.entities]]
    rel[mask.relations] = train_rel[r_ids[mask.relations]]

    plan = one_pass_inference_order(test_kg, mask)
    sup = np.asarray(test_kg.support)
    seen_e = lambda i: train_ent[e_ids[i]]
    seen_r = lambda i: train_rel[r_ids[i]]

    def average(derived, fallback):
        return np.mean(derived, axis=0) if derived else fallback

    for e, anchors in plan.entity_anchors.items():
        derived = []
        for i in anchors:
            h, r, t = sup[i].tolist()
            try:
                derived.append(hr2t(fn, seen_e(h), seen_r(r)) if t == e else tr2h(fn, seen_e(t), seen_r(r)))
            except ZeroDivisionError as exc:
                logger.warning("skipping anchor triple %d for entity %d: %s", i, e, exc)
        ent[e] = average(derived, train_ent.mean(axis=0))
    for r_, anchors in plan.relation_anchors.items():
        derived = []
        for i in anchors:
            h, _, t = sup[i].tolist()
            try:
                derived.append(ht2r(fn, seen_e(h), seen_e(t)))
            except ZeroDivisionError as exc:
                logger.warning("skipping anchor triple %d for relation %d: %s", i, r_, exc)
        rel[r_] = average(derived, train_rel.mean(axis=0))
    return ent, rel


def asmp_scorer(model: KgeModel, test_kg: KnowledgeGraph, mask: SeenMask | None = None):
    ent, rel = derive_unseen(model, test_kg, mask)
    e, r = ad.constant(ent), ad.constant(rel)

    def scorer(triples):
        return score_triples(model.fn, e, r, triples).data

    scorer.embeddings = (ent, rel)
    return scorer


def evaluate_asmp(model: KgeModel, test_kg: KnowledgeGraph, cfg: EvalConfig | None = None, label: str = "") -> EvalReport:
    mask = build_seen_mask(test_kg, model.vocab)
    return evaluate(asmp_scorer(model, test_kg, mask), test_kg, mask, cfg or EvalConfig(), label=label)
