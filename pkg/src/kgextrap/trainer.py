"""Meta-training over sampled tasks, plus the -Meta (whole-graph) variant."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .batch import PreparedTask, collate, prepare, prepare_task, training_negatives, with_query
from .checkpoint import load_tensors, save_tensors
from .decoder import LossConfig, score_triples, task_loss
from .errors import ContractError, DivergenceError
from .evaluator import EvalConfig, EvalReport, evaluate
from .kg import KnowledgeGraph, SeenMask, Vocab, build_seen_mask
from .model import MakerModel, ModelConfig
from .optim import AdamState, adam_step, clip_global_norm
from .sampler import Task, TaskSampleParams, sample_tasks

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    n_tasks: int = 10_000
    batch_size: int = 64
    learning_rate: float = 1e-3
    max_epochs: int = 10
    max_steps: int | None = None
    validation_every: int = 500
    early_stop_patience: int = 3
    rng_seed: int = 0
    grad_clip: float = 1.0
    # triples per step when the -Meta ablation trains on the whole graph
    full_graph_batch: int = 512
    threads: int = 1
    valid_eval: EvalConfig = field(default_factory=lambda: EvalConfig(n_repeats=1))
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    tasks: TaskSampleParams = field(default_factory=TaskSampleParams)

    def __post_init__(self):
        if self.batch_size > self.n_tasks:
            raise ValueError("batch_size must not exceed n_tasks")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = self.model.to_dict()
        d["tasks"]["relabel_ratio_range"] = list(self.tasks.relabel_ratio_range)
        d["valid_eval"]["hits_at"] = list(self.valid_eval.hits_at)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["model"] = ModelConfig(**{**d["model"], "ablations": frozenset(d["model"].get("ablations", ()))})
        d["loss"] = LossConfig(**d["loss"])
        t = dict(d["tasks"])
        t["relabel_ratio_range"] = tuple(t["relabel_ratio_range"])
        d["tasks"] = TaskSampleParams(**t)
        v = dict(d["valid_eval"])
        v["hits_at"] = tuple(v["hits_at"])
        d["valid_eval"] = EvalConfig(**v)
        return cls(**d)


@dataclass
class Checkpoint:
    params: dict[str, np.ndarray]
    adam: AdamState
    config: TrainConfig
    step: int
    entity_labels: tuple[str, ...]
    relation_labels: tuple[str, ...]
    valid_mrr: float | None = None

    def model(self) -> MakerModel:
        m = MakerModel(len(self.entity_labels), len(self.relation_labels), self.config.model, seed=0)
        m.load_arrays(self.params)
        return m

    @property
    def vocab(self) -> tuple[Vocab, Vocab]:
        return Vocab(self.entity_labels), Vocab(self.relation_labels)

    def save(self, path) -> None:
        tensors = {f"param.{k}": v for k, v in self.params.items()}
        tensors.update(self.adam.to_arrays())
        meta = {
            "kind": "maker",
            "config": self.config.to_dict(),
            "step": self.step,
            "adam": self.adam.hyper(),
            "entities": list(self.entity_labels),
            "relations": list(self.relation_labels),
            "valid_mrr": self.valid_mrr,
        }
        save_tensors(path, tensors, meta)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        tensors, meta = load_tensors(path)
        if meta.get("kind") != "maker":
            raise ContractError(f"{path} is not a model checkpoint")
        params = {k[len("param."):]: v for k, v in tensors.items() if k.startswith("param.")}
        adam = AdamState.from_arrays(meta["adam"], {k: v for k, v in tensors.items() if k.startswith("adam.")})
        return cls(
            params=params,
            adam=adam,
            config=TrainConfig.from_dict(meta["config"]),
            step=meta["step"],
            entity_labels=tuple(meta["entities"]),
            relation_labels=tuple(meta["relations"]),
            valid_mrr=meta.get("valid_mrr"),
        )


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    log: list[dict]
    best_report: EvalReport | None = None

    def write_log(self, path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            for rec in self.log:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


# ---------------------------------------------------------------- scoring helpers


def graph_ids(graph: KnowledgeGraph, vocab: tuple[Vocab, Vocab]):
    """Training-graph row of every component of ``graph`` (-1 if unseen) and its seen mask."""
    mask = build_seen_mask(graph, vocab)
    return mask, vocab[0].lookup(graph.entities.labels), vocab[1].lookup(graph.relations.labels)


def model_scorer(model: MakerModel, graph: KnowledgeGraph, mask: SeenMask, entity_ids, relation_ids, rng=None):
    """Embed ``graph`` from its support triples once and score triples against it."""
    pt = prepare(graph, mask, entity_ids, relation_ids, model.cfg.rpg_mode)
    ent, rel = model.embed(pt, rng)

    def scorer(triples):
        return score_triples(model.cfg.fn, ent, rel, triples).data

    scorer.embeddings = (ent.data, rel.data)
    return scorer


def evaluate_model(model: MakerModel, vocab, graph: KnowledgeGraph, cfg: EvalConfig, label: str = "", seed: int = 0) -> EvalReport:
    mask, e_ids, r_ids = graph_ids(graph, vocab)
    scorer = model_scorer(model, graph, mask, e_ids, r_ids, rng=np.random.default_rng([seed, 7]))
    return evaluate(scorer, graph, mask, cfg, label=label)


def validate(checkpoint: Checkpoint, valid_kg: KnowledgeGraph, cfg: EvalConfig | None = None) -> EvalReport:
    cfg = cfg or checkpoint.config.valid_eval
    report = evaluate_model(checkpoint.model(), checkpoint.vocab, valid_kg, cfg, label="valid", seed=checkpoint.config.rng_seed)
    report.step = checkpoint.step
    return report


# ---------------------------------------------------------------- loss


def batch_loss(model: MakerModel, pt: PreparedTask, negatives, keep, loss_cfg: LossConfig, rng=None, adv_weights=None):
    """Sum over the batch's tasks of each task's mean query loss."""
    ent, rel = model.embed(pt, rng)
    q = pt.query[keep]
    if len(q) == 0:
        raise ContractError("batch has no query triple with valid negatives")
    neg = negatives[keep]
    pos = model.score(ent, rel, q)
    negs = ad.reshape(model.score(ent, rel, neg.reshape(-1, 3)), (len(q), neg.shape[1]))
    return task_loss(pos, negs, loss_cfg, pt.query_task[keep], pt.n_tasks, adv_weights=adv_weights)


def train_step(model: MakerModel, adam: AdamState, pt: PreparedTask, rng, cfg: TrainConfig) -> float:
    negatives, keep = training_negatives(pt, cfg.loss.n_negatives, rng)
    with ad.Tape() as tape:
        loss = batch_loss(model, pt, negatives, keep, cfg.loss, rng)
    value = loss.item()
    if not math.isfinite(value):
        raise DivergenceError(f"non-finite training loss {value}")
    grads = tape.backward(loss, model.params)
    clip_global_norm(grads, cfg.grad_clip)
    adam_step(model.arrays(), grads, adam)
    return value


# ---------------------------------------------------------------- loop


def steps_per_epoch(n_items: int, batch_size: int) -> int:
    return math.ceil(n_items / batch_size)


def _batches(cfg: TrainConfig, train_kg: KnowledgeGraph, tasks, rng):
    """Yield ``(epoch, PreparedTask)`` batches forever (caller stops)."""
    if "Meta" in cfg.model.ablations:
        n_e, n_r = train_kg.n_entities, train_kg.n_relations
        all_seen = SeenMask(np.ones(n_e, bool), np.ones(n_r, bool))
        full = prepare(train_kg, all_seen, np.arange(n_e), np.arange(n_r), cfg.model.rpg_mode)
        triples = np.asarray(train_kg.support)
        epoch = 0
        while True:
            order = rng.permutation(len(triples))
            for lo in range(0, len(order), cfg.full_graph_batch):
                yield epoch, with_query(full, triples[np.sort(order[lo : lo + cfg.full_graph_batch])])
            epoch += 1
    else:
        prepared = [prepare_task(t, cfg.model.rpg_mode) for t in tasks]
        epoch = 0
        while True:
            order = rng.permutation(len(prepared))
            for lo in range(0, len(order), cfg.batch_size):
                yield epoch, collate([prepared[i] for i in order[lo : lo + cfg.batch_size]])
            epoch += 1


def meta_train(
    train_kg: KnowledgeGraph,
    valid_kg: KnowledgeGraph | None,
    cfg: TrainConfig | None = None,
    tasks: list[Task] | None = None,
) -> TrainResult:
    """Meta-train on tasks sampled from ``train_kg``; keep the best-validation checkpoint.

    With the ``Meta`` ablation the model instead trains on the whole
    training graph, which serves as both support and query, with nothing
    re-labelled unseen.
    """
    cfg = cfg or TrainConfig()
    meta_ablation = "Meta" in cfg.model.ablations
    if not meta_ablation and tasks is None:
        tasks = sample_tasks(train_kg, replace(cfg.tasks, rng_seed=cfg.rng_seed), cfg.n_tasks, threads=cfg.threads)
    rng = np.random.default_rng([cfg.rng_seed, 1])
    model = MakerModel(train_kg.n_entities, train_kg.n_relations, cfg.model, seed=cfg.rng_seed)
    adam = AdamState(lr=cfg.learning_rate, sparse=MakerModel.SPARSE)
    labels = (train_kg.entities.labels, train_kg.relations.labels)
    vocab = (train_kg.entities, train_kg.relations)

    def snapshot(step, mrr=None):
        return Checkpoint(
            params={k: v.copy() for k, v in model.arrays().items()},
            adam=AdamState.from_arrays(adam.hyper(), {k: v for k, v in adam.to_arrays().items()}),
            config=cfg,
            step=step,
            entity_labels=labels[0],
            relation_labels=labels[1],
            valid_mrr=mrr,
        )

    # the whole-graph variant gets the same optimizer-step budget as task training
    n_items = cfg.n_tasks if meta_ablation else len(tasks)
    total = steps_per_epoch(n_items, cfg.batch_size) * cfg.max_epochs
    if cfg.max_steps is not None:
        total = min(total, cfg.max_steps)

    log: list[dict] = []
    best, best_report, bad_checks = None, None, 0
    last_good = snapshot(0)

    def check(step):
        nonlocal best, best_report, bad_checks
        report = evaluate_model(model, vocab, valid_kg, cfg.valid_eval, label="valid", seed=cfg.rng_seed)
        report.step = step
        mrr = report.metric("all", "mrr")
        log.append({"step": step, "valid_mrr": round(mrr, 10)})
        if best is None or mrr > best.valid_mrr:
            best, best_report, bad_checks = snapshot(step, mrr), report, 0
        else:
            bad_checks += 1
        return bad_checks >= cfg.early_stop_patience

    step = 0
    if total > 0:
        for epoch, pt in _batches(cfg, train_kg, tasks, rng):
            try:
                loss = train_step(model, adam, pt, rng, cfg)
            except DivergenceError as exc:
                exc.checkpoint = best or last_good
                raise
            step += 1
            log.append({"step": step, "epoch": epoch, "loss": round(loss, 10)})
            if step % 50 == 0:
                logger.info("step %d epoch %d loss %.4f", step, epoch, loss)
            stop = False
            if valid_kg is not None and cfg.validation_every > 0 and step % cfg.validation_every == 0:
                stop = check(step)
            if stop or step >= total:
                break
            if step % 100 == 0:
                last_good = snapshot(step)
    if valid_kg is not None and (not log or log[-1].get("valid_mrr") is None):
        check(step)
    if best is None:
        best = snapshot(step)
    return TrainResult(best, log, best_report)
