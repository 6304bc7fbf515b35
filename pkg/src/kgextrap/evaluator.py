"""Sampled-candidate link prediction evaluation (MRR, Hits@N per query category).

Each query triple yields two ranking trials (head and tail replaced).
The true triple is ranked among up to ``n_candidates`` corruptions drawn
without replacement from the graph's entities, excluding any that form a
support or query triple. Ties count half: ``rank = 1 + #greater + #equal/2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ContractError
from .kg import KnowledgeGraph, SeenMask, categorize_all

CATEGORY_ORDER = ("u_ent", "u_rel", "u_both", "all_seen", "all")
Scorer = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class EvalConfig:
    n_candidates: int = 50
    n_repeats: int = 5
    hits_at: tuple[int, ...] = (1, 10)
    rng_seed: int = 0
    # rank against every valid entity instead of a sample (not the default protocol)
    full_ranking: bool = False

    def __post_init__(self):
        if self.n_candidates < 1 or self.n_repeats < 1:
            raise ValueError("n_candidates and n_repeats must be >= 1")


@dataclass
class CategoryStats:
    count: int
    mrr: float
    mrr_std: float
    hits: dict[int, float]
    hits_std: dict[int, float]


@dataclass
class EvalReport:
    categories: dict[str, CategoryStats]
    n_candidates: int
    n_repeats: int
    hits_at: tuple[int, ...]
    label: str = ""
    step: int | None = None
    # per repeat: reciprocal-rank-bearing arrays (trial ranks, trial category); not serialised
    ranks: list[np.ndarray] = field(default_factory=list, repr=False)

    def metric(self, category: str = "all", name: str = "mrr") -> float:
        stats = self.categories[category]
        if name == "mrr":
            return stats.mrr
        if name.startswith("hits@"):
            return stats.hits[int(name[5:])]
        raise KeyError(name)

    def to_tsv(self) -> str:
        cols = ["category", "count", "mrr", "mrr_std"]
        for k in self.hits_at:
            cols += [f"hits@{k}", f"hits@{k}_std"]
        lines = [f"# label={self.label}\tstep={self.step}\tn_candidates={self.n_candidates}\tn_repeats={self.n_repeats}"]
        lines.append("\t".join(cols))
        for cat in CATEGORY_ORDER:
            if cat not in self.categories:
                continue
            s = self.categories[cat]
            row = [cat, str(s.count), f"{s.mrr:.6f}", f"{s.mrr_std:.6f}"]
            for k in self.hits_at:
                row += [f"{s.hits[k]:.6f}", f"{s.hits_std[k]:.6f}"]
            lines.append("\t".join(row))
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        head = ["category", "count", "MRR", "±"] + [x for k in self.hits_at for x in (f"Hits@{k}", "±")]
        rows = [head]
        for cat in CATEGORY_ORDER:
            if cat in self.categories:
                s = self.categories[cat]
                row = [cat, str(s.count), f"{100 * s.mrr:.2f}", f"{100 * s.mrr_std:.2f}"]
                for k in self.hits_at:
                    row += [f"{100 * s.hits[k]:.2f}", f"{100 * s.hits_std[k]:.2f}"]
                rows.append(row)
        widths = [max(len(r[i]) for r in rows) for i in range(len(head))]
        title = f"{self.label or 'evaluation'} (x100, {self.n_candidates} candidates, {self.n_repeats} repeats)"
        body = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in rows]
        return "\n".join([title] + body) + "\n"

    @classmethod
    def from_tsv(cls, text: str) -> "EvalReport":
        lines = [l for l in text.splitlines() if l.strip()]
        meta = dict(kv.split("=", 1) for kv in lines[0].lstrip("# ").split("\t"))
        cols = lines[1].split("\t")
        hits_at = tuple(int(c[5:]) for c in cols if c.startswith("hits@") and not c.endswith("_std"))
        cats = {}
        for line in lines[2:]:
            v = dict(zip(cols, line.split("\t")))
            cats[v["category"]] = CategoryStats(
                count=int(v["count"]),
                mrr=float(v["mrr"]),
                mrr_std=float(v["mrr_std"]),
                hits={k: float(v[f"hits@{k}"]) for k in hits_at},
                hits_std={k: float(v[f"hits@{k}_std"]) for k in hits_at},
            )
        step = None if meta.get("step") in (None, "None") else int(meta["step"])
        return cls(cats, int(meta["n_candidates"]), int(meta["n_repeats"]), hits_at, meta.get("label", ""), step)


def trial_rank(true_score: float, candidate_scores) -> float:
    c = np.asarray(candidate_scores, dtype=np.float64)
    return 1.0 + float(np.sum(c > true_score)) + float(np.sum(c == true_score)) / 2.0


def aggregate_ranks(ranks, hits_at=(1, 10)) -> tuple[float, dict[int, float]]:
    """MRR and Hits@k of a rank array (exactly rounded summation)."""
    r = np.asarray(ranks, dtype=np.float64)
    if r.size == 0:
        raise ContractError("cannot aggregate an empty rank list")
    mrr = math.fsum((1.0 / r).tolist()) / r.size
    return mrr, {k: int(np.count_nonzero(r <= k)) / r.size for k in hits_at}


def metrics_oracle(ranks) -> tuple[float, float, float]:
    """Naive reference: (MRR, Hits@1, Hits@10)."""
    ranks = list(ranks)
    if not ranks:
        raise ContractError("cannot compute metrics of an empty rank list")
    n = len(ranks)
    mrr = math.fsum(1.0 / float(x) for x in ranks) / n
    h1 = sum(1 for x in ranks if x <= 1) / n
    h10 = sum(1 for x in ranks if x <= 10) / n
    return mrr, h1, h10


class _TrueIndex:
    """Known true heads per (relation, tail) and tails per (head, relation)."""

    def __init__(self, triples: np.ndarray):
        self.tails: dict[tuple[int, int], set[int]] = {}
        self.heads: dict[tuple[int, int], set[int]] = {}
        for h, r, t in triples.tolist():
            self.tails.setdefault((h, r), set()).add(t)
            self.heads.setdefault((r, t), set()).add(h)


def _draw_candidates(entities, excluded: set, n: int, rng, full: bool) -> np.ndarray:
    if full:
        return np.array([e for e in entities.tolist() if e not in excluded], dtype=np.int64)
    m = min(len(entities), n + len(excluded))
    pick = rng.choice(entities, size=m, replace=False)
    keep = [e for e in pick.tolist() if e not in excluded]
    return np.asarray(keep[:n], dtype=np.int64)


def evaluate(scorer: Scorer, test_kg: KnowledgeGraph, mask: SeenMask, cfg: EvalConfig | None = None, label: str = "") -> EvalReport:
    """Rank every query triple of ``test_kg`` with ``scorer``.

    ``scorer`` maps an ``(n, 3)`` array of test-graph triples to ``n``
    scores (higher = more plausible). Categories without queries are
    omitted from the report.
    """
    cfg = cfg or EvalConfig()
    query = np.asarray(test_kg.query)
    if len(query) == 0:
        raise ContractError("test graph has no query triples")
    entities = test_kg.active_entities()
    index = _TrueIndex(test_kg.all_triples)
    true_keys = test_kg.keys(test_kg.all_triples)
    cats = categorize_all(query, mask)
    trial_cat = np.repeat(np.array([c.value for c in cats], dtype=object), 2)

    per_repeat = []
    for rep in range(cfg.n_repeats):
        rows, trial_of = [], []
        for qi, (h, r, t) in enumerate(query.tolist()):
            rng = np.random.default_rng([cfg.rng_seed, qi, rep])
            for mode in (0, 1):
                trial = 2 * qi + mode
                if mode == 0:
                    cand = _draw_candidates(entities, index.heads[(r, t)], cfg.n_candidates, rng, cfg.full_ranking)
                    block = np.empty((len(cand) + 1, 3), dtype=np.int64)
                    block[:] = (h, r, t)
                    block[1:, 0] = cand
                else:
                    cand = _draw_candidates(entities, index.tails[(h, r)], cfg.n_candidates, rng, cfg.full_ranking)
                    block = np.empty((len(cand) + 1, 3), dtype=np.int64)
                    block[:] = (h, r, t)
                    block[1:, 2] = cand
                rows.append(block)
                trial_of.append(np.full(len(block), trial, dtype=np.int64))
        triples = np.concatenate(rows)
        trial_id = np.concatenate(trial_of)
        is_true = np.zeros(len(triples), dtype=bool)
        starts = np.concatenate([[0], np.cumsum([len(b) for b in rows])[:-1]])
        is_true[starts] = True
        if np.isin(test_kg.keys(triples[~is_true]), true_keys).any():
            raise AssertionError("a candidate reproduced a true triple")
        scores = np.asarray(scorer(triples), dtype=np.float64).reshape(-1)
        if scores.shape[0] != len(triples):
            raise ContractError(f"scorer returned {scores.shape[0]} scores for {len(triples)} triples")
        true_score = scores[starts][trial_id]
        cand = ~is_true
        n_trials = 2 * len(query)
        greater = np.bincount(trial_id[cand], weights=(scores[cand] > true_score[cand]), minlength=n_trials)
        equal = np.bincount(trial_id[cand], weights=(scores[cand] == true_score[cand]), minlength=n_trials)
        per_repeat.append(1.0 + greater + equal / 2.0)

    categories = {}
    for cat in CATEGORY_ORDER:
        sel = np.ones(len(trial_cat), dtype=bool) if cat == "all" else (trial_cat == cat)
        if not sel.any():
            continue
        mrrs, hits = [], {k: [] for k in cfg.hits_at}
        for ranks in per_repeat:
            m, hk = aggregate_ranks(ranks[sel], cfg.hits_at)
            mrrs.append(m)
            for k in cfg.hits_at:
                hits[k].append(hk[k])
        categories[cat] = CategoryStats(
            count=int(sel.sum() // 2),
            mrr=float(np.mean(mrrs)),
            mrr_std=float(np.std(mrrs)),
            hits={k: float(np.mean(v)) for k, v in hits.items()},
            hits_std={k: float(np.std(v)) for k, v in hits.items()},
        )
    return EvalReport(categories, cfg.n_candidates, cfg.n_repeats, tuple(cfg.hits_at), label=label, ranks=per_repeat)


def random_ranking_mrr(n_candidates: int = 50) -> float:
    """Expected MRR of a uniformly random scorer: H_{n+1} / (n+1)."""
    n = n_candidates + 1
    return math.fsum(1.0 / k for k in range(1, n + 1)) / n
