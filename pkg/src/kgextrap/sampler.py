"""Random-walk dataset construction and meta-learning task sampling.

Random walks treat the graph as undirected. Every sampler is a pure
function of its inputs and seed; task ``i`` of a pool uses the stream
``default_rng([seed, i])`` so pools are order-deterministic.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .errors import ContractError, SamplingError
from .kg import KnowledgeGraph, SeenMask, Triple, Vocab, graph_from_labels

logger = logging.getLogger(__name__)

MAX_ATTEMPTS = 100


@dataclass(frozen=True)
class DatasetSampleParams:
    n_seed_entities_test: int = 100
    n_seed_entities_train: int = 100
    walk_len_test: int = 10
    walk_len_train: int = 10
    removal_ratio: float = 0.1
    rng_seed: int = 0
    # share of eligible (>=1 unseen component) test/valid triples put in query
    query_fraction: float = 0.5

    def __post_init__(self):
        if min(self.n_seed_entities_test, self.n_seed_entities_train) < 1:
            raise ValueError("seed entity counts must be >= 1")
        if min(self.walk_len_test, self.walk_len_train) < 1:
            raise ValueError("walk lengths must be >= 1")
        if not 0 <= self.removal_ratio < 1:
            raise ValueError("removal_ratio must lie in [0, 1)")
        if not 0 < self.query_fraction <= 1:
            raise ValueError("query_fraction must lie in (0, 1]")


@dataclass(frozen=True)
class TaskSampleParams:
    n_walks: int = 5
    walk_len: int = 10
    query_fraction: float = 0.2
    relabel_ratio_range: tuple[float, float] = (0.3, 0.8)
    rng_seed: int = 0

    def __post_init__(self):
        lo, hi = self.relabel_ratio_range
        if not 0 < self.query_fraction < 1:
            raise ValueError("query_fraction must lie in (0, 1)")
        if not (0 < lo <= hi < 1):
            raise ValueError("relabel_ratio_range must satisfy 0 < lo <= hi < 1")
        if self.n_walks < 0 or self.walk_len < 1:
            raise ValueError("n_walks must be >= 0 and walk_len >= 1")


@dataclass(frozen=True)
class DatasetSplit:
    train: KnowledgeGraph
    valid: KnowledgeGraph
    test: KnowledgeGraph


@dataclass(frozen=True, eq=False)
class Task:
    """One meta-learning episode over a local vocabulary.

    ``entity_ids``/``relation_ids`` map local components to training-graph
    indices; unseen (re-labelled) components hold -1.
    """

    graph: KnowledgeGraph
    mask: SeenMask
    entity_ids: np.ndarray
    relation_ids: np.ndarray
    relabel_ratio: float = float("nan")

    def global_ids(self) -> dict[str, dict[int, int]]:
        return {
            "entities": {i: int(g) for i, g in enumerate(self.entity_ids) if g >= 0},
            "relations": {i: int(g) for i, g in enumerate(self.relation_ids) if g >= 0},
        }


# ---------------------------------------------------------------- walks


def undirected_csr(triples: np.ndarray, n_entities: int) -> tuple[np.ndarray, np.ndarray]:
    t = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    src = np.concatenate([t[:, 0], t[:, 2]])
    dst = np.concatenate([t[:, 2], t[:, 0]])
    order = np.argsort(src, kind="stable")
    indptr = np.zeros(n_entities + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n_entities), out=indptr[1:])
    return indptr, np.ascontiguousarray(dst[order])


def random_walk(csr, start: int, length: int, rng: np.random.Generator) -> np.ndarray:
    """Visited nodes of a uniform undirected walk; stops early at isolated nodes."""
    indptr, indices = csr
    return kernels.random_walk(indptr, indices, int(start), rng.random(length))


def _walk_expand(triples, n_entities, n_seeds, walk_len, rng, candidates=None) -> np.ndarray:
    """Entity set reached by walks from ``n_seeds`` distinct non-isolated seeds."""
    csr = undirected_csr(triples, n_entities)
    degree = np.diff(csr[0])
    pool = np.arange(n_entities) if candidates is None else np.asarray(candidates)
    if np.count_nonzero(degree[pool]) < n_seeds:
        raise SamplingError(f"need {n_seeds} non-isolated seed entities, graph has {np.count_nonzero(degree[pool])}")
    chosen: set[int] = set()
    reached = np.zeros(n_entities, dtype=bool)
    failures = 0
    while len(chosen) < n_seeds:
        s = int(pool[rng.integers(len(pool))])
        if s in chosen:
            continue
        if degree[s] == 0:
            failures += 1
            if failures >= MAX_ATTEMPTS:
                raise SamplingError("could not find a non-isolated seed entity after 100 attempts")
            continue
        failures = 0
        chosen.add(s)
        reached[random_walk(csr, s, walk_len, rng)] = True
    return reached


def _induced(triples: np.ndarray, members: np.ndarray) -> np.ndarray:
    return members[triples[:, 0]] & members[triples[:, 2]]


# ---------------------------------------------------------------- datasets


def _remove_fraction(triples, ratio, rng):
    if ratio <= 0 or len(triples) == 0:
        return triples
    ents = np.unique(np.concatenate([triples[:, 0], triples[:, 2]]))
    rels = np.unique(triples[:, 1])
    drop_e = rng.choice(ents, size=int(round(ratio * len(ents))), replace=False)
    drop_r = rng.choice(rels, size=int(round(ratio * len(rels))), replace=False)
    keep = ~(np.isin(triples[:, 0], drop_e) | np.isin(triples[:, 2], drop_e) | np.isin(triples[:, 1], drop_r))
    return triples[keep]


def _split_support_query(triples, train_ents, train_rels, query_fraction, rng):
    """Pick query triples among those with an unseen component.

    Query triples whose components would be missing from support are
    moved back to support, so every query component is embeddable.
    """
    unseen = ~(np.isin(triples[:, 0], train_ents) & np.isin(triples[:, 2], train_ents) & np.isin(triples[:, 1], train_rels))
    eligible = np.flatnonzero(unseen)
    n_q = int(round(query_fraction * len(eligible)))
    picked = rng.permutation(eligible)[:n_q]
    is_query = np.zeros(len(triples), dtype=bool)
    is_query[picked] = True
    sup = triples[~is_query]
    ent_ok = set(sup[:, 0].tolist()) | set(sup[:, 2].tolist())
    rel_ok = set(sup[:, 1].tolist())
    for i in picked.tolist():
        h, r, t = triples[i].tolist()
        if h in ent_ok and t in ent_ok and r in rel_ok:
            continue
        is_query[i] = False
        ent_ok.update((h, t))
        rel_ok.add(r)
    return triples[~is_query], triples[is_query]


def _labeled_graph(source: KnowledgeGraph, support, query=()) -> KnowledgeGraph:
    return graph_from_labels(source.labeled(np.asarray(support).reshape(-1, 3)), source.labeled(np.asarray(query).reshape(-1, 3)))


def sample_dataset(source: KnowledgeGraph, params: DatasetSampleParams) -> DatasetSplit:
    """Carve train/valid/test graphs out of ``source`` with random walks.

    Test and valid graphs are induced by walks from ``n_seed_entities_test``
    seeds; after each extraction a ``removal_ratio`` share of the remaining
    entities and relations is deleted. The train graph is induced from
    ``n_seed_entities_train`` walks on what is left. Test/valid query
    triples all contain at least one component absent from train.
    """
    if source.n_entities < params.n_seed_entities_test + params.n_seed_entities_train:
        raise ContractError("source graph has fewer entities than requested seeds")
    rng = np.random.default_rng(params.rng_seed)
    n_e = source.n_entities
    remaining = source.all_triples

    held_out = []
    for _ in range(2):  # test, then valid
        members = _walk_expand(remaining, n_e, params.n_seed_entities_test, params.walk_len_test, rng)
        inside = _induced(remaining, members)
        held_out.append(remaining[inside])
        remaining = _remove_fraction(remaining[~inside], params.removal_ratio, rng)
    if len(remaining) == 0:
        raise SamplingError("nothing left to sample the training graph from")
    members = _walk_expand(remaining, n_e, params.n_seed_entities_train, params.walk_len_train, rng)
    train_triples = remaining[_induced(remaining, members)]
    if len(train_triples) == 0:
        raise SamplingError("training graph is empty")
    train_ents = np.unique(np.concatenate([train_triples[:, 0], train_triples[:, 2]]))
    train_rels = np.unique(train_triples[:, 1])

    graphs = []
    for name, trip in zip(("test", "valid"), held_out):
        sup, que = _split_support_query(trip, train_ents, train_rels, params.query_fraction, rng)
        if len(que) == 0:
            raise SamplingError(f"{name} graph has no query triple with an unseen component")
        graphs.append(_labeled_graph(source, sup, que))
    train = _labeled_graph(source, train_triples)
    return DatasetSplit(train=train, valid=graphs[1], test=graphs[0])


# ---------------------------------------------------------------- tasks


def relabel_counts(ratio: float, n_entities: int, n_relations: int) -> tuple[int, int]:
    """How many entities/relations a task re-labels as unseen.

    ``ceil(ratio * n)``, capped so at least one component of each kind
    stays seen.
    """

    def count(n):
        return max(0, min(math.ceil(ratio * n - 1e-9), n - 1))

    return count(n_entities), count(n_relations)


class TaskSampler:
    """Samples tasks from a fixed training graph (caches its walk structure)."""

    def __init__(self, train: KnowledgeGraph, params: TaskSampleParams):
        if len(train.support) < 2:
            raise ContractError("task sampling needs a training graph with >= 2 triples")
        self.train = train
        self.params = params
        self.triples = train.support
        self.csr = undirected_csr(self.triples, train.n_entities)
        self.active = np.flatnonzero(np.diff(self.csr[0]) > 0)

    def sample(self, index: int = 0) -> Task:
        p = self.params
        rng = np.random.default_rng([p.rng_seed, index])
        n_e = self.train.n_entities
        for _ in range(MAX_ATTEMPTS):
            members = np.zeros(n_e, dtype=bool)
            seed = int(self.active[rng.integers(len(self.active))])
            members[random_walk(self.csr, seed, p.walk_len, rng)] = True
            for _ in range(p.n_walks):
                current = np.flatnonzero(members)
                start = int(current[rng.integers(len(current))])
                members[random_walk(self.csr, start, p.walk_len, rng)] = True
            trip = self.triples[_induced(self.triples, members)]
            if len(trip) < 2:
                continue
            task = self._build(trip, rng)
            if task is not None:
                return task
        raise SamplingError("could not sample a task with >= 2 triples and a usable query after 100 attempts")

    def _build(self, trip: np.ndarray, rng) -> Task | None:
        p = self.params
        n = len(trip)
        perm = rng.permutation(n)
        n_q = min(max(1, int(round(p.query_fraction * n))), n - 1)
        is_query = np.zeros(n, dtype=bool)
        is_query[perm[:n_q]] = True

        ent_global = np.unique(np.concatenate([trip[:, 0], trip[:, 2]]))
        rel_global = np.unique(trip[:, 1])
        local = np.stack(
            [np.searchsorted(ent_global, trip[:, 0]), np.searchsorted(rel_global, trip[:, 1]), np.searchsorted(ent_global, trip[:, 2])],
            axis=1,
        )
        ratio = float(rng.uniform(*p.relabel_ratio_range))
        k_e, k_r = relabel_counts(ratio, len(ent_global), len(rel_global))
        ent_seen = np.ones(len(ent_global), dtype=bool)
        rel_seen = np.ones(len(rel_global), dtype=bool)
        ent_seen[rng.choice(len(ent_global), size=k_e, replace=False)] = False
        rel_seen[rng.choice(len(rel_global), size=k_r, replace=False)] = False

        # move query triples with components absent from support back to support
        sup = local[~is_query]
        ent_ok = np.zeros(len(ent_global), dtype=bool)
        rel_ok = np.zeros(len(rel_global), dtype=bool)
        ent_ok[sup[:, 0]] = ent_ok[sup[:, 2]] = True
        rel_ok[sup[:, 1]] = True
        for i in np.flatnonzero(is_query):
            h, r, t = local[i]
            if not (ent_ok[h] and ent_ok[t] and rel_ok[r]):
                is_query[i] = False
                ent_ok[h] = ent_ok[t] = True
                rel_ok[r] = True
        if not is_query.any():
            return None

        train = self.train
        graph = KnowledgeGraph(
            Vocab(train.entities[i] for i in ent_global.tolist()),
            Vocab(train.relations[i] for i in rel_global.tolist()),
            local[~is_query],
            local[is_query],
        )
        return Task(
            graph=graph,
            mask=SeenMask(ent_seen, rel_seen),
            entity_ids=np.where(ent_seen, ent_global, -1),
            relation_ids=np.where(rel_seen, rel_global, -1),
            relabel_ratio=ratio,
        )


def sample_task(train: KnowledgeGraph, params: TaskSampleParams, index: int = 0) -> Task:
    return TaskSampler(train, params).sample(index)


def _sample_range(args):
    train, params, lo, hi = args
    sampler = TaskSampler(train, params)
    return [sampler.sample(i) for i in range(lo, hi)]


def sample_tasks(train: KnowledgeGraph, params: TaskSampleParams, n_tasks: int, threads: int = 1) -> list[Task]:
    """A pool of ``n_tasks`` tasks; identical output for any ``threads``."""
    if threads <= 1 or n_tasks < 2 * threads:
        sampler = TaskSampler(train, params)
        return [sampler.sample(i) for i in range(n_tasks)]
    bounds = np.linspace(0, n_tasks, threads + 1).astype(int)
    chunks = [(train, params, int(bounds[k]), int(bounds[k + 1])) for k in range(threads)]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return [t for part in pool.map(_sample_range, chunks) for t in part]


# ---------------------------------------------------------------- negatives


def sample_negatives(triple, graph: KnowledgeGraph, n: int, mode: str, rng: np.random.Generator):
    """Filtered corruptions of ``triple`` in the head or tail slot.

    Replacements are drawn uniformly without replacement from the graph's
    entities, skipping any that rebuild a support or query triple. Returns
    ``(negatives, shortfall)``; ``shortfall`` is True when fewer than ``n``
    valid corruptions exist (all of them are then returned).
    """
    if mode not in ("head", "tail"):
        raise ValueError("mode must be 'head' or 'tail'")
    if n == 0:
        return [], False
    ents = graph.active_entities()
    if len(ents) < n + 1:
        raise ContractError(f"graph has {len(ents)} entities; need at least {n + 1}")
    h, r, t = (int(x) for x in triple)
    cand = np.tile(np.array([h, r, t], dtype=np.int64), (len(ents), 1))
    cand[:, 0 if mode == "head" else 2] = ents
    valid = ~np.isin(graph.keys(cand), graph.keys(graph.all_triples))
    options = ents[valid]
    shortfall = len(options) < n
    if shortfall:
        picked = options
    else:
        picked = rng.choice(options, size=n, replace=False)
    out = [Triple(int(e), r, t) if mode == "head" else Triple(h, r, int(e)) for e in picked.tolist()]
    return out, bool(shortfall)


# ---------------------------------------------------------------- persistence


def save_tasks(path, tasks: list[Task], params: TaskSampleParams | None = None) -> None:
    """Line-based task archive; labels are training-graph labels."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        if params is not None:
            fh.write("#params\t" + "\t".join(f"{k}={v}" for k, v in sorted(asdict(params).items())) + "\n")
        for i, task in enumerate(tasks):
            g = task.graph
            fh.write(f"task\t{i}\t{task.relabel_ratio!r}\n")
            for j, lab in enumerate(g.entities):
                fh.write(f"ent\t{lab}\t{int(task.mask.entities[j])}\n")
            for j, lab in enumerate(g.relations):
                fh.write(f"rel\t{lab}\t{int(task.mask.relations[j])}\n")
            for kind, arr in (("sup", g.support), ("que", g.query)):
                for h, r, t in g.labeled(arr):
                    fh.write(f"{kind}\t{h}\t{r}\t{t}\n")


def load_tasks(path, train: KnowledgeGraph) -> list[Task]:
    tasks = []
    cur = None

    def flush():
        if cur is None:
            return
        ents, rels = Vocab(cur["ent"]), Vocab(cur["rel"])
        sup = [(ents.index(h), rels.index(r), ents.index(t)) for h, r, t in cur["sup"]]
        que = [(ents.index(h), rels.index(r), ents.index(t)) for h, r, t in cur["que"]]
        e_seen = np.array(cur["ent_seen"], dtype=bool)
        r_seen = np.array(cur["rel_seen"], dtype=bool)
        e_ids = np.where(e_seen, train.entities.lookup(ents.labels), -1)
        r_ids = np.where(r_seen, train.relations.lookup(rels.labels), -1)
        if (e_seen & (e_ids < 0)).any() or (r_seen & (r_ids < 0)).any():
            raise ContractError("task archive references labels missing from the training graph")
        tasks.append(Task(KnowledgeGraph(ents, rels, sup, que), SeenMask(e_seen, r_seen), e_ids, r_ids, cur["ratio"]))

    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            kind = parts[0]
            if kind.startswith("#") or not kind:
                continue
            if kind == "task":
                flush()
                cur = {"ratio": float(parts[2]), "ent": [], "rel": [], "ent_seen": [], "rel_seen": [], "sup": [], "que": []}
            elif kind in ("ent", "rel"):
                cur[kind].append(parts[1])
                cur[kind + "_seen"].append(parts[2] == "1")
            elif kind in ("sup", "que"):
                cur[kind].append(tuple(parts[1:4]))
            else:
                raise ValueError(f"unknown record type {kind!r} in task archive")
    flush()
    return tasks
