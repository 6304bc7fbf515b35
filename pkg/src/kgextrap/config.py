"""Flat ``key = value`` run configuration shared by every CLI command."""
from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

from .baseline import KgeConfig
from .decoder import LossConfig
from .errors import ConfigError
from .evaluator import EvalConfig
from .model import ABLATIONS, ModelConfig
from .sampler import DatasetSampleParams, TaskSampleParams
from .trainer import TrainConfig

DATA_ENV = "KGEXTRAP_DATA"


def _bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _ablations(text: str) -> frozenset:
    names = frozenset(a.strip().lstrip("-") for a in text.split(",") if a.strip())
    unknown = names - set(ABLATIONS)
    if unknown:
        raise ValueError(f"unknown ablation(s) {sorted(unknown)}; valid: {', '.join(ABLATIONS)}")
    return names


@dataclass(frozen=True)
class Key:
    name: str
    default: object
    parse: object
    help: str
    source: str = ""  # where the default comes from


KEYS = [
    Key("seed", 0, int, "master random seed for sampling, initialisation and training"),
    Key("data_dir", None, str, f"dataset directory (default: ${DATA_ENV} or ./data)"),
    Key("out_dir", "runs", str, "directory for checkpoints, logs, reports and manifests"),
    Key("threads", 1, int, "worker cap for task sampling"),
    Key("source", "", str, "source triple file for sample-dataset"),
    Key("n_seed_entities_test", 100, int, "walk seeds for the test and valid graphs", "published protocol"),
    Key("n_seed_entities_train", 100, int, "walk seeds for the training graph", "published protocol"),
    Key("walk_len_test", 10, int, "random-walk length for test/valid extraction", "published protocol"),
    Key("walk_len_train", 10, int, "random-walk length for train extraction", "published protocol"),
    Key("removal_ratio", 0.1, float, "share of remaining entities/relations deleted after each extraction", "published protocol"),
    Key("dataset_query_fraction", 0.5, float, "share of eligible test/valid triples used as queries", "assumption"),
    Key("n_tasks", 10000, int, "size of the meta-training task pool", "published protocol"),
    Key("n_walks", 5, int, "walk expansions per task", "assumption"),
    Key("walk_len", 10, int, "walk length per task expansion", "assumption"),
    Key("task_query_fraction", 0.2, float, "share of task triples used as queries", "assumption"),
    Key("relabel_min", 0.3, float, "lower bound of the per-task unseen re-labelling ratio", "published protocol"),
    Key("relabel_max", 0.8, float, "upper bound of the per-task unseen re-labelling ratio", "published protocol"),
    Key("score_fn", "transe", str, "transe | distmult | complex | rotate"),
    Key("dim", 32, int, "embedding dimension", "published protocol"),
    Key("hidden_dim", 32, int, "GNN hidden width", "published protocol"),
    Key("n_layers", 2, int, "GNN layers", "published protocol"),
    Key("rpg_mode", "edge", str, "unseen relation features count in-edges per 'edge' or per 'kind'", "assumption"),
    Key("margin", 10.0, float, "loss margin gamma", "assumption"),
    Key("n_negatives", 32, int, "negatives per query triple during training", "assumption"),
    Key("adversarial_temperature", 1.0, float, "self-adversarial softmax temperature", "assumption"),
    Key("batch_size", 64, int, "tasks per optimizer step", "published protocol"),
    Key("learning_rate", 0.001, float, "Adam learning rate", "published protocol"),
    Key("max_epochs", 10, int, "passes over the task pool", "assumption"),
    Key("max_steps", 0, int, "optimizer step cap (0 = none)"),
    Key("validation_every", 500, int, "steps between validation runs", "assumption"),
    Key("early_stop_patience", 3, int, "validations without improvement before stopping", "assumption"),
    Key("grad_clip", 1.0, float, "global gradient norm cap", "assumption"),
    Key("full_graph_batch", 512, int, "triples per step for the whole-graph (-Meta) variant", "assumption"),
    Key("ablations", frozenset(), _ablations, f"comma list from {', '.join(ABLATIONS)}"),
    Key("kge_max_epochs", 200, int, "baseline KGE training epochs", "assumption"),
    Key("kge_learning_rate", 0.01, float, "baseline KGE Adam learning rate (chosen on validation)", "assumption"),
    Key("kge_batch_size", 64, int, "baseline KGE triples per step", "assumption"),
    Key("kge_validation_every", 10, int, "baseline KGE epochs between validations", "assumption"),
    Key("n_candidates", 50, int, "negative candidates per ranking trial", "published protocol"),
    Key("n_repeats", 5, int, "evaluation repeats with fresh candidates", "published protocol"),
    Key("eval_seed", 0, int, "seed for candidate draws"),
    Key("full_ranking", False, _bool, "rank against every entity instead of sampled candidates"),
    Key("checkpoint", "", str, "checkpoint to evaluate (default: <out_dir>/model.ckpt)"),
    Key("tasks_file", "", str, "task pool file for train (sampled on the fly if empty)"),
    Key("reports", "", str, "comma list of report TSVs for the report command"),
]
KEY_INDEX = {k.name: k for k in KEYS}


class RunConfig(dict):
    """Materialised key -> value mapping with typed views."""

    @property
    def data_dir(self) -> Path:
        return Path(self["data_dir"] or os.environ.get(DATA_ENV) or "data")

    @property
    def out_dir(self) -> Path:
        return Path(self["out_dir"])

    def as_text(self) -> dict:
        out = {}
        for k in KEYS:
            v = self[k.name]
            out[k.name] = ",".join(sorted(v)) if isinstance(v, frozenset) else v
        out["data_dir"] = str(self.data_dir)
        return out

    def dataset_params(self) -> DatasetSampleParams:
        return DatasetSampleParams(
            self["n_seed_entities_test"], self["n_seed_entities_train"], self["walk_len_test"],
            self["walk_len_train"], self["removal_ratio"], self["seed"], self["dataset_query_fraction"],
        )

    def task_params(self) -> TaskSampleParams:
        return TaskSampleParams(
            self["n_walks"], self["walk_len"], self["task_query_fraction"],
            (self["relabel_min"], self["relabel_max"]), self["seed"],
        )

    def loss(self) -> LossConfig:
        return LossConfig(self["margin"], self["n_negatives"], self["adversarial_temperature"])

    def eval_config(self, n_repeats: int | None = None) -> EvalConfig:
        return EvalConfig(self["n_candidates"], n_repeats or self["n_repeats"], (1, 10), self["eval_seed"], self["full_ranking"])

    def model_config(self, ablations=None) -> ModelConfig:
        return ModelConfig(
            self["score_fn"], self["dim"], self["hidden_dim"], self["n_layers"], self["rpg_mode"],
            self["ablations"] if ablations is None else frozenset(ablations),
        )

    def train_config(self, ablations=None) -> TrainConfig:
        return TrainConfig(
            n_tasks=self["n_tasks"],
            batch_size=self["batch_size"],
            learning_rate=self["learning_rate"],
            max_epochs=self["max_epochs"],
            max_steps=self["max_steps"] or None,
            validation_every=self["validation_every"],
            early_stop_patience=self["early_stop_patience"],
            rng_seed=self["seed"],
            grad_clip=self["grad_clip"],
            full_graph_batch=self["full_graph_batch"],
            threads=self["threads"],
            valid_eval=self.eval_config(n_repeats=1),
            model=self.model_config(ablations),
            loss=self.loss(),
            tasks=self.task_params(),
        )

    def kge_config(self) -> KgeConfig:
        return KgeConfig(
            score_fn=self["score_fn"],
            dim=self["dim"],
            learning_rate=self["kge_learning_rate"],
            batch_size=self["kge_batch_size"],
            max_epochs=self["kge_max_epochs"],
            max_steps=self["max_steps"] or None,
            validation_every=self["kge_validation_every"],
            early_stop_patience=self["early_stop_patience"],
            grad_clip=self["grad_clip"],
            rng_seed=self["seed"],
            loss=self.loss(),
            valid_eval=self.eval_config(n_repeats=1),
        )


def _unknown(name: str) -> ConfigError:
    return ConfigError(f"unknown config key {name!r}; valid keys: {', '.join(k.name for k in KEYS)}")


def parse_value(name: str, text: str):
    if name not in KEY_INDEX:
        raise _unknown(name)
    try:
        return KEY_INDEX[name].parse(text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {exc}") from None


def read_config_file(path) -> dict[str, str]:
    """Raw ``key = value`` pairs; ``#`` starts a comment."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    raw = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEY_INDEX:
            raise _unknown(key)
        raw[key] = value
    return raw


def resolve(file_values: dict[str, str] | None = None, overrides: dict[str, str] | None = None) -> RunConfig:
    """Defaults, then the config file, then flag overrides."""
    cfg = RunConfig({k.name: k.default for k in KEYS})
    for layer in (file_values or {}, overrides or {}):
        for name, text in layer.items():
            cfg[name] = parse_value(name, text)
    return cfg


def describe_keys() -> str:
    lines = []
    for k in KEYS:
        default = ",".join(sorted(k.default)) if isinstance(k.default, frozenset) else k.default
        origin = f" [{k.source}]" if k.source else ""
        lines.append(f"  --{k.name} (default: {default}){origin}\n      {k.help}")
    return "\n".join(lines)
