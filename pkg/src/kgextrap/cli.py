"""Command-line pipeline: sample data, meta-train, run baselines and ablations, evaluate, report."""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import load_tensors
from .baseline import KgeModel, evaluate_asmp, train_kge
from .config import DATA_ENV, KEYS, RunConfig, describe_keys, read_config_file, resolve
from .errors import ConfigError, KgExtrapError
from .evaluator import CATEGORY_ORDER, EvalReport
from .kernels import BACKEND
from .kg import KnowledgeGraph, load_graph, save_graph, write_triples
from .sampler import load_tasks, sample_dataset, sample_tasks, save_tasks
from .synthetic import schema_kg
from .trainer import Checkpoint, evaluate_model, meta_train

logger = logging.getLogger("kgextrap")

COMMANDS = ("sample-dataset", "sample-tasks", "train", "baseline", "evaluate", "ablate", "report", "make-synthetic")
ABLATION_COLUMNS = (("MaKEr", ()), ("-Meta", ("Meta",)), ("-RelFeat", ("RelFeat",)), ("-EntFeat", ("EntFeat",)), ("-GNN", ("GNN",)))


class MissingInput(KgExtrapError):
    pass


# ---------------------------------------------------------------- helpers


def _digest(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _need(path: Path, what: str) -> Path:
    if not path.exists():
        raise MissingInput(f"missing {what}: expected {path}")
    return path


def data_paths(data_dir: Path) -> dict[str, Path]:
    return {
        "train": data_dir / "train.txt",
        "valid_support": data_dir / "valid" / "support.txt",
        "valid_query": data_dir / "valid" / "query.txt",
        "test_support": data_dir / "test" / "support.txt",
        "test_query": data_dir / "test" / "query.txt",
    }


def write_manifest(cfg: RunConfig, command: str, inputs: list[Path], outputs: list[Path]) -> Path:
    """Record everything needed to repeat the run; written before any artifact."""
    manifest = {
        "command": command,
        "config": cfg.as_text(),
        "seeds": {"seed": cfg["seed"], "eval_seed": cfg["eval_seed"]},
        "inputs": {str(p): _digest(p) for p in inputs if p.exists()},
        "outputs": [str(p) for p in outputs],
        "versions": {
            "kgextrap": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "kernels": BACKEND,
        },
    }
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    path = cfg.out_dir / f"manifest-{command}.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_split(cfg: RunConfig, parts=("train", "valid", "test")) -> dict[str, KnowledgeGraph]:
    p = data_paths(cfg.data_dir)
    out = {}
    train, _ = load_graph(_need(p["train"], "training triples"))
    out["train"] = train
    for name in parts:
        if name == "train":
            continue
        g, _ = load_graph(_need(p[f"{name}_support"], f"{name} support triples"), _need(p[f"{name}_query"], f"{name} query triples"))
        out[name] = g
    return out


def _write_report(report: EvalReport, path: Path) -> None:
    path.write_text(report.to_tsv(), encoding="utf-8")
    print(report.to_text())


# ---------------------------------------------------------------- commands


def cmd_make_synthetic(cfg: RunConfig) -> None:
    out = Path(cfg["source"] or cfg.out_dir / "synthetic.txt")
    write_manifest(cfg, "make-synthetic", [], [out])
    g = schema_kg(seed=cfg["seed"])
    write_triples(out, g, g.support)
    print(f"wrote {len(g.support)} triples to {out}")


def cmd_sample_dataset(cfg: RunConfig) -> None:
    if not cfg["source"]:
        raise ConfigError("sample-dataset needs --source <triple file>")
    src_path = _need(Path(cfg["source"]), "source triple file")
    p = data_paths(cfg.data_dir)
    write_manifest(cfg, "sample-dataset", [src_path], list(p.values()))
    source, _ = load_graph(src_path)
    split = sample_dataset(source, cfg.dataset_params())
    save_graph(split.train, p["train"])
    save_graph(split.valid, p["valid_support"], p["valid_query"])
    save_graph(split.test, p["test_support"], p["test_query"])
    for name in ("train", "valid", "test"):
        print(f"{name}: {getattr(split, name)}")


def cmd_sample_tasks(cfg: RunConfig) -> None:
    out = Path(cfg["tasks_file"] or cfg.out_dir / "tasks.tsv")
    train_path = _need(data_paths(cfg.data_dir)["train"], "training triples")
    write_manifest(cfg, "sample-tasks", [train_path], [out])
    train, _ = load_graph(train_path)
    tasks = sample_tasks(train, cfg.task_params(), cfg["n_tasks"], threads=cfg["threads"])
    save_tasks(out, tasks, cfg.task_params())
    print(f"wrote {len(tasks)} tasks to {out}")


def _train(cfg: RunConfig, graphs, ablations=None):
    tasks = None
    tcfg = cfg.train_config(ablations)
    if cfg["tasks_file"] and "Meta" not in tcfg.model.ablations:
        tasks = load_tasks(_need(Path(cfg["tasks_file"]), "task file"), graphs["train"])
    return meta_train(graphs["train"], graphs["valid"], tcfg, tasks=tasks)


def cmd_train(cfg: RunConfig) -> None:
    ckpt, log = cfg.out_dir / "model.ckpt", cfg.out_dir / "train_log.jsonl"
    p = data_paths(cfg.data_dir)
    inputs = [p["train"], p["valid_support"], p["valid_query"]] + ([Path(cfg["tasks_file"])] if cfg["tasks_file"] else [])
    write_manifest(cfg, "train", inputs, [ckpt, log])
    graphs = load_split(cfg, ("train", "valid"))
    result = _train(cfg, graphs)
    result.checkpoint.save(ckpt)
    result.write_log(log)
    print(f"saved checkpoint (step {result.checkpoint.step}, valid MRR {result.checkpoint.valid_mrr}) to {ckpt}")


def cmd_baseline(cfg: RunConfig) -> None:
    ckpt, report_path = cfg.out_dir / "kge.ckpt", cfg.out_dir / "asmp_report.tsv"
    write_manifest(cfg, "baseline", list(data_paths(cfg.data_dir).values()), [ckpt, report_path])
    graphs = load_split(cfg)
    result = train_kge(graphs["train"], cfg.kge_config(), graphs["valid"])
    result.model.save(ckpt)
    report = evaluate_asmp(result.model, graphs["test"], cfg.eval_config(), label=f"Asmp-{cfg['score_fn']}")
    _write_report(report, report_path)


def cmd_evaluate(cfg: RunConfig) -> None:
    ckpt = Path(cfg["checkpoint"] or cfg.out_dir / "model.ckpt")
    out = cfg.out_dir / f"report-{ckpt.stem}.tsv"
    p = data_paths(cfg.data_dir)
    write_manifest(cfg, "evaluate", [_need(ckpt, "checkpoint"), p["train"], p["test_support"], p["test_query"]], [out])
    graphs = load_split(cfg, ("train", "test"))
    test = graphs["test"]
    if load_tensors(ckpt)[1].get("kind") == "kge":
        report = evaluate_asmp(KgeModel.load(ckpt), test, cfg.eval_config(), label=ckpt.stem)
    else:
        c = Checkpoint.load(ckpt)
        report = evaluate_model(c.model(), c.vocab, test, cfg.eval_config(), label=ckpt.stem, seed=c.config.rng_seed)
        report.step = c.step
    _write_report(report, out)


def ablation_table(reports: dict[str, EvalReport]) -> str:
    cols = [name for name, _ in ABLATION_COLUMNS]
    lines = ["metric\t" + "\t".join(cols)]
    for row, key in (("MRR", "mrr"), ("Hits@1", "hits@1")):
        lines.append(row + "\t" + "\t".join(f"{reports[c].metric('all', key):.6f}" for c in cols))
    return "\n".join(lines) + "\n"


def cmd_ablate(cfg: RunConfig) -> None:
    out = cfg.out_dir / "ablation.tsv"
    write_manifest(cfg, "ablate", list(data_paths(cfg.data_dir).values()), [out])
    graphs = load_split(cfg)
    reports = {}
    for name, abl in ABLATION_COLUMNS:
        logger.info("training %s", name)
        result = _train(cfg, graphs, ablations=abl)
        c = result.checkpoint
        reports[name] = evaluate_model(c.model(), c.vocab, graphs["test"], cfg.eval_config(), label=name, seed=cfg["seed"])
    table = ablation_table(reports)
    out.write_text(table, encoding="utf-8")
    print(table, end="")


def comparison_table(reports: list[EvalReport]) -> str:
    """Category x metric rows, one column per report."""
    labels = [r.label or f"run{i}" for i, r in enumerate(reports)]
    lines = ["category\tmetric\t" + "\t".join(labels)]
    for cat in CATEGORY_ORDER:
        if not any(cat in r.categories for r in reports):
            continue
        for metric in ("mrr", "hits@1", "hits@10"):
            cells = [f"{r.metric(cat, metric):.6f}" if cat in r.categories else "-" for r in reports]
            lines.append(f"{cat}\t{metric}\t" + "\t".join(cells))
    return "\n".join(lines) + "\n"


def cmd_report(cfg: RunConfig) -> None:
    paths = [Path(s.strip()) for s in cfg["reports"].split(",") if s.strip()]
    if not paths:
        raise ConfigError("report needs --reports a.tsv,b.tsv,...")
    out = cfg.out_dir / "comparison.tsv"
    write_manifest(cfg, "report", [_need(p, "report") for p in paths], [out])
    table = comparison_table([EvalReport.from_tsv(p.read_text(encoding="utf-8")) for p in paths])
    out.write_text(table, encoding="utf-8")
    print(table, end="")


HANDLERS = {
    "make-synthetic": cmd_make_synthetic,
    "sample-dataset": cmd_sample_dataset,
    "sample-tasks": cmd_sample_tasks,
    "train": cmd_train,
    "baseline": cmd_baseline,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kgextrap",
        description="Meta-learned knowledge extrapolation pipeline.",
        epilog=f"Configuration keys (set in --config as 'key = value' lines or as flags; flags win; "
        f"${DATA_ENV} sets the default data directory):\n" + describe_keys(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("-v", "--verbose", action="store_true")
    for k in KEYS:
        parser.add_argument(f"--{k.name}", dest=k.name, default=None, metavar="VALUE", help=argparse.SUPPRESS)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    if extra:
        bad = ", ".join(a for a in extra if a.startswith("-")) or " ".join(extra)
        print(f"error: unknown option(s) {bad}; valid keys: {', '.join(k.name for k in KEYS)}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        file_values = read_config_file(args.config) if args.config else {}
        overrides = {k.name: getattr(args, k.name) for k in KEYS if getattr(args, k.name) is not None}
        cfg = resolve(file_values, overrides)
        HANDLERS[args.command](cfg)
    except (KgExtrapError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
