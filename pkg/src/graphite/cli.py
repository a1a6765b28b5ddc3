"""``graphite`` command line.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numeric failure.
Artifacts go under ``$GRAPHITE_OUTPUT_ROOT`` (default ``./runs``) unless ``--out`` is given.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import meanfield
from . import model as M
from . import tensor as T
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .datasets import DataError, DatasetBundle, export_embeddings, ingest_citation_dataset
from .graph import (FAMILIES, GeneratorError, Graph, SplitError, generate, is_connected, largest_connected_component,
                    split_edges, write_edgelist)
from .tasks.classification import LabelError, node_classification_run
from .tasks.common import sparse_normalized
from .tasks.config import ConfigError, Metrics, RunConfig, dump_config, parse_config_text, write_metrics
from .tasks.density import density_estimation_run
from .tasks.link_prediction import link_prediction_run, train_link_model

OUTPUT_ROOT_ENV = "GRAPHITE_OUTPUT_ROOT"
EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

logger = logging.getLogger("graphite")


# ------------------------------------------------------------ config


def resolve_config(args, task: str | None = None) -> RunConfig:
    """Config file, then ``--set key=value`` overrides, then dedicated flags."""
    text = Path(args.config).read_text() if getattr(args, "config", None) else ""
    lines = [text]
    for kv in getattr(args, "set", None) or []:
        if "=" not in kv:
            raise ConfigError(f"--set expects key=value, got {kv!r}")
        lines.append(kv)
    for key in ("model", "seed", "runs", "iters", "jobs", "dataset", "family"):
        val = getattr(args, key, None)
        if val is not None:
            lines.append(f"{key} = {val}")
            if key == "family":
                lines.append(f"families = {val}")
    if task is not None:
        lines.append(f"task = {task}")
    src = args.config if getattr(args, "config", None) else "<args>"
    return parse_config_text("\n".join(lines), src)


def output_dir(args, cfg: RunConfig) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
    return root / f"{cfg.task}-{cfg.model}-{cfg.config_hash()}"


def _write_snapshot(cfg: RunConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved").write_text(dump_config(cfg))


def load_graph(cfg: RunConfig) -> DatasetBundle:
    """Dataset directory if configured, else one synthetic graph of ``family``."""
    if cfg.dataset:
        return ingest_citation_dataset(cfg.dataset)
    g = generate(cfg.family, cfg.n_nodes, seed=cfg.seed)
    return DatasetBundle(g, [str(i) for i in range(g.n)])


def _lcc_bundle(bundle: DatasetBundle) -> DatasetBundle:
    g = largest_connected_component(bundle.graph)
    kept = g.attrs.get("kept_nodes", np.arange(g.n))
    return DatasetBundle(g, [bundle.node_ids[i] for i in kept], bundle.class_names)


# --------------------------------------------------------- commands


def cmd_generate(args) -> int:
    out = Path(args.out)
    if args.count == 1 and out.suffix:
        out.parent.mkdir(parents=True, exist_ok=True)
        write_edgelist(generate(args.family, args.n, seed=args.seed), out)
        print(out)
        return EXIT_OK
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    for i, s in enumerate(rng.integers(0, 2**63 - 1, size=args.count)):
        write_edgelist(generate(args.family, args.n, seed=int(s)), out / f"graph_{i:04d}.tsv")
    print(out)
    return EXIT_OK


def cmd_train(args) -> int:
    """One model on one edge split; writes checkpoint, metrics, resolved config."""
    cfg = resolve_config(args, task="link")
    bundle = _lcc_bundle(load_graph(cfg))
    out = output_dir(args, cfg)
    _write_snapshot(cfg, out)
    split = split_edges(bundle.graph, cfg.val_frac, cfg.test_frac, seed=cfg.seed)
    feats = bundle.graph.features if cfg.use_features else None
    res = train_link_model(split, cfg, cfg.lambda_grid[0], cfg.dropout_grid[0], cfg.seed, feats)
    save_checkpoint(res.model, out / "checkpoint.bin", seed=cfg.seed,
                    extra={"node_ids": bundle.node_ids, "config_hash": cfg.config_hash()})
    m = Metrics(label=cfg.model)
    m.add(seed=cfg.seed, auc=res.test_auc if split.test_pos.size else None,
          ap=res.test_ap if split.test_pos.size else None, val_auc=res.val_auc, best_iter=res.best_iter)
    write_metrics([m], cfg, out)
    print(json.dumps({"out": str(out), "test_auc": res.test_auc, "test_ap": res.test_ap}))
    return EXIT_OK


def _run_link(cfg: RunConfig, out: Path) -> dict:
    bundle = _lcc_bundle(load_graph(cfg))
    metrics, models = link_prediction_run(bundle.graph, cfg, return_models=True)
    save_checkpoint(models[0], out / "checkpoint.bin", seed=cfg.seed,
                    extra={"node_ids": bundle.node_ids, "config_hash": cfg.config_hash()})
    write_metrics([metrics], cfg, out)
    return metrics.summary()


def _run_density(cfg: RunConfig, out: Path) -> dict:
    families = cfg.families if cfg.families else (cfg.family,)
    all_metrics, summary = [], {}
    for fam in families:
        m, models = density_estimation_run(fam, cfg, return_models=True)
        all_metrics.append(m)
        summary[fam] = m.summary()
        save_checkpoint(models[0], out / f"checkpoint-{fam}.bin", seed=cfg.seed,
                        extra={"family": fam, "config_hash": cfg.config_hash()})
    write_metrics(all_metrics, cfg, out)
    return summary


def _run_classify(cfg: RunConfig, out: Path) -> dict:
    bundle = load_graph(cfg)
    gamma = cfg.gamma_grid[0] if len(cfg.gamma_grid) == 1 else None
    m = node_classification_run(bundle.graph, cfg, gamma=gamma)
    write_metrics([m], cfg, out)
    return m.summary()


def _theorem_report(cfg: RunConfig, trials: int = 1, n: int = 6, dim: int = 1) -> dict:
    rng = np.random.default_rng(cfg.seed)
    reports = []
    for _ in range(trials):
        g = generate("erdos_renyi", n, seed=int(rng.integers(2**31)))
        shape = (n,) if dim == 1 else (n, dim)
        op = meanfield.random_operator(n, rng, shape)
        emb = rng.normal(size=shape)
        reports.append(meanfield.check_theorem(op, g.adjacency, emb))
    worst = max(r["max_abs_diff_vs_taylor"] for r in reports)
    return {"trials": trials, "max_abs_diff": worst, "reports": reports}


_TASKS = {"link": _run_link, "density": _run_density, "classify": _run_classify}


def _run_task(cfg: RunConfig, args) -> int:
    out = output_dir(args, cfg)
    if cfg.task == "check-theorem":
        report = _theorem_report(cfg, getattr(args, "trials", 1) or 1)
        _write_snapshot(cfg, out)
        (out / "theorem.json").write_text(json.dumps(report, indent=2) + "\n")
        print(json.dumps(report))
        return EXIT_OK
    _write_snapshot(cfg, out)
    summary = _TASKS[cfg.task](cfg, out)
    print(json.dumps({"out": str(out), "summary": summary}, default=float))
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = resolve_config(args, task=args.task)
    return _run_task(cfg, args)


def _eval(task):
    def cmd(args) -> int:
        return _run_task(resolve_config(args, task=task), args)
    return cmd


def cmd_check_theorem(args) -> int:
    cfg = RunConfig(task="check-theorem", seed=args.seed or 0)
    report = _theorem_report(cfg, args.trials, args.n, args.dim)
    print(json.dumps(report))
    return EXIT_OK if report["max_abs_diff"] <= args.tol else EXIT_NUMERIC


def cmd_grad_check(args) -> int:
    seed = args.seed or 0
    # connected, so no latent row sits at the row-normalization singularity z_i = 0
    g = generate("erdos_renyi", args.n, seed=seed)
    while not is_connected(g):
        seed += 1000
        g = generate("erdos_renyi", args.n, seed=seed)
    a_norm = sparse_normalized(g.n, g.edges())
    mcfg = M.ModelConfig(kind=args.model or "graphite_vae", input_dim=g.n, encoder_hidden=(8,), latent_dim=4,
                         decoder_hidden=(8,), out_dim=4, rounds=args.rounds, skip_lambda=0.5)
    model = M.GraphiteModel.create(mcfg, seed=seed)
    targets = M.reconstruction_targets(g.adjacency)
    noise = np.random.default_rng(seed + 1).standard_normal((g.n, mcfg.latent_dim)) if mcfg.variational else None
    res = T.grad_check(lambda: M.objective(model, a_norm, targets, None, noise).loss, model.parameters())
    report = {"model": mcfg.kind, "n": g.n, "max_rel_error": res.max_rel_error, "checked": res.checked,
              "skipped": len(res.skipped)}
    print(json.dumps(report))
    return EXIT_OK if res.max_rel_error <= args.tol else EXIT_NUMERIC


def cmd_export(args) -> int:
    model, manifest = load_checkpoint(args.checkpoint)
    bundle = ingest_citation_dataset(args.dataset)
    ids = manifest.get("node_ids")
    if ids is not None and list(ids) != bundle.node_ids:
        index = bundle.index
        missing = [i for i in ids if i not in index]
        if missing:
            raise DataError(f"{args.dataset}: checkpoint node ids missing from dataset, e.g. {missing[0]!r}")
        keep = np.array([index[i] for i in ids])
        a = bundle.graph.adjacency[np.ix_(keep, keep)]
        f = None if bundle.graph.features is None else bundle.graph.features[keep]
        bundle = DatasetBundle(Graph(a, f), list(ids))
    z = export_embeddings(model, bundle, args.out)
    print(json.dumps({"out": args.out, "rows": int(z.shape[0]), "cols": int(z.shape[1])}))
    return EXIT_OK


# ------------------------------------------------------------ parser


def _common(p, tasky: bool = True):
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    p.add_argument("--out", help="output directory (default under $%s)" % OUTPUT_ROOT_ENV)
    p.add_argument("--seed", type=int)
    p.add_argument("--model")
    if tasky:
        p.add_argument("--runs", type=int)
        p.add_argument("--iters", type=int)
        p.add_argument("--jobs", type=int, help="parallel worker processes across seeds/splits")
        p.add_argument("--dataset", help="directory with edges.tsv [features.tsv labels.tsv]")
        p.add_argument("--family", choices=FAMILIES)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="graphite", description=__doc__.splitlines()[0])
    ap.add_argument("--log-level", default="WARNING")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="sample synthetic graphs as edge lists")
    p.add_argument("--family", choices=FAMILIES, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--out", required=True, help="file (count=1) or directory")
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("train", help="train one model on one edge split and save a checkpoint")
    _common(p)
    p.set_defaults(fn=cmd_train)

    for name, task, helptext in (("eval-link", "link", "link prediction over random edge splits"),
                                 ("eval-density", "density", "density estimation on graph families"),
                                 ("eval-classify", "classify", "semi-supervised node classification")):
        p = sub.add_parser(name, help=helptext)
        _common(p)
        p.set_defaults(fn=_eval(task))

    p = sub.add_parser("run", help="run the task named in a config file")
    p.add_argument("config_file")
    p.add_argument("--task", choices=("link", "density", "classify", "check-theorem"))
    p.add_argument("--trials", type=int, default=1)
    _common(p)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("check-theorem", help="GNN vs first-order mean-field update, JSON report")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--n", type=int, default=6)
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-12)
    p.set_defaults(fn=cmd_check_theorem)

    p = sub.add_parser("grad-check", help="finite-difference check of the training objective")
    p.add_argument("--model", choices=M.MODEL_KINDS, default="graphite_vae")
    p.add_argument("--n", type=int, default=6)
    p.add_argument("--rounds", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(fn=cmd_grad_check)

    p = sub.add_parser("export-embeddings", help="write final node embeddings as TSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_export)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "run":
        args.config = args.config or args.config_file
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, LabelError, GeneratorError, SplitError, CheckpointError, FileNotFoundError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (T.NumericError, FloatingPointError) as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
