"""Command-line harness: gen / train / explain / eval / sweep.

Progress and results stream as line-delimited JSON on stdout. Every artifact
embeds the seed and a hash of the config that produced it, and `eval` refuses
artifacts whose recorded dataset hash does not match the dataset on disk.
A JSON config file may supply any flag; explicit flags win.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from .explain import PG_COEFS, GibCoefficients
from .gcn import TrainConfig, load_model, save_model, train_gcn
from .graphs import (instance_graph, load_dataset, mask_from_edge_list,
                     mask_to_edge_list, save_dataset)
from .metrics import dataset_auc, export_embeddings, shift_report
from .mixup import MixupConfig
from .runner import (ExperimentConfig, build_mixed_from_masks, explain_all,
                     pg_training_instances, pick_instances,
                     run_explanation_seeds)
from .synth import DATASET_NAMES, GenConfig, canonical_config, generate


def emit(obj) -> None:
    sys.stdout.write(json.dumps(obj) + "\n")
    sys.stdout.flush()


def fail(message: str, code: int = 1) -> int:
    emit({"event": "error", "message": message})
    return code


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def _parse_seeds(text: str):
    return tuple(int(s) for s in text.split(",") if s.strip() != "")


def cmd_gen(args) -> int:
    if args.dataset not in DATASET_NAMES:
        return fail(f"unknown dataset name: {args.dataset}")
    cfg = canonical_config(args.dataset)
    overrides = {}
    for name in ("seed", "num_base_nodes", "num_motifs", "num_graphs",
                 "ba_attach_m", "random_edge_fraction", "tree_levels"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if overrides:
        from dataclasses import replace
        cfg = replace(cfg, **overrides)
    ds = generate(args.dataset, cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(ds, out)
    if ds.task == "node":
        nodes = ds.base.n
        edges = ds.base.num_edges
        classes = int(ds.base.node_labels.max()) + 1
    else:
        nodes = sum(g.n for g in ds.graphs)
        edges = sum(g.num_edges for g in ds.graphs)
        classes = ds.num_classes
    emit({"event": "generated", "dataset": args.dataset, "task": ds.task,
          "graphs": len(ds.graphs), "nodes": nodes, "edges": edges,
          "classes": classes, "num_motifs": cfg.num_motifs,
          "seed": cfg.seed, "path": str(out)})
    return 0


def cmd_train(args) -> int:
    try:
        ds = load_dataset(args.dataset)
    except FileNotFoundError:
        return fail(f"missing dataset: {args.dataset}")
    cfg = TrainConfig(learning_rate=args.lr, weight_decay=args.weight_decay,
                      epochs=args.epochs, seed=args.seed,
                      train_fraction=args.train_fraction)
    model, history = train_gcn(ds, cfg)
    meta = {
        "dataset_hash": file_hash(args.dataset),
        "seed": cfg.seed,
        "epochs": cfg.epochs,
        "lr": cfg.learning_rate,
        "train_acc": history["train_acc"],
        "test_acc": history["test_acc"],
    }
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, out, extra=meta)
    emit({"event": "trained", **meta, "path": str(out)})
    return 0


def _coefs_from_args(args):
    """None (backbone default) unless a coefficient flag was given."""
    given = (args.alpha, args.size_coef, args.entropy_coef)
    if all(v is None for v in given):
        return None
    base = PG_COEFS if args.backbone == "pgexplainer" else GibCoefficients()
    return GibCoefficients(
        alpha=base.alpha if args.alpha is None else args.alpha,
        size_coef=base.size_coef if args.size_coef is None else args.size_coef,
        entropy_coef=(base.entropy_coef if args.entropy_coef is None
                      else args.entropy_coef))


def _mixup_cfg_from_args(args):
    """None (per-task default) unless a mixup flag was given."""
    if args.lam is None and args.eta is None:
        return None
    return MixupConfig(lam=1.0 if args.lam is None else args.lam,
                       eta=1 if args.eta is None else args.eta)


def _experiment_config(args) -> ExperimentConfig:
    return ExperimentConfig(
        dataset=getattr(args, "name", "custom"),
        backbone=args.backbone,
        mixup=args.mixup,
        coefs=_coefs_from_args(args),
        mixup_cfg=_mixup_cfg_from_args(args),
        explainer_epochs=args.explainer_epochs,
        explainer_lr=args.explainer_lr,
        seeds=_parse_seeds(args.seeds),
        max_instances=args.max_instances,
        max_train_instances=args.max_train_instances,
    )


def cmd_explain(args) -> int:
    try:
        ds = load_dataset(args.dataset)
        model = load_model(args.model)
    except FileNotFoundError as exc:
        return fail(str(exc))
    if model.task != ds.task:
        return fail(f"checkpoint task {model.task!r} incompatible with dataset task {ds.task!r}")
    config = _experiment_config(args)
    params = config.explainer_params(ds.task)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    payload = {
        "method": f"{config.backbone}{'+mixup' if config.mixup else ''}",
        "config": config.to_dict(),
        "config_hash": config.config_hash(),
        "dataset_hash": file_hash(args.dataset),
        "seeds": {},
    }
    for seed in config.seeds:
        instances = pick_instances(ds, seed, config.max_instances)
        train_instances = None
        if config.backbone == "pgexplainer":
            train_instances = pg_training_instances(ds, seed, config.max_train_instances)
        masks = explain_all(model, ds, config.backbone, config.mixup,
                            config.resolved_coefs(), config.resolved_mixup_cfg(ds.task),
                            seed,
                            params["epochs"], params["lr"], instances,
                            train_instances=train_instances)
        payload["seeds"][str(seed)] = {
            str(i): mask_to_edge_list(m) for i, m in masks.items()
        }
        emit({"event": "explained", "seed": seed, "instances": len(masks),
              "elapsed_s": round(time.time() - t0, 2)})
    payload["wall_time_s"] = round(time.time() - t0, 2)
    with open(out, "w") as fh:
        json.dump(payload, fh)
    emit({"event": "written", "path": str(out)})
    return 0


def cmd_eval(args) -> int:
    try:
        ds = load_dataset(args.dataset)
        model = load_model(args.model)
        with open(args.explanations) as fh:
            payload = json.load(fh)
    except FileNotFoundError as exc:
        return fail(str(exc))
    if ds.ground_truth is None:
        return fail("dataset has no ground-truth masks; nothing to evaluate")
    if payload.get("dataset_hash") != file_hash(args.dataset):
        return fail("explanations were produced for a different dataset file")
    aucs = []
    per_seed = {}
    last_masks = None
    for seed, entries in payload["seeds"].items():
        masks = {}
        for iid, edges in entries.items():
            g, _ = instance_graph(ds, int(iid))
            masks[int(iid)] = mask_from_edge_list(edges, g.n)
        auc = dataset_auc(ds, masks,
                          pooled=str(payload.get("method", "")).startswith("pgexplainer"))
        aucs.append(auc)
        per_seed[seed] = auc
        last_masks = masks
    cfg = payload.get("config", {})
    mix_cfg = MixupConfig(**(cfg.get("mixup_cfg") or {}))
    mixed = build_mixed_from_masks(model, ds, last_masks, mix_cfg, seed=0)
    report = shift_report(model, ds, last_masks, mixed).summary()
    results = {
        "dataset": cfg.get("dataset"),
        "method": payload.get("method"),
        "seeds": sorted(int(s) for s in payload["seeds"]),
        "config_hash": payload.get("config_hash"),
        "auc_mean": float(np.mean(aucs)),
        "auc_std": float(np.std(aucs)),
        "per_seed": per_seed,
        "shift_report": report,
    }
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w") as fh:
        json.dump(results, fh, indent=2)
    emit({"event": "evaluated", "auc_mean": results["auc_mean"],
          "auc_std": results["auc_std"], "path": str(out)})
    return 0


def cmd_sweep(args) -> int:
    if not args.grid:
        return fail("empty sweep grid")
    try:
        ds = load_dataset(args.dataset)
        model = load_model(args.model)
    except FileNotFoundError as exc:
        return fail(str(exc))
    grid = [float(x) for x in args.grid.split(",")]
    rows = []
    for value in grid:
        lam = value if args.param == "lambda" else (
            1.0 if args.lam is None else args.lam)
        eta = int(value) if args.param == "eta" else (
            1 if args.eta is None else args.eta)
        config = ExperimentConfig(
            dataset="sweep", backbone=args.backbone, mixup=True,
            coefs=_coefs_from_args(args),
            mixup_cfg=MixupConfig(lam=lam, eta=eta),
            explainer_epochs=args.explainer_epochs,
            explainer_lr=args.explainer_lr,
            seeds=_parse_seeds(args.seeds),
            max_instances=args.max_instances,
            max_train_instances=args.max_train_instances,
        )
        results = run_explanation_seeds(model, ds, config)
        results.pop("masks_last_seed", None)
        row = {"param": args.param, "value": value,
               "auc_mean": results["auc_mean"], "auc_std": results["auc_std"],
               "degenerate": bool(args.param == "lambda" and value == 0.0)}
        rows.append(row)
        emit({"event": "sweep_point", **row})
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    emit({"event": "written", "path": str(out)})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mixexplain")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic benchmark")
    p.add_argument("dataset", choices=DATASET_NAMES)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--num-base-nodes", dest="num_base_nodes", type=int, default=None)
    p.add_argument("--num-motifs", dest="num_motifs", type=int, default=None)
    p.add_argument("--num-graphs", dest="num_graphs", type=int, default=None)
    p.add_argument("--ba-attach-m", dest="ba_attach_m", type=int, default=None)
    p.add_argument("--random-edge-fraction", dest="random_edge_fraction",
                   type=float, default=None)
    p.add_argument("--tree-levels", dest="tree_levels", type=int, default=None)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train the GCN backbone")
    p.add_argument("dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--weight-decay", dest="weight_decay", type=float, default=5e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-fraction", dest="train_fraction", type=float, default=0.8)
    p.set_defaults(func=cmd_train)

    def add_explainer_flags(p):
        p.add_argument("--backbone", choices=("gnnexplainer", "pgexplainer"),
                       default="gnnexplainer")
        p.add_argument("--mixup", action="store_true")
        p.add_argument("--alpha", type=float, default=None)
        p.add_argument("--size-coef", dest="size_coef", type=float, default=None)
        p.add_argument("--entropy-coef", dest="entropy_coef", type=float, default=None)
        p.add_argument("--lam", type=float, default=None)
        p.add_argument("--eta", type=int, default=None)
        p.add_argument("--explainer-epochs", dest="explainer_epochs",
                       type=int, default=None)
        p.add_argument("--explainer-lr", dest="explainer_lr",
                       type=float, default=None)
        p.add_argument("--seeds", default="0,1,2,3,4,5,6,7,8,9")
        p.add_argument("--max-instances", dest="max_instances",
                       type=int, default=None)
        p.add_argument("--max-train-instances", dest="max_train_instances",
                       type=int, default=None)
        p.add_argument("--config", default=None,
                       help="JSON file supplying any flag; flags override")

    p = sub.add_parser("explain", help="run an explainer over all instances")
    p.add_argument("model")
    p.add_argument("dataset")
    p.add_argument("--name", default="custom")
    p.add_argument("--out", required=True)
    add_explainer_flags(p)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("eval", help="score explanations against ground truth")
    p.add_argument("explanations")
    p.add_argument("dataset")
    p.add_argument("model")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="sweep lambda or eta")
    p.add_argument("param", choices=("lambda", "eta"))
    p.add_argument("model")
    p.add_argument("dataset")
    p.add_argument("--grid", required=True, help="comma-separated grid values")
    p.add_argument("--out", required=True)
    add_explainer_flags(p)
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        with open(args.config) as fh:
            values = json.load(fh)
        # explicit CLI flags win over config-file values
        tokens = list(argv if argv is not None else sys.argv[1:])
        for key, value in values.items():
            flag = "--" + key.replace("_", "-")
            given = any(t == flag or t.startswith(flag + "=") for t in tokens)
            if hasattr(args, key) and not given:
                setattr(args, key, value)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        return fail(str(exc))


if __name__ == "__main__":
    raise SystemExit(main())
