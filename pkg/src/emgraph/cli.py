"""Command-line entry points.

Exit status: 0 success, 2 configuration error, 3 data error, 4 numeric error.
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import diagnostics as DG
from . import distributions as D
from . import model as M
from . import training as TR
from .checkpoint import load_state, save_state
from .config import RunConfig, load_config
from .dataio import load_hetero, load_molecular, write_edge_list, write_metrics_csv
from .errors import ConfigError, DataError, EmgraphError, NumericError
from .mcmc import dump_samples
from .metrics import macro_f1, micro_f1, rmse
from .synthetic import SyntheticSpec, gen_synthetic

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emgraph",
        description="EM training of GNNs over a distribution of "
                    "parametrized graphs")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(p):
        p.add_argument("--config", required=True, help="run config JSON")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--variant", default=None)
        p.add_argument("--eta", type=float, default=None)
        p.add_argument("--T", dest="em_iterations", type=int, default=None)
        p.add_argument("--T-prime", dest="mstep_epochs", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")

    p_pre = sub.add_parser("pretrain", help="pretrain only, save a checkpoint")
    add_config_args(p_pre)

    p_train = sub.add_parser("train", help="run the full EM loop")
    add_config_args(p_train)
    p_train.add_argument("--dump-chains", action="store_true",
                         help="write per-iteration accepted-sample lists")

    p_eval = sub.add_parser("eval", help="evaluate a saved state")
    add_config_args(p_eval)
    p_eval.add_argument("--state", required=True, help="checkpoint JSON")

    p_diag = sub.add_parser("diagnose", help="dominance-ratio and "
                                             "stability-gap tables")
    add_config_args(p_diag)
    p_diag.add_argument("--state", required=True, help="checkpoint JSON")
    p_diag.add_argument("--probe-epochs", type=int, nargs="+",
                        default=[4, 16, 64])
    p_diag.add_argument("--probe-pairs", type=int, default=5)

    p_gen = sub.add_parser("gen-data", help="generate a planted synthetic "
                                            "dataset")
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--lambda-star", type=float, default=0.7)
    p_gen.add_argument("--nodes", type=int, default=300)
    p_gen.add_argument("--classes", type=int, default=3)
    p_gen.add_argument("--feature-dim", type=int, default=16)
    p_gen.add_argument("--noise", type=float, default=0.05)
    p_gen.add_argument("--edge-prob", type=float, nargs=2, default=[0.02, 0.02])

    p_exp = sub.add_parser("export-dist", help="write the latent distribution "
                                               "of a saved state")
    p_exp.add_argument("--state", required=True)
    p_exp.add_argument("--out", required=True)
    return parser


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    for key in ("seed", "variant", "eta", "em_iterations", "mstep_epochs"):
        val = getattr(args, key, None)
        if val is not None:
            setattr(cfg, key, val)
    if getattr(args, "out", None) is not None:
        cfg.out_dir = args.out
    cfg.validate(base_dir=Path(args.config).parent)
    return cfg


def _build_problem(cfg: RunConfig, base_dir: Path) -> TR.Problem:
    grid = cfg.to_train_config().grid
    kind = cfg.dataset["kind"]
    split_seed = cfg.seed if cfg.split_seed is None else cfg.split_seed
    if kind == "hetero-edgelist":
        graph, task = load_hetero(
            cfg.resolve_path(cfg.dataset["edges"], base_dir),
            cfg.resolve_path(cfg.dataset["features"], base_dir),
            cfg.resolve_path(cfg.dataset["labels"], base_dir),
            split=cfg.split, split_seed=split_seed)
        return TR.Problem(task, grid, graph=graph)
    if kind == "molecular-coords":
        molecules, task = load_molecular(
            cfg.resolve_path(cfg.dataset["coords"], base_dir),
            cfg.resolve_path(cfg.dataset["targets"], base_dir),
            split=cfg.split, split_seed=split_seed)
        return TR.Problem(task, grid, molecules=molecules)
    spec = SyntheticSpec(
        lambda_star=cfg.dataset.get("lambda_star", 0.7),
        num_nodes=cfg.dataset.get("num_nodes", 300),
        num_classes=cfg.dataset.get("num_classes", 3),
        feature_dim=cfg.dataset.get("feature_dim", 16),
        noise=cfg.dataset.get("noise", 0.05),
        edge_prob=tuple(cfg.dataset.get("edge_prob", (0.02, 0.02))),
        split=cfg.split)
    gen_seed = cfg.dataset.get("gen_seed", split_seed)
    graph, task, _meta = gen_synthetic(spec, np.random.default_rng(gen_seed))
    return TR.Problem(task, grid, graph=graph)


def _out_dir(cfg: RunConfig) -> Path:
    if cfg.out_dir is None:
        raise ConfigError("no output directory (set out_dir or pass --out)")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_pretrain(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    out = _out_dir(cfg)
    problem = _build_problem(cfg, Path(args.config).parent)
    tc = cfg.to_train_config()
    rng = np.random.default_rng(tc.seed)
    params = problem.init_params(tc, rng)
    lr = tc.a0 if tc.pretrain_lr is None else tc.pretrain_lr
    params, losses = TR.pretrain(problem, params, tc.pretrain_epochs, lr)
    state = TR.TrainState(params=params, p_t=None, iteration=0, history=[],
                          rng=rng, pretrain_losses=losses)
    (out / "config.json").write_text(cfg.snapshot(), encoding="utf-8")
    save_state(state, tc.grid, out / "state_pretrained.json")
    print(f"pretrained {tc.pretrain_epochs} epochs; "
          f"final loss {losses[-1] if losses else float('nan')!r}")
    return 0


def cmd_train(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    out = _out_dir(cfg)
    problem = _build_problem(cfg, Path(args.config).parent)
    tc = cfg.to_train_config()
    (out / "config.json").write_text(cfg.snapshot(), encoding="utf-8")
    dist_dir = out / "distributions"
    dist_dir.mkdir(exist_ok=True)
    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(exist_ok=True)
    chains_dir = out / "chains"
    if args.dump_chains:
        chains_dir.mkdir(exist_ok=True)

    def on_iteration(state: TR.TrainState, samples: np.ndarray) -> None:
        t = state.iteration
        D.write_distribution(state.p_t, dist_dir / f"p_{t:04d}.tsv")
        save_state(state, tc.grid, ckpt_dir / f"state_{t:04d}.json")
        if args.dump_chains:
            dump_samples(samples, chains_dir / f"chain_{t:04d}.txt")

    state = TR.train(problem, tc, workers=cfg.threads,
                     iteration_callback=on_iteration)
    write_metrics_csv(state.history, out / "metrics.csv")
    save_state(state, tc.grid, out / "state_final.json")
    if state.best_params is not None:
        best = TR.TrainState(params=state.best_params, p_t=state.p_t,
                             iteration=state.best_iteration or 0, history=[],
                             rng=state.rng, pretrain_losses=[])
        save_state(best, tc.grid, out / "state_best.json")
    last = state.history[-1]
    print(f"finished {tc.em_iterations} EM iterations; "
          f"val {last.val_metric!r}, test {last.test_metric!r}")
    return 0


def _metric_block(problem: TR.Problem, params, p) -> dict:
    preds = TR.infer(problem, params, p)
    block = {}
    for split in ("train", "val", "test"):
        idx = problem.task.indices(split)
        if idx.size == 0:
            continue
        truth = problem.task.labels[idx]
        if problem.task.kind == M.NODE_CLASSIFICATION:
            k = int(problem.task.num_classes)
            block[split] = {
                "micro_f1": micro_f1(truth, preds[idx], k),
                "macro_f1": macro_f1(truth, preds[idx], k),
            }
        else:
            block[split] = {"rmse": rmse(truth, preds[idx])}
    return block


def cmd_eval(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    problem = _build_problem(cfg, Path(args.config).parent)
    state, _grid = load_state(args.state)
    if state.p_t is None:
        raise ConfigError("state has no latent distribution; train first")
    block = _metric_block(problem, state.params, state.p_t)
    import json as _json

    text = _json.dumps(block, indent=2, sort_keys=True)
    print(text)
    if cfg.out_dir is not None:
        out = _out_dir(cfg)
        (out / "eval.json").write_text(text + "\n", encoding="utf-8")
    return 0


def cmd_diagnose(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    out = _out_dir(cfg)
    problem = _build_problem(cfg, Path(args.config).parent)
    state, grid = load_state(args.state)
    if state.p_t is None or not state.history:
        raise ConfigError("state has no EM history to diagnose")
    priors = TR.priors_for_variant(cfg.variant, grid)

    if priors.p0.is_zero:
        print("reference prior is zero on the grid; skipping ratio table")
    else:
        rows = DG.ratio_history(state, cfg.eta, priors.p0)
        with open(out / "ratio.csv", "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["iteration", "correction", "first_order", "ratio"])
            for t, approx in rows:
                writer.writerow([t, repr(approx.correction),
                                 repr(approx.first_order), repr(approx.ratio)])
        worst = max(abs(a.ratio) for _, a in rows)
        print(f"ratio table written; max |ratio| = {worst:.6f}")

    q = D.uniform(grid) if isinstance(priors.q, str) else priors.q
    p0 = priors.p0
    probe_cfg = DG.StabilityProbeConfig(
        epoch_counts=tuple(args.probe_epochs), n_pairs=args.probe_pairs,
        a0=cfg.a0, step_c=cfg.step_c, seed=cfg.seed)
    gaps = DG.stability_probe(problem, state.params, state.p_t, p0, q,
                              probe_cfg)
    with open(out / "gaps.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["mstep_epochs", "mean_gap"])
        for count, gap in gaps:
            writer.writerow([count, repr(gap)])
    print(f"gap table written; log-log slope = {DG.loglog_slope(gaps):.4f}")
    return 0


def cmd_gen_data(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = SyntheticSpec(
        lambda_star=args.lambda_star, num_nodes=args.nodes,
        num_classes=args.classes, feature_dim=args.feature_dim,
        noise=args.noise, edge_prob=tuple(args.edge_prob))
    graph, task, meta = gen_synthetic(spec, np.random.default_rng(args.seed))
    write_edge_list(graph, out / "edges.tsv")
    feats = graph.node_features.data
    with open(out / "features.tsv", "w", encoding="utf-8") as fh:
        for row in feats:
            fh.write("\t".join(repr(v) for v in row) + "\n")
    with open(out / "labels.tsv", "w", encoding="utf-8") as fh:
        for label in task.labels:
            fh.write(f"{int(label)}\n")
    import json as _json

    meta_doc = {
        "lambda_star": meta["lambda_star"],
        "seed": args.seed,
        "attempt": meta["attempt"],
        "flipped_labels": meta["flipped"],
        "num_nodes": spec.num_nodes,
        "num_classes": spec.num_classes,
        "feature_dim": spec.feature_dim,
        "edge_prob": list(spec.edge_prob),
    }
    (out / "meta.json").write_text(
        _json.dumps(meta_doc, indent=2, sort_keys=True) + "\n",
        encoding="utf-8")
    print(f"synthetic dataset written to {out}")
    return 0


def cmd_export_dist(args) -> int:
    state, _grid = load_state(args.state)
    if state.p_t is None:
        raise ConfigError("state has no latent distribution to export")
    D.write_distribution(state.p_t, args.out)
    print(f"distribution written to {args.out}")
    return 0


COMMANDS = {
    "pretrain": cmd_pretrain,
    "train": cmd_train,
    "eval": cmd_eval,
    "diagnose": cmd_diagnose,
    "gen-data": cmd_gen_data,
    "export-dist": cmd_export_dist,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config-error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data-error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric-error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except EmgraphError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
