"""Command line entry point: ``emlnet {run,ablate,eval,gen,sweep}``.

Exit codes: 0 success, 1 numeric failure, 2 I/O or configuration failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, ExperimentConfig, Task, load_config, to_text
from .evaluation import evaluate, threshold_sweep
from .model import load_checkpoint, save_checkpoint
from .reporting import Cell, ComparisonTable, cells_csv, eval_csv, history_csv
from .scenario import UNKNOWN, Scenario, generate_scenario, load_features, load_manifest, save_scenario
from .trainer import train

logger = logging.getLogger("emlnet")

EXIT_OK, EXIT_NUMERIC, EXIT_IO = 0, 1, 2


def build_scenario(cfg: ExperimentConfig, seed: int) -> Scenario:
    if cfg.manifest:
        return load_manifest(cfg.manifest)
    return generate_scenario(cfg.split, cfg.dim, cfg.n_per_class, cfg.shift, cfg.spread, seed)


def train_and_evaluate(cfg: ExperimentConfig, seed: int):
    scenario = build_scenario(cfg, seed)
    params, history = train(
        scenario, cfg.model, cfg.optim, cfg.weights, cfg.oem_mode, seed, cfg.memory, cfg.threshold,
    )
    labels = scenario.target_eval_labels()
    result = None
    if labels is not None:
        result = evaluate(params, scenario.target.features, labels, scenario.shared_classes,
                          cfg.threshold, cfg.unk_per_class)
    return scenario, params, history, result


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if getattr(args, "oem", None):
        cfg = replace(cfg, oem_mode=args.oem)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seeds=(args.seed,))
    if getattr(args, "out", None):
        cfg = replace(cfg, out=args.out)
    return cfg


def cmd_run(args) -> int:
    cfg = _load(args)
    seed = cfg.seeds[0]
    cfg = replace(cfg, seeds=(seed,))
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    _, params, history, result = train_and_evaluate(cfg, seed)
    (out / "resolved.cfg").write_text(to_text(cfg), encoding="utf-8")
    (out / "history.csv").write_text(history_csv(history.steps, history.lrs), encoding="utf-8")
    save_checkpoint(out / "checkpoint.txt", params)
    (out / "eval.csv").write_text(eval_csv([result] if result else []), encoding="utf-8")
    if result is not None:
        print(result.summary())
    print(f"wrote {out}/{{history.csv,checkpoint.txt,eval.csv,resolved.cfg}}")
    return EXIT_OK


def _cell(job):
    cfg, variant, task, seed = job
    cell_cfg = cfg.variant(variant).for_task(task)
    _, _, _, result = train_and_evaluate(cell_cfg, seed)
    if result is None:
        raise ConfigError("ablation needs labeled target data")
    return Cell(variant, str(task.split) if task.shift is None else str(task), seed,
                result.os_star, result.unk, result.hsc)


def ablate(cfg: ExperimentConfig, threads: int = 1) -> ComparisonTable:
    if len(cfg.variants) < 2:
        raise ConfigError("ablate needs at least two variants")
    if len(cfg.seeds) < 3:
        raise ConfigError("ablate needs at least three seeds")
    tasks = cfg.tasks or (Task(cfg.split),)
    jobs = [(cfg, v, t, s) for v in cfg.variants for t in tasks for s in cfg.seeds]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            cells = list(pool.map(_cell, jobs))
    else:
        cells = [_cell(j) for j in jobs]
    return ComparisonTable(cells)


def cmd_ablate(args) -> int:
    cfg = _load(args)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    table = ablate(cfg, args.threads)
    (out / "resolved.cfg").write_text(to_text(cfg), encoding="utf-8")
    (out / "cells.csv").write_text(cells_csv(table.cells), encoding="utf-8")
    (out / "table.csv").write_text(table.to_csv(), encoding="utf-8")
    (out / "table.txt").write_text(table.to_text(), encoding="utf-8")
    print(table.to_text(), end="")
    return EXIT_OK


def _eval_inputs(args):
    params = load_checkpoint(args.checkpoint)
    data = load_features(args.features, has_labels=True)
    labels = data.labels.copy()
    labels[(labels < 0) | (labels >= params.K)] = UNKNOWN
    return params, data.features, labels, frozenset(range(params.K))


def cmd_eval(args) -> int:
    params, x, labels, shared = _eval_inputs(args)
    result = evaluate(params, x, labels, shared, args.threshold, args.unk_per_class)
    print(result.summary())
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "eval.csv").write_text(eval_csv([result]), encoding="utf-8")
    return EXIT_OK


def cmd_sweep(args) -> int:
    params, x, labels, shared = _eval_inputs(args)
    grid = [float(t) for t in args.grid.split(",")] if args.grid else ExperimentConfig().sweep_grid
    table = threshold_sweep(params, x, labels, shared, grid, args.unk_per_class)
    text = eval_csv(list(table.values()))
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "sweep.csv").write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


def cmd_gen(args) -> int:
    cfg = _load(args)
    scenario = generate_scenario(cfg.split, cfg.dim, cfg.n_per_class, cfg.shift, cfg.spread, cfg.seeds[0])
    manifest = save_scenario(scenario, cfg.out)
    print(f"wrote {manifest} (source N={scenario.source.n}, target N={scenario.target.n}, K={scenario.K})")
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="emlnet", description="Train and evaluate open-set domain adaptation models.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--oem", choices=["uniform", "weighted"])
        return p

    with_config(sub.add_parser("run", help="train one configuration")).set_defaults(func=cmd_run)
    p = with_config(sub.add_parser("ablate", help="train every variant x task x seed"))
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_ablate)
    with_config(sub.add_parser("gen", help="write a synthetic scenario to files")).set_defaults(func=cmd_gen)

    for name, func in (("eval", cmd_eval), ("sweep", cmd_sweep)):
        p = sub.add_parser(name, help=f"{name} a checkpoint on a labeled feature file")
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--features", required=True)
        p.add_argument("--out")
        p.add_argument("--unk-per-class", action="store_true")
        if name == "eval":
            p.add_argument("--threshold", type=float, default=0.5)
        else:
            p.add_argument("--grid", help="comma-separated thresholds")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FloatingPointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_IO
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
