"""Command-line front end.

Verbs mirror the workflow: meta-train a checkpoint, adapt it to a target
task, run baselines, batch everything into seeded campaigns, compare
campaign outputs, and sanity-check a benchmark file.
"""
import argparse
import os
import sys

import numpy as np

from .config import build_engine, build_oracle, dump_config, load_config
from .harness import (ALGORITHMS, Campaign, compare, render_table,
                      run_campaign)
from .baselines import run_baseline, write_trace
from .oracles import RewardSpec, TabularBenchmark
from .spaces import arch_key


def _load_cfg(args):
    cfg = load_config(getattr(args, "config", None))
    if getattr(args, "oracle_file", None):
        cfg["oracle"] = {"kind": "tabular", "path": args.oracle_file}
        cfg["schema"] = {"kind": "cell"}
    return cfg


def _reward_spec(cfg):
    return RewardSpec(fidelity=cfg["reward"]["fidelity"],
                      t_target=cfg["reward"]["t_target"], w=cfg["reward"]["w"])


def cmd_meta_train(args):
    cfg = _load_cfg(args)
    engine = build_engine(cfg, seed=args.seed, phase="meta")
    engine.meta_train(run_dir=args.out, config_snapshot=dump_config(cfg))
    print(f"checkpoint written to {os.path.join(args.out, 'checkpoint')}")
    return 0


def cmd_adapt(args):
    cfg = _load_cfg(args)
    engine = build_engine(cfg, seed=args.seed, phase="adapt", mode=args.mode)
    if args.checkpoint and engine.mode != "sfs":
        engine.load_checkpoint(args.checkpoint)
    n_search = None
    if args.budget is not None:
        n_search = args.budget - engine.run_cfg.seed_networks
        if n_search < 0:
            print("budget smaller than the number of seed networks", file=sys.stderr)
            return 2
    best_actions, best_reward, _trace = engine.adapt(
        args.task, run_dir=args.out, n_search=n_search,
        wall_clock_s=args.wall_clock_s, config_snapshot=dump_config(cfg))
    print(f"best architecture {arch_key(engine.schema, best_actions)} "
          f"actions={list(best_actions)} reward={best_reward:.6f}")
    return 0


def _baseline_kwargs(args):
    kwargs = {}
    if args.algo == "rea":
        kwargs = {"population": args.population, "tournament": args.tournament}
    elif args.algo == "reinforce":
        kwargs = {"lr": args.algo_lr, "baseline_decay": args.baseline_decay}
    return kwargs


def cmd_baseline(args):
    cfg = _load_cfg(args)
    oracle = build_oracle(cfg)
    rng = np.random.default_rng(np.random.SeedSequence(args.seed))
    rows = run_baseline(args.algo, oracle.schema, oracle, args.task,
                        _reward_spec(cfg), args.budget, rng,
                        **_baseline_kwargs(args))
    os.makedirs(args.out, exist_ok=True)
    write_trace(os.path.join(args.out, "metrics.csv"), oracle.schema, rows)
    print(f"best reward {rows[-1]['best_reward']:.6f} over {args.budget} evaluations")
    return 0


def cmd_campaign(args):
    cfg = _load_cfg(args)
    campaign = Campaign(
        algorithm=args.algo, task=args.task, trials=args.trials,
        base_seed=args.seed, budget=args.budget, out_dir=args.out,
        mode=args.mode, checkpoint=args.checkpoint, workers=args.workers,
        baseline_args=_baseline_kwargs(args) if args.algo in ("rea", "reinforce") else None)
    summary = run_campaign(campaign, cfg)
    print(f"{summary['trials'] - summary['failed']}/{summary['trials']} trials ok; "
          f"final best {summary['final_mean']:.5f} +- {summary['final_std']:.5f}")
    if summary["failed"] > 0.01 * summary["trials"]:
        print(f"{summary['failed']} trials failed", file=sys.stderr)
        return 1
    return 0


def cmd_compare(args):
    ks = tuple(int(k) for k in args.ks.split(","))
    header, rows = compare(args.campaigns, ks=ks,
                           with_oracle_row=not args.no_oracle_row)
    csv_text, aligned = render_table(header, rows)
    print(aligned)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(csv_text + "\n")
    return 0


def cmd_ingest_check(args):
    try:
        bench = TabularBenchmark.load(args.file)
    except Exception as exc:
        print(f"FAIL: {exc}", file=sys.stderr)
        return 1
    print(f"OK: {len(bench.datasets)} datasets, "
          f"{bench.payload.shape[1]} architectures, "
          f"{bench.epoch_count} epochs per curve")
    for name in bench.datasets:
        print(f"  {name}: max final val acc {bench.max_final_val(name):.3f}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="ctxnas",
        description="Transferrable architecture search against pluggable reward oracles.")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp, seed=True):
        sp.add_argument("--config", help="YAML config; defaults are built in")
        sp.add_argument("--oracle-file", help="shortcut: use this tabular benchmark file")
        if seed:
            sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("meta-train", help="meta-train a checkpoint over cheap tasks")
    common(sp)
    sp.add_argument("--out", required=True, help="run directory")
    sp.set_defaults(fn=cmd_meta_train)

    sp = sub.add_parser("adapt", help="search one target task from a checkpoint")
    common(sp)
    sp.add_argument("--task", required=True)
    sp.add_argument("--checkpoint", help="checkpoint directory from meta-train")
    sp.add_argument("--out", required=True)
    sp.add_argument("--mode", default=None,
                    help="ablation mode override (full, zero-z, random-z, "
                         "no-evaluator, gt-evaluator, sfs)")
    sp.add_argument("--budget", type=int, default=None,
                    help="total oracle evaluations including history seeds")
    sp.add_argument("--wall-clock-s", type=float, default=None)
    sp.set_defaults(fn=cmd_adapt)

    sp = sub.add_parser("baseline", help="run one baseline searcher")
    common(sp)
    sp.add_argument("--algo", required=True, choices=sorted(set(ALGORITHMS) - {"catch"}))
    sp.add_argument("--task", required=True)
    sp.add_argument("--budget", type=int, required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--population", type=int, default=10)
    sp.add_argument("--tournament", type=int, default=3)
    sp.add_argument("--algo-lr", type=float, default=0.01)
    sp.add_argument("--baseline-decay", type=float, default=0.9)
    sp.set_defaults(fn=cmd_baseline)

    sp = sub.add_parser("campaign", help="many seeded trials plus aggregation")
    common(sp)
    sp.add_argument("--algo", required=True, choices=ALGORITHMS)
    sp.add_argument("--task", required=True)
    sp.add_argument("--trials", type=int, required=True)
    sp.add_argument("--budget", type=int, required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--mode", default="full")
    sp.add_argument("--checkpoint")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--population", type=int, default=10)
    sp.add_argument("--tournament", type=int, default=3)
    sp.add_argument("--algo-lr", type=float, default=0.01)
    sp.add_argument("--baseline-decay", type=float, default=0.9)
    sp.set_defaults(fn=cmd_campaign)

    sp = sub.add_parser("compare", help="summary table across campaigns")
    sp.add_argument("campaigns", nargs="+", help="campaign directories")
    sp.add_argument("--ks", default="10,25,50",
                    help="comma-separated evaluation counts for best@k columns")
    sp.add_argument("--out", help="also write the table as CSV here")
    sp.add_argument("--no-oracle-row", action="store_true")
    sp.set_defaults(fn=cmd_compare)

    sp = sub.add_parser("ingest-check", help="validate a portable benchmark file")
    sp.add_argument("file")
    sp.set_defaults(fn=cmd_ingest_check)

    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
