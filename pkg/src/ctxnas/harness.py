"""Multi-trial experiment runner and aggregation.

A campaign runs one algorithm on one task for many seeded trials, each trial
writing the shared trace CSV into its own subdirectory; aggregation then
recomputes everything from those CSVs alone (sorted finals, mean and std of
the best-so-far curve). Trials are independent, so they can be dispatched
across a process pool; trial i always behaves exactly like a standalone run
seeded with base_seed + i.
"""
import csv
import json
import os
import traceback
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .baselines import BASELINES, run_baseline, write_trace
from .config import build_engine, build_oracle, dump_config, load_config
from .oracles import RewardSpec
from .search import METRICS_COLUMNS

ALGORITHMS = ("catch",) + tuple(sorted(BASELINES))

_oracle_cache = {}


def _cached_oracle(cfg):
    key = json.dumps({"oracle": cfg["oracle"], "schema": cfg["schema"]},
                     sort_keys=True)
    if key not in _oracle_cache:
        _oracle_cache[key] = build_oracle(cfg)
    return _oracle_cache[key]


class Campaign:
    def __init__(self, algorithm, task, trials, base_seed, budget, out_dir,
                 mode="full", checkpoint=None, workers=1, baseline_args=None):
        if algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        if trials < 1 or budget < 1:
            raise ValueError("trials and budget must be >= 1")
        self.algorithm = algorithm
        self.task = task
        self.trials = int(trials)
        self.base_seed = int(base_seed)
        self.budget = int(budget)
        self.out_dir = out_dir
        self.mode = mode
        self.checkpoint = checkpoint
        self.workers = int(workers)
        self.baseline_args = dict(baseline_args or {})

    def seeds(self):
        return [self.base_seed + i for i in range(self.trials)]

    def to_manifest(self):
        return {"algorithm": self.algorithm, "task": self.task,
                "trials": self.trials, "base_seed": self.base_seed,
                "budget": self.budget, "mode": self.mode,
                "checkpoint": self.checkpoint,
                "baseline_args": self.baseline_args}


def run_trial(cfg, campaign_manifest, trial, trial_dir):
    """One seeded trial; returns the final best reward."""
    m = campaign_manifest
    seed = m["base_seed"] + trial
    task = m["task"]
    budget = m["budget"]
    oracle = _cached_oracle(cfg)
    spec = RewardSpec(fidelity=cfg["reward"]["fidelity"],
                      t_target=cfg["reward"]["t_target"], w=cfg["reward"]["w"])
    os.makedirs(trial_dir, exist_ok=True)
    if m["algorithm"] == "catch":
        engine = build_engine(cfg, seed=seed, phase="adapt", oracle=oracle,
                              mode=m["mode"])
        n_search = budget - engine.run_cfg.seed_networks
        if n_search < 0:
            raise ValueError("budget smaller than the number of seed networks")
        if m["checkpoint"] and m["mode"] != "sfs":
            engine.load_checkpoint(m["checkpoint"])
        _best_actions, best_reward, _trace = engine.adapt(
            task, run_dir=trial_dir, n_search=n_search)
        return best_reward
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    rows = run_baseline(m["algorithm"], oracle.schema, oracle, task, spec,
                        budget, rng, **m["baseline_args"])
    write_trace(os.path.join(trial_dir, "metrics.csv"), oracle.schema, rows)
    return rows[-1]["best_reward"]


def _trial_wrapper(args):
    cfg, manifest, trial, trial_dir = args
    try:
        return trial, run_trial(cfg, manifest, trial, trial_dir), None
    except Exception:
        return trial, None, traceback.format_exc()


def trial_dir(out_dir, trial):
    return os.path.join(out_dir, f"trial_{trial:04d}")


def run_campaign(campaign, cfg):
    """All trials plus aggregation; returns a summary dict."""
    os.makedirs(campaign.out_dir, exist_ok=True)
    manifest = campaign.to_manifest()
    with open(os.path.join(campaign.out_dir, "campaign.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    with open(os.path.join(campaign.out_dir, "config.yaml"), "w") as fh:
        fh.write(dump_config(cfg))
    jobs = [(cfg, manifest, t, trial_dir(campaign.out_dir, t))
            for t in range(campaign.trials)]
    if campaign.workers > 1:
        with ProcessPoolExecutor(max_workers=campaign.workers) as pool:
            results = list(pool.map(_trial_wrapper, jobs))
    else:
        results = [_trial_wrapper(j) for j in jobs]
    failures = [(t, err) for t, _r, err in results if err is not None]
    if failures:
        with open(os.path.join(campaign.out_dir, "failures.csv"), "w",
                  newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["trial", "error"])
            for t, err in failures:
                out.writerow([t, err.strip().splitlines()[-1]])
    ok_trials = [t for t, _r, err in results if err is None]
    summary = aggregate_campaign(campaign.out_dir, ok_trials)
    summary["trials"] = campaign.trials
    summary["failed"] = len(failures)
    with open(os.path.join(campaign.out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return summary


def read_trace(path):
    """best_reward and reward columns of one trace CSV as float arrays."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames) != METRICS_COLUMNS:
            raise ValueError(f"{path}: unexpected trace columns {reader.fieldnames}")
        reward, best = [], []
        for row in reader:
            reward.append(float(row["reward"]))
            best.append(float(row["best_reward"]))
    return np.array(reward), np.array(best)


def aggregate_campaign(out_dir, trials):
    """Sorted finals and the mean/std best-so-far curve, from trace CSVs only."""
    curves = []
    for t in trials:
        _reward, best = read_trace(os.path.join(trial_dir(out_dir, t), "metrics.csv"))
        curves.append(best)
    if not curves:
        raise ValueError("campaign produced no successful trials")
    lengths = {c.size for c in curves}
    n_rows = min(lengths)
    stack = np.stack([c[:n_rows] for c in curves])
    finals = np.sort(stack[:, -1])
    with open(os.path.join(out_dir, "sorted_final.csv"), "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["rank", "final_best"])
        for i, v in enumerate(finals):
            out.writerow([i, f"{v:.10g}"])
    with open(os.path.join(out_dir, "curve.csv"), "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["epoch", "mean_best", "std_best"])
        for e in range(n_rows):
            out.writerow([e, f"{stack[:, e].mean():.10g}", f"{stack[:, e].std():.10g}"])
    return {"finals": [float(v) for v in finals],
            "final_mean": float(stack[:, -1].mean()),
            "final_std": float(stack[:, -1].std()),
            "final_median": float(np.median(stack[:, -1])),
            "rows": int(n_rows)}


def _best_at(stack, k):
    if k < 1 or k > stack.shape[1]:
        return None
    return float(stack[:, k - 1].mean())


def compare(campaign_dirs, ks=(10, 25, 50), with_oracle_row=True):
    """Summary table across campaigns that searched the same task.

    Returns (header, rows); every row is one algorithm. When the first
    campaign's config is loadable the oracle's global best is appended as a
    reference row, the analogue of a benchmark's known ceiling.
    """
    manifests = []
    for d in campaign_dirs:
        with open(os.path.join(d, "campaign.json")) as fh:
            manifests.append(json.load(fh))
    tasks = {m["task"] for m in manifests}
    if len(tasks) != 1:
        raise ValueError(f"campaigns target different tasks: {sorted(tasks)}")
    task = tasks.pop()
    header = ["algorithm", "mode", "trials", "final_mean", "final_std",
              "final_median"] + [f"best@{k}" for k in ks]
    rows = []
    for d, m in zip(campaign_dirs, manifests):
        trials = [t for t in range(m["trials"])
                  if os.path.exists(os.path.join(trial_dir(d, t), "metrics.csv"))]
        curves = [read_trace(os.path.join(trial_dir(d, t), "metrics.csv"))[1]
                  for t in trials]
        n_rows = min(c.size for c in curves)
        stack = np.stack([c[:n_rows] for c in curves])
        row = [m["algorithm"], m["mode"], len(trials),
               float(stack[:, -1].mean()), float(stack[:, -1].std()),
               float(np.median(stack[:, -1]))]
        row += [_best_at(stack, k) for k in ks]
        rows.append(row)
    if with_oracle_row:
        cfg = load_config(os.path.join(campaign_dirs[0], "config.yaml"))
        oracle = _cached_oracle(cfg)
        spec = RewardSpec(fidelity=cfg["reward"]["fidelity"],
                          t_target=cfg["reward"]["t_target"], w=cfg["reward"]["w"])
        ceiling = oracle.global_best(task, spec)
        rows.append(["oracle-max", "", "", ceiling, 0.0, ceiling]
                    + [None for _ in ks])
    return header, rows


def render_table(header, rows):
    """CSV text and aligned text for the same table."""
    def fmt(v):
        if v is None or v == "":
            return ""
        if isinstance(v, float):
            return f"{v:.5f}"
        return str(v)

    cells = [header] + [[fmt(v) for v in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    aligned = "\n".join(
        "  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells)
    csv_text = "\n".join(",".join(r) for r in cells)
    return csv_text, aligned
