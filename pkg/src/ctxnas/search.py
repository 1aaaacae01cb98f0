"""Search orchestration: meta-training across tasks and per-task adaptation.

One search epoch is the unit of work: encode the task history into a latent,
sample candidate architectures from the policy, let the evaluator pick one,
pay for a single oracle evaluation, then update controller, evaluator, and
encoder from what was learned. Meta-training loops that epoch over a stream
of cheap tasks with shared parameters; adaptation replays it on one target
task starting from a checkpoint.

Ablation modes swap out single ingredients: `zero-z` pins the latent at 0,
`random-z` draws it from the prior, `no-evaluator` picks candidates
uniformly, `gt-evaluator` lets the oracle itself pick (a cheating upper
bound used for diagnostics), and `sfs` runs the full loop from untrained
components.
"""
import csv
import json
import os
import time

import numpy as np

from .controller import PpoConfig, PpoController
from .encoder import ContextEncoder, normalize_rewards
from .evaluator import Evaluator, PerConfig
from .numkit import load_mlp, save_mlp
from .oracles import resolve_reward, sample_meta_task
from .spaces import arch_key, arch_onehot, random_actions, schema_from_config

ABLATION_MODES = ("full", "zero-z", "random-z", "no-evaluator", "gt-evaluator", "sfs")

METRICS_COLUMNS = ("task", "epoch", "arch_id", "reward", "best_reward",
                   "loss_c", "loss_e", "kl", "epsilon")

CHECKPOINT_VERSION = 1


class SearchHistory:
    """Append-only (actions, z, reward) record for one task."""

    def __init__(self):
        self.entries = []
        self._best = -1

    def __len__(self):
        return len(self.entries)

    def add(self, actions, z, reward):
        self.entries.append((tuple(actions), np.asarray(z, dtype=np.float64),
                             float(reward)))
        if self._best < 0 or reward > self.entries[self._best][2]:
            self._best = len(self.entries) - 1

    def rewards(self):
        return np.array([e[2] for e in self.entries])

    def best_model(self):
        if self._best < 0:
            raise ValueError("history is empty")
        return self.entries[self._best]

    def sample_contexts(self, schema, count=None, rng=None):
        """Context matrix of (arch one-hot | reward z-scored within the batch).

        count=None uses the whole history; otherwise that many entries are
        drawn without replacement.
        """
        if not self.entries:
            raise ValueError("history is empty")
        picked = self.entries
        if count is not None and count < len(self.entries):
            idx = rng.choice(len(self.entries), size=count, replace=False)
            picked = [self.entries[i] for i in sorted(idx)]
        rewards = normalize_rewards([e[2] for e in picked])
        rows = np.empty((len(picked), schema.onehot_width + 1))
        for i, (actions, _z, _r) in enumerate(picked):
            rows[i, :-1] = arch_onehot(schema, actions)
            rows[i, -1] = rewards[i]
        return rows


class RunConfig:
    """Loop-level knobs; component hyperparameters ride in their own configs."""

    def __init__(self, n_meta=25, n_search_meta=20, n_search_adapt=50,
                 candidates=25, contexts=None, seed_networks=1, mode="full"):
        if mode not in ABLATION_MODES:
            raise ValueError(f"mode must be one of {ABLATION_MODES}, got {mode!r}")
        if min(n_meta, n_search_meta, n_search_adapt, candidates, seed_networks) < 1:
            raise ValueError("all loop counts must be >= 1")
        self.n_meta = int(n_meta)
        self.n_search_meta = int(n_search_meta)
        self.n_search_adapt = int(n_search_adapt)
        self.candidates = int(candidates)
        self.contexts = None if contexts is None else int(contexts)
        self.seed_networks = int(seed_networks)
        self.mode = mode

    def to_config(self):
        return dict(n_meta=self.n_meta, n_search_meta=self.n_search_meta,
                    n_search_adapt=self.n_search_adapt, candidates=self.candidates,
                    contexts=self.contexts, seed_networks=self.seed_networks,
                    mode=self.mode)


class SearchEngine:
    """Shared learned state plus the epoch loop that trains it."""

    def __init__(self, schema, oracle, spec, run_cfg=None, ppo_cfg=None,
                 per_cfg=None, latent_dim=10, encoder_hidden=(64, 64),
                 encoder_lr=0.01, kl_weight=0.1, controller_hidden=(64, 64),
                 evaluator_hidden=(64, 64), seed=0):
        self.schema = schema
        self.oracle = oracle
        self.spec = spec
        self.run_cfg = run_cfg if run_cfg is not None else RunConfig()
        self.latent_dim = int(latent_dim)
        root = seed if isinstance(seed, np.random.SeedSequence) \
            else np.random.SeedSequence(seed)
        enc_ss, ctrl_ss, eval_ss, task_ss, loop_ss, seednet_ss = root.spawn(6)
        self.encoder = ContextEncoder(
            schema.onehot_width + 1, latent_dim=latent_dim, hidden=encoder_hidden,
            lr=encoder_lr, kl_weight=kl_weight, rng=np.random.default_rng(enc_ss))
        self.controller = PpoController(
            schema, latent_dim, cfg=ppo_cfg, hidden=controller_hidden,
            rng=np.random.default_rng(ctrl_ss))
        self.evaluator = Evaluator(
            schema, latent_dim, cfg=per_cfg, hidden=evaluator_hidden,
            rng=np.random.default_rng(eval_ss))
        self.task_rng = np.random.default_rng(task_ss)
        self.loop_rng = np.random.default_rng(loop_ss)
        self.seednet_rng = np.random.default_rng(seednet_ss)
        self._tick = 0

    @property
    def mode(self):
        return self.run_cfg.mode

    # -- one epoch -----------------------------------------------------------

    def _draw_latent(self, history, rng):
        """Latent for this epoch plus the encoding record (None when ablated)."""
        if self.mode == "zero-z":
            return np.zeros(self.latent_dim), None
        if self.mode == "random-z":
            return rng.standard_normal(self.latent_dim), None
        contexts = history.sample_contexts(self.schema, self.run_cfg.contexts, rng)
        enc = self.encoder.encode_sample(contexts, rng)
        return enc.z, enc

    def _select(self, candidates, z, task, rng):
        if self.mode == "no-evaluator":
            return int(rng.integers(len(candidates)))
        if self.mode == "gt-evaluator":
            rewards = [resolve_reward(self.oracle.query(a, task, self.spec), self.spec)
                       for a, _steps in candidates]
            return int(np.argmax(rewards))
        return self.evaluator.choose_best([a for a, _steps in candidates], z, rng)

    def seed_history(self, task, history):
        records = []
        for _ in range(self.run_cfg.seed_networks):
            actions = random_actions(self.schema, self.seednet_rng)
            value = self.oracle.query(actions, task, self.spec)
            reward = resolve_reward(value, self.spec)
            history.add(actions, np.zeros(self.latent_dim), reward)
            records.append((actions, reward))
        return records

    def search_epoch(self, task, history, rng):
        """Run one epoch on `task`; returns a metrics report dict."""
        tag = self._tick
        self._tick += 1
        z, enc = self._draw_latent(history, rng)
        candidates = self.controller.sample_networks(z, self.run_cfg.candidates, rng)
        eps_steps = self.evaluator._select_steps
        try:
            chosen = self._select(candidates, z, task, rng)
            actions, steps = candidates[chosen]
            value = self.oracle.query(actions, task, self.spec)
        except Exception:
            # oracle failed: forget the aborted selection so learned state
            # is exactly what it was before the epoch
            self.evaluator._select_steps = eps_steps
            self._tick = tag
            raise
        reward = resolve_reward(value, self.spec)
        history.add(actions, z, reward)
        r_norm = float(normalize_rewards(history.rewards())[-1])

        use_evaluator = self.mode not in ("no-evaluator", "gt-evaluator")
        self.controller.record_trajectory(steps, r_norm, tag)
        c_report = self.controller.update(tag=tag)
        if use_evaluator:
            self.evaluator.add_observation(actions, z, r_norm, tag)
            e_report = self.evaluator.update(rng, tag=tag)
        else:
            e_report = {"loss": 0.0, "g_z": np.zeros(self.latent_dim), "batch": 0}
        kl = 0.0
        if enc is not None:
            kl = self.encoder.apply_gradient(enc, c_report["g_z"] + e_report["g_z"])
        combined = c_report["loss"] + e_report["loss"] + self.encoder.kl_weight * kl
        return {
            "task": task, "arch": actions, "reward": reward,
            "z_mean": enc.mean if enc is not None else np.zeros(self.latent_dim),
            "z": z, "loss_c": c_report["loss"], "loss_e": e_report["loss"],
            "kl": kl, "loss": combined, "epsilon": self.evaluator.epsilon(),
        }

    # -- phases ----------------------------------------------------------------

    def meta_train(self, run_dir=None, config_snapshot=None):
        """The meta loop: fresh task, fresh history and exploration, shared weights."""
        writer = RunDir(run_dir, self, config_snapshot) if run_dir else None
        evals = 0
        for _meta_epoch in range(self.run_cfg.n_meta):
            task = sample_meta_task(self.oracle, self.task_rng)
            history = SearchHistory()
            self.controller.clear_memory()
            self.evaluator.reset_epsilon("meta")
            evals = self._run_task(task, history, self.run_cfg.n_search_meta,
                                   writer, evals)
        if writer:
            writer.save_checkpoint()
            writer.close()
        return self

    def _run_task(self, task, history, n_search, writer, evals,
                  trace=None, wall_clock_s=None):
        """Seed then search one task, logging every oracle evaluation as a row."""
        best = -np.inf
        for actions, reward in self.seed_history(task, history):
            best = max(best, reward)
            if writer:
                writer.log_seed(task, actions, reward, best, evals)
            evals += 1
        started = time.monotonic()
        for _epoch in range(n_search):
            if wall_clock_s is not None and time.monotonic() - started > wall_clock_s:
                break
            report = self.search_epoch(task, history, self.loop_rng)
            best = max(best, report["reward"])
            if trace is not None:
                best_actions, _z, _best_reward = history.best_model()
                trace.append({"epoch": evals, "arch": report["arch"],
                              "reward": report["reward"], "best_reward": best,
                              "best_arch": best_actions})
            if writer:
                writer.log(report, best, evals)
            evals += 1
        return evals

    def adapt(self, task, run_dir=None, n_search=None, wall_clock_s=None,
              config_snapshot=None):
        """Search one target task; returns (best actions, best reward, trace)."""
        n_search = self.run_cfg.n_search_adapt if n_search is None else n_search
        writer = RunDir(run_dir, self, config_snapshot) if run_dir else None
        history = SearchHistory()
        self.controller.clear_memory()
        self.evaluator.buffer.clear()
        self.evaluator.reset_epsilon("adapt")
        trace = []
        self._run_task(task, history, n_search, writer, 0,
                       trace=trace, wall_clock_s=wall_clock_s)
        if writer:
            writer.save_checkpoint()
            writer.close()
        best_actions, _z, best_reward = history.best_model()
        return best_actions, best_reward, trace

    # -- persistence -----------------------------------------------------------

    def save_checkpoint(self, directory):
        os.makedirs(directory, exist_ok=True)
        manifest = {
            "version": CHECKPOINT_VERSION,
            "schema": self.schema.to_config(),
            "schema_fingerprint": self.schema.fingerprint(),
            "latent_dim": self.latent_dim,
            "tick": self._tick,
        }
        with open(os.path.join(directory, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
        save_mlp(os.path.join(directory, "encoder.mlp"), self.encoder.mlp)
        save_mlp(os.path.join(directory, "controller.mlp"), self.controller.net)
        save_mlp(os.path.join(directory, "evaluator.mlp"), self.evaluator.net)

    def load_checkpoint(self, directory):
        with open(os.path.join(directory, "manifest.json")) as fh:
            manifest = json.load(fh)
        if manifest["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {manifest['version']}")
        if manifest["schema_fingerprint"] != self.schema.fingerprint():
            raise ValueError("checkpoint was trained on a different search space")
        if manifest["latent_dim"] != self.latent_dim:
            raise ValueError("checkpoint latent width differs from configuration")
        for attr, name in ((self.encoder, "encoder"), (self.controller, "controller"),
                           (self.evaluator, "evaluator")):
            net = load_mlp(os.path.join(directory, f"{name}.mlp"))
            target = attr.mlp if name == "encoder" else attr.net
            target.set_param_list(net.param_list())
        return manifest


class RunDir:
    """Owns one run directory: config snapshot, metrics, latents, checkpoint."""

    def __init__(self, path, engine, config_snapshot=None):
        self.path = path
        self.engine = engine
        os.makedirs(path, exist_ok=True)
        if config_snapshot is not None:
            with open(os.path.join(path, "config.yaml"), "w") as fh:
                fh.write(config_snapshot)
        self._metrics = open(os.path.join(path, "metrics.csv"), "w", newline="")
        self._metrics_csv = csv.writer(self._metrics)
        self._metrics_csv.writerow(METRICS_COLUMNS)
        self._latents = open(os.path.join(path, "latents.csv"), "w", newline="")
        self._latents_csv = csv.writer(self._latents)
        d = engine.latent_dim
        self._latents_csv.writerow(
            ["task", "epoch"] + [f"mean_{i}" for i in range(d)] + [f"z_{i}" for i in range(d)])

    def log(self, report, best_reward, epoch):
        self._metrics_csv.writerow([
            report["task"], epoch, arch_key(self.engine.schema, report["arch"]),
            f"{report['reward']:.10g}", f"{best_reward:.10g}",
            f"{report['loss_c']:.10g}", f"{report['loss_e']:.10g}",
            f"{report['kl']:.10g}", f"{report['epsilon']:.10g}",
        ])
        self._latents_csv.writerow(
            [report["task"], epoch]
            + [f"{v:.10g}" for v in report["z_mean"]]
            + [f"{v:.10g}" for v in report["z"]])

    def log_seed(self, task, actions, reward, best_reward, epoch):
        """History seeds cost an oracle call each, so they appear in the trace."""
        self._metrics_csv.writerow([
            task, epoch, arch_key(self.engine.schema, actions),
            f"{reward:.10g}", f"{best_reward:.10g}", "0", "0", "0",
            f"{self.engine.evaluator.epsilon():.10g}",
        ])

    def save_checkpoint(self):
        self.engine.save_checkpoint(os.path.join(self.path, "checkpoint"))

    def close(self):
        self._metrics.close()
        self._latents.close()
