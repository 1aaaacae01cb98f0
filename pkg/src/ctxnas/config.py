"""Defaults, YAML loading, and engine assembly.

Every tuning knob of the engine is a config key with its stock value here;
a YAML file only needs to state what it changes. Controller entropy and
learning rate default to phase-dependent values (exploration is cheap
during meta-training, costlier spaces want gentler adaptation), so their
keys accept null to mean "pick by phase".
"""
import copy
import os

import yaml

from .controller import PpoConfig
from .evaluator import PerConfig
from .oracles import RewardSpec, oracle_from_config
from .search import RunConfig, SearchEngine

DATA_DIR_ENV = "CTXNAS_DATA_DIR"

_DEFAULTS = {
    "schema": {"kind": "cell"},
    "oracle": {"kind": "synthetic", "family_seed": 0, "deviation": 0.15,
               "difficulties": [10, 20, 30], "latency_base": 5.0,
               "latency_scale": 2.0},
    "reward": {"fidelity": None, "t_target": None, "w": -0.05},
    "search": {"n_meta": 25, "n_search_meta": 20, "n_search_adapt": 50,
               "candidates": 25, "contexts": None, "seed_networks": 1,
               "mode": "full"},
    "encoder": {"latent_dim": 10, "hidden": [64, 64], "lr": 0.01,
                "kl_weight": 0.1},
    "controller": {"clip": 0.2, "gamma": 0.99, "lam": 0.95, "value_coeff": 1.0,
                   "entropy_coeff": None, "lr": None, "memory_size": 200,
                   "passes": 4, "reward_placement": "per-step",
                   "hidden": [64, 64]},
    "evaluator": {"alpha": 0.5, "beta": 0.575, "beta_step": 0.01,
                  "fraction": 0.8, "capacity": 512, "lr": 1e-4,
                  "eps_meta": 1.0, "eps_adapt": 0.5, "eps_decay": 0.025,
                  "eps_every": 20, "hidden": [64, 64]},
}

ENTROPY_BY_PHASE = {("meta", "cell"): 0.01, ("meta", "macro"): 0.01,
                    ("adapt", "cell"): 0.03, ("adapt", "macro"): 0.05}
LR_BY_PHASE = {("meta", "cell"): 1e-3, ("meta", "macro"): 1e-3,
               ("adapt", "cell"): 1e-3, ("adapt", "macro"): 1e-4}


def default_config():
    return copy.deepcopy(_DEFAULTS)


def _merge(base, override):
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise KeyError(f"unknown config key {key!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise TypeError(f"config key {key!r} must be a mapping")
            out[key] = _merge(base[key], value)
        else:
            out[key] = value
    return out


def load_config(path=None):
    """Defaults deep-merged with a YAML file; unknown keys are rejected."""
    cfg = default_config()
    if path is not None:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise TypeError(f"{path}: top level must be a mapping")
        cfg = _merge(cfg, data)
    return cfg


def dump_config(cfg):
    return yaml.safe_dump(cfg, sort_keys=True, default_flow_style=False)


def data_dir():
    return os.environ.get(DATA_DIR_ENV)


def build_oracle(cfg):
    spec = dict(cfg["oracle"])
    if spec.get("kind") == "synthetic":
        spec["schema"] = cfg["schema"]
    return oracle_from_config(spec, data_dir=data_dir())


def resolve_controller(cfg, phase, schema_kind):
    """Entropy coefficient and learning rate, phase defaults filled in."""
    if phase not in ("meta", "adapt"):
        raise ValueError(f"phase must be meta or adapt, got {phase!r}")
    kind = "macro" if schema_kind == "macro" else "cell"
    c = cfg["controller"]
    entropy = c["entropy_coeff"]
    if entropy is None:
        entropy = ENTROPY_BY_PHASE[(phase, kind)]
    lr = c["lr"]
    if lr is None:
        lr = LR_BY_PHASE[(phase, kind)]
    return float(entropy), float(lr)


def build_engine(cfg, seed, phase="meta", oracle=None, mode=None):
    """Assemble a SearchEngine from a config dict.

    `mode` overrides the configured ablation mode; `oracle` sidesteps a
    rebuild when the caller already holds one (tabular files load once).
    """
    if oracle is None:
        oracle = build_oracle(cfg)
    schema = oracle.schema
    entropy_coeff, lr = resolve_controller(cfg, phase, cfg["schema"]["kind"])
    c = cfg["controller"]
    ppo = PpoConfig(clip=c["clip"], gamma=c["gamma"], lam=c["lam"],
                    value_coeff=c["value_coeff"], entropy_coeff=entropy_coeff,
                    lr=lr, memory_size=c["memory_size"], passes=c["passes"],
                    reward_placement=c["reward_placement"])
    e = cfg["evaluator"]
    per = PerConfig(alpha=e["alpha"], beta=e["beta"], beta_step=e["beta_step"],
                    fraction=e["fraction"], capacity=e["capacity"], lr=e["lr"],
                    eps_meta=e["eps_meta"], eps_adapt=e["eps_adapt"],
                    eps_decay=e["eps_decay"], eps_every=e["eps_every"])
    s = cfg["search"]
    run = RunConfig(n_meta=s["n_meta"], n_search_meta=s["n_search_meta"],
                    n_search_adapt=s["n_search_adapt"], candidates=s["candidates"],
                    contexts=s["contexts"], seed_networks=s["seed_networks"],
                    mode=mode if mode is not None else s["mode"])
    enc = cfg["encoder"]
    spec = RewardSpec(fidelity=cfg["reward"]["fidelity"],
                      t_target=cfg["reward"]["t_target"], w=cfg["reward"]["w"])
    return SearchEngine(
        schema, oracle, spec, run_cfg=run, ppo_cfg=ppo, per_cfg=per,
        latent_dim=enc["latent_dim"], encoder_hidden=tuple(enc["hidden"]),
        encoder_lr=enc["lr"], kl_weight=enc["kl_weight"],
        controller_hidden=tuple(c["hidden"]), evaluator_hidden=tuple(e["hidden"]),
        seed=seed)
