"""Context-conditioned meta-RL engine for transferrable architecture search.

A probabilistic task encoder, a PPO-trained sequential controller, and a
replay-trained performance predictor are meta-trained across cheap reward
oracles (tabular benchmark lookups or synthetic landscapes) and then adapted
to new tasks.
"""
from .config import build_engine, build_oracle, default_config, load_config
from .controller import PpoConfig, PpoController, gae_advantages
from .encoder import ContextEncoder, normalize_rewards
from .evaluator import Evaluator, PerConfig, ReplayBuffer, huber_loss
from .oracles import (RewardSpec, RewardValue, SyntheticFamily,
                      TabularBenchmark, multiobjective_reward, query_reward,
                      read_portable, resolve_reward, sample_meta_task,
                      write_portable)
from .search import RunConfig, SearchEngine, SearchHistory
from .spaces import (CellSchema, MacroSchema, arch_key, arch_onehot,
                     cell_from_index, cell_index, random_actions,
                     schema_from_config, valid_action_mask)

__version__ = "0.1.0"

__all__ = [
    "CellSchema", "ContextEncoder", "Evaluator", "MacroSchema", "PerConfig",
    "PpoConfig", "PpoController", "ReplayBuffer", "RewardSpec", "RewardValue",
    "RunConfig", "SearchEngine", "SearchHistory", "SyntheticFamily",
    "TabularBenchmark", "arch_key", "arch_onehot", "build_engine",
    "build_oracle", "cell_from_index", "cell_index", "default_config",
    "gae_advantages", "huber_loss", "load_config", "multiobjective_reward",
    "normalize_rewards", "query_reward", "random_actions", "read_portable",
    "resolve_reward", "sample_meta_task", "schema_from_config",
    "valid_action_mask", "write_portable",
]
