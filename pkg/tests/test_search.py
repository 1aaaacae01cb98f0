"""Search-loop checks: history bookkeeping, ablation latents, oracle-call
budgeting, failure atomicity, determinism, checkpoint round trips, and the
composite gradient that reaches the encoder."""
import copy

import numpy as np
import pytest

from ctxnas.controller import PpoConfig
from ctxnas.encoder import normalize_rewards
from ctxnas.evaluator import PerConfig, huber_grad
from ctxnas.oracles import OracleLookupError, RewardSpec, SyntheticFamily
from ctxnas.search import (ABLATION_MODES, METRICS_COLUMNS, RunConfig,
                           SearchEngine, SearchHistory)
from ctxnas.spaces import CellSchema, MacroSchema, arch_onehot
from oracle_helpers import fd_worst_rel_error


class CountingOracle:
    """Delegating wrapper that counts and records paid evaluations."""

    def __init__(self, inner, fail_on=None):
        self.inner = inner
        self.calls = 0
        self.log = []
        self.fail_on = fail_on

    def query(self, actions, task, spec):
        self.calls += 1
        if self.fail_on is not None and self.calls == self.fail_on:
            raise OracleLookupError("injected oracle failure")
        value = self.inner.query(actions, task, spec)
        self.log.append((tuple(actions), task, value.performance))
        return value

    def sample_task(self, rng):
        return self.inner.sample_task(rng)


def make_engine(seed=0, mode="full", schema=None, oracle=None, seed_networks=1):
    schema = schema if schema is not None else CellSchema()
    oracle = oracle if oracle is not None else SyntheticFamily(schema, family_seed=1)
    run_cfg = RunConfig(n_meta=2, n_search_meta=4, n_search_adapt=6,
                        candidates=5, seed_networks=seed_networks, mode=mode)
    return SearchEngine(
        schema, oracle, RewardSpec(), run_cfg=run_cfg,
        ppo_cfg=PpoConfig(), per_cfg=PerConfig(), latent_dim=3,
        encoder_hidden=(8, 8), controller_hidden=(8, 8), evaluator_hidden=(8, 8),
        seed=seed)


def target_task(engine):
    return engine.oracle.task_id(100, 20) if hasattr(engine.oracle, "task_id") \
        else engine.oracle.inner.task_id(100, 20)


def engine_params(engine):
    return [p.copy() for net in (engine.encoder.mlp, engine.controller.net,
                                 engine.evaluator.net)
            for p in net.param_list()]


# ---------------------------------------------------------------------------
# history

def test_history_tracks_best():
    h = SearchHistory()
    h.add((0,) * 6, np.zeros(3), 0.4)
    h.add((1,) * 6, np.zeros(3), 0.9)
    h.add((2,) * 6, np.zeros(3), 0.6)
    assert len(h) == 3
    np.testing.assert_array_equal(h.rewards(), [0.4, 0.9, 0.6])
    actions, _z, reward = h.best_model()
    assert actions == (1,) * 6 and reward == 0.9
    with pytest.raises(ValueError):
        SearchHistory().best_model()


def test_history_contexts_full_and_subset():
    schema = CellSchema()
    h = SearchHistory()
    archs = [(0,) * 6, (1,) * 6, (2,) * 6]
    for a, r in zip(archs, [1.0, 2.0, 3.0]):
        h.add(a, np.zeros(3), r)
    rows = h.sample_contexts(schema)
    assert rows.shape == (3, schema.onehot_width + 1)
    np.testing.assert_allclose(rows[:, -1], normalize_rewards([1.0, 2.0, 3.0]))
    for row, a in zip(rows, archs):
        np.testing.assert_array_equal(row[:-1], arch_onehot(schema, a))
    sub = h.sample_contexts(schema, count=2, rng=np.random.default_rng(0))
    assert sub.shape == (2, schema.onehot_width + 1)
    # a 2-row batch z-scores within itself
    np.testing.assert_allclose(sorted(sub[:, -1]), [-1.0, 1.0], atol=1e-12)
    with pytest.raises(ValueError):
        SearchHistory().sample_contexts(schema)


def test_run_config_validation():
    with pytest.raises(ValueError, match="mode"):
        RunConfig(mode="turbo")
    with pytest.raises(ValueError):
        RunConfig(candidates=0)
    assert RunConfig().mode in ABLATION_MODES


# ---------------------------------------------------------------------------
# epoch mechanics

def test_search_epoch_pays_one_evaluation_and_extends_history():
    oracle = CountingOracle(SyntheticFamily(CellSchema(), family_seed=1))
    engine = make_engine(seed=1, oracle=oracle)
    task = target_task(engine)
    history = SearchHistory()
    engine.seed_history(task, history)
    assert oracle.calls == 1
    report = engine.search_epoch(task, history, engine.loop_rng)
    assert oracle.calls == 2
    assert len(history) == 2
    assert history.entries[-1][0] == report["arch"]
    assert engine._tick == 1
    assert report["loss"] == pytest.approx(
        report["loss_c"] + report["loss_e"]
        + engine.encoder.kl_weight * report["kl"], abs=1e-12)


def test_zero_latent_mode_freezes_encoder():
    engine = make_engine(seed=2, mode="zero-z")
    task = target_task(engine)
    history = SearchHistory()
    engine.seed_history(task, history)
    before = [p.copy() for p in engine.encoder.mlp.param_list()]
    for _ in range(3):
        report = engine.search_epoch(task, history, engine.loop_rng)
        np.testing.assert_array_equal(report["z"], np.zeros(3))
        assert report["kl"] == 0.0
    for b, p in zip(before, engine.encoder.mlp.param_list()):
        np.testing.assert_array_equal(b, p)


def test_random_latent_mode_draws_from_prior():
    engine = make_engine(seed=3, mode="random-z")
    task = target_task(engine)
    history = SearchHistory()
    engine.seed_history(task, history)
    zs = [engine.search_epoch(task, history, engine.loop_rng)["z"]
          for _ in range(200)]
    zs = np.stack(zs)
    assert not np.allclose(zs[0], zs[1])
    assert abs(zs.mean()) < 0.15
    assert abs(zs.std() - 1.0) < 0.15


def test_no_evaluator_mode_skips_predictor():
    engine = make_engine(seed=4, mode="no-evaluator")
    task = target_task(engine)
    history = SearchHistory()
    engine.seed_history(task, history)
    before = [p.copy() for p in engine.evaluator.net.param_list()]
    report = engine.search_epoch(task, history, engine.loop_rng)
    assert report["loss_e"] == 0.0
    assert len(engine.evaluator.buffer) == 0
    for b, p in zip(before, engine.evaluator.net.param_list()):
        np.testing.assert_array_equal(b, p)


def test_gt_evaluator_mode_picks_true_best_candidate(monkeypatch):
    engine = make_engine(seed=5, mode="gt-evaluator")
    task = target_task(engine)
    history = SearchHistory()
    engine.seed_history(task, history)
    seen = {}
    original = engine.controller.sample_networks

    def spy(z, count, rng):
        out = original(z, count, rng)
        seen["candidates"] = [a for a, _s in out]
        return out

    monkeypatch.setattr(engine.controller, "sample_networks", spy)
    report = engine.search_epoch(task, history, engine.loop_rng)
    fam = engine.oracle
    true_rewards = [fam.reward(a, task) for a in seen["candidates"]]
    assert report["reward"] == max(true_rewards)


def test_oracle_failure_leaves_state_untouched():
    oracle = CountingOracle(SyntheticFamily(CellSchema(), family_seed=1),
                            fail_on=3)
    engine = make_engine(seed=6, oracle=oracle)
    task = target_task(engine)
    history = SearchHistory()
    engine.seed_history(task, history)
    engine.search_epoch(task, history, engine.loop_rng)
    params = engine_params(engine)
    tick = engine._tick
    eps_steps = engine.evaluator._select_steps
    memory_len = len(engine.controller.memory)
    with pytest.raises(OracleLookupError):
        engine.search_epoch(task, history, engine.loop_rng)
    assert engine._tick == tick
    assert engine.evaluator._select_steps == eps_steps
    assert len(engine.controller.memory) == memory_len
    assert len(history) == 2
    for b, p in zip(params, engine_params(engine)):
        np.testing.assert_array_equal(b, p)
    # the loop keeps working afterwards
    engine.search_epoch(task, history, engine.loop_rng)
    assert len(history) == 3


# ---------------------------------------------------------------------------
# phases and budgets

def test_meta_train_budget_and_parameter_motion():
    oracle = CountingOracle(SyntheticFamily(CellSchema(), family_seed=1))
    engine = make_engine(seed=7, oracle=oracle)
    engine.run_cfg.n_meta = 1
    engine.run_cfg.n_search_meta = 1
    before = engine_params(engine)
    engine.meta_train()
    assert oracle.calls == 2  # one seed network, one searched network
    after = engine_params(engine)
    assert any(not np.array_equal(b, a) for b, a in zip(before, after))


def test_meta_train_resets_exploration_but_keeps_buffer():
    engine = make_engine(seed=8)
    engine.run_cfg.n_meta = 2
    engine.run_cfg.n_search_meta = 25
    engine.meta_train()
    # one ladder step after 20 selections within the final meta-epoch
    assert engine.evaluator.epsilon() == pytest.approx(0.975)
    assert len(engine.evaluator.buffer) == 50


def test_adapt_clears_buffer_and_uses_adapt_epsilon():
    engine = make_engine(seed=9)
    engine.meta_train()
    assert len(engine.evaluator.buffer) > 0
    _best, _reward, trace = engine.adapt(target_task(engine))
    assert len(engine.evaluator.buffer) == engine.run_cfg.n_search_adapt
    assert engine.evaluator._eps_init == engine.evaluator.cfg.eps_adapt
    assert trace[0]["epoch"] == engine.run_cfg.seed_networks
    assert len(trace) == engine.run_cfg.n_search_adapt


def test_adapt_without_search_returns_seed_best():
    oracle = CountingOracle(SyntheticFamily(CellSchema(), family_seed=1))
    engine = make_engine(seed=10, oracle=oracle, seed_networks=3)
    task = target_task(engine)
    best_actions, best_reward, trace = engine.adapt(task, n_search=0)
    assert oracle.calls == 3
    assert trace == []
    assert best_reward == max(perf for _a, _t, perf in oracle.log)
    assert best_reward == oracle.inner.reward(best_actions, task)


def test_best_so_far_is_nondecreasing():
    engine = make_engine(seed=11)
    _best, best_reward, trace = engine.adapt(target_task(engine), n_search=12)
    curve = [row["best_reward"] for row in trace]
    assert all(b >= a for a, b in zip(curve, curve[1:]))
    assert curve[-1] == best_reward
    assert all(row["best_reward"] >= row["reward"] for row in trace)


def test_wall_clock_cutoff_stops_before_first_epoch():
    oracle = CountingOracle(SyntheticFamily(CellSchema(), family_seed=1))
    engine = make_engine(seed=12, oracle=oracle)
    engine.adapt(target_task(engine), n_search=50, wall_clock_s=0.0)
    assert oracle.calls == engine.run_cfg.seed_networks


# ---------------------------------------------------------------------------
# run directories and determinism

def run_adapt_into(tmp_path, name, seed=13):
    engine = make_engine(seed=seed)
    run_dir = tmp_path / name
    engine.adapt(target_task(engine), run_dir=str(run_dir),
                 config_snapshot="x: 1\n")
    return run_dir


def test_run_dir_files_and_columns(tmp_path):
    run_dir = run_adapt_into(tmp_path, "run")
    lines = (run_dir / "metrics.csv").read_text().strip().splitlines()
    assert lines[0] == ",".join(METRICS_COLUMNS)
    assert len(lines) == 1 + 1 + 6  # header, one seed network, six epochs
    seed_row = lines[1].split(",")
    assert seed_row[5] == seed_row[6] == seed_row[7] == "0"
    latents = (run_dir / "latents.csv").read_text().strip().splitlines()
    assert latents[0].split(",")[:3] == ["task", "epoch", "mean_0"]
    assert len(latents) == 1 + 6  # seeds carry no latent row
    assert (run_dir / "config.yaml").read_text() == "x: 1\n"
    assert (run_dir / "checkpoint" / "manifest.json").exists()


def test_identical_seeds_give_byte_identical_outputs(tmp_path):
    a = run_adapt_into(tmp_path, "a")
    b = run_adapt_into(tmp_path, "b")
    for name in ("metrics.csv", "latents.csv", "checkpoint/manifest.json",
                 "checkpoint/encoder.mlp", "checkpoint/controller.mlp",
                 "checkpoint/evaluator.mlp"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_different_seeds_differ(tmp_path):
    a = run_adapt_into(tmp_path, "a", seed=14)
    b = run_adapt_into(tmp_path, "b", seed=15)
    assert (a / "metrics.csv").read_bytes() != (b / "metrics.csv").read_bytes()


# ---------------------------------------------------------------------------
# checkpoints

def test_checkpoint_round_trip_restores_weights(tmp_path):
    engine = make_engine(seed=16)
    engine.meta_train()
    ckpt = tmp_path / "ckpt"
    engine.save_checkpoint(str(ckpt))
    saved = engine_params(engine)
    engine.adapt(target_task(engine))  # moves the weights
    assert any(not np.array_equal(s, p)
               for s, p in zip(saved, engine_params(engine)))
    engine.load_checkpoint(str(ckpt))
    for s, p in zip(saved, engine_params(engine)):
        np.testing.assert_array_equal(s, p)


def test_checkpoint_is_immutable_under_adaptation(tmp_path):
    engine = make_engine(seed=17)
    ckpt = tmp_path / "ckpt"
    engine.save_checkpoint(str(ckpt))
    files = sorted(f for f in ckpt.iterdir())
    before = {f.name: f.read_bytes() for f in files}
    fresh = make_engine(seed=18)
    fresh.load_checkpoint(str(ckpt))
    fresh.adapt(target_task(fresh))
    for f in files:
        assert f.read_bytes() == before[f.name]


def test_adapting_one_task_does_not_leak_into_the_next(tmp_path):
    base = make_engine(seed=19)
    base.meta_train()
    ckpt = tmp_path / "ckpt"
    base.save_checkpoint(str(ckpt))
    task_a = base.oracle.task_id(7, 10)
    task_b = base.oracle.task_id(8, 30)

    def fresh_adapt(task):
        engine = make_engine(seed=20)
        engine.load_checkpoint(str(ckpt))
        return engine.adapt(task)

    fresh_adapt(task_a)  # unrelated earlier adaptation
    best1, reward1, trace1 = fresh_adapt(task_b)
    best2, reward2, trace2 = fresh_adapt(task_b)
    assert best1 == best2 and reward1 == reward2
    assert trace1 == trace2


def test_checkpoint_guards(tmp_path):
    engine = make_engine(seed=21)
    ckpt = tmp_path / "ckpt"
    engine.save_checkpoint(str(ckpt))
    other = make_engine(seed=21, schema=MacroSchema(),
                        oracle=SyntheticFamily(MacroSchema(), family_seed=1))
    with pytest.raises(ValueError, match="different search space"):
        other.load_checkpoint(str(ckpt))
    import json
    manifest = json.loads((ckpt / "manifest.json").read_text())
    manifest["version"] = 99
    (ckpt / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(ValueError, match="version"):
        engine.load_checkpoint(str(ckpt))


# ---------------------------------------------------------------------------
# composite gradient

def test_composite_loss_gradient_reaches_encoder_weights():
    engine = make_engine(seed=22)
    task = target_task(engine)
    history = SearchHistory()
    engine.seed_history(task, history)
    for _ in range(3):
        engine.search_epoch(task, history, engine.loop_rng)

    # assemble one frozen post-collection batch by hand
    rng = np.random.default_rng(23)
    tag = engine._tick
    contexts = history.sample_contexts(engine.schema)
    eps = rng.standard_normal(3)
    enc0 = engine.encoder.encode_with_eps(contexts, eps)
    (actions, steps), = engine.controller.sample_networks(enc0.z, 1, rng)
    reward = engine.oracle.reward(actions, task)
    history.add(actions, enc0.z, reward)
    r_norm = float(normalize_rewards(history.rewards())[-1])
    engine.controller.record_trajectory(steps, r_norm, tag)
    all_steps = list(engine.controller.memory)
    adv = np.array([s.advantage for s in all_steps])
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    engine.evaluator.add_observation(actions, enc0.z, r_norm, tag)
    indices, weights = engine.evaluator.buffer.sample(
        1.0, engine.evaluator.cfg.alpha, engine.evaluator.beta, rng)
    entries = [engine.evaluator.buffer.entries[int(i)] for i in indices]
    targets = np.array([e.reward for e in entries])
    width = engine.schema.onehot_width

    def composite(z):
        for s in all_steps:
            if s.tag == tag:
                s.x[:3] = z
        c_loss = engine.controller._loss_and_grads(all_steps, adv)[0]["loss"]
        xs = np.stack([np.concatenate(
            [e.onehot, z if e.tag == tag else e.z]) for e in entries])
        d = targets - engine.evaluator.net.forward(xs)[:, 0]
        losses = np.where(np.abs(d) < 1.0, 0.5 * d * d, np.abs(d) - 0.5)
        return c_loss + float(np.mean(weights * losses))

    # analytic: latent grads from both heads, pushed through the encoder
    _, _, c_input_grads = engine.controller._loss_and_grads(all_steps, adv)
    g_z = np.zeros(3)
    for i, s in enumerate(all_steps):
        if s.tag == tag:
            g_z += c_input_grads[i, :3]
    ev_probe = copy.deepcopy(engine.evaluator)
    g_z += ev_probe._update_on_batch(entries, weights, None, tag)["g_z"]
    analytic = engine.encoder.parameter_gradients(enc0, g_z, include_kl=True)

    def loss():
        enc = engine.encoder.encode_with_eps(contexts, eps)
        return composite(enc.z) + engine.encoder.kl_weight * enc.kl

    worst = fd_worst_rel_error(loss, engine.encoder.mlp.param_list(), analytic,
                               rng=np.random.default_rng(24))
    assert worst < 1e-3
