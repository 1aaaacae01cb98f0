"""Sample-based comparison searchers sharing the oracle and trace format.

Each baseline spends exactly `budget` oracle evaluations and returns one
trace row per evaluation, so campaign aggregation treats them and the main
engine identically.
"""
import csv

import numpy as np

from .numkit import categorical_sample, masked_softmax
from .oracles import resolve_reward
from .spaces import arch_key, random_actions

TRACE_COLUMNS = ("task", "epoch", "arch_id", "reward", "best_reward",
                 "loss_c", "loss_e", "kl", "epsilon")


def _evaluate(oracle, actions, task, spec):
    return resolve_reward(oracle.query(actions, task, spec), spec)


def _trace_row(task, epoch, actions, reward, best_reward):
    return {"task": task, "epoch": epoch, "arch": actions,
            "reward": reward, "best_reward": best_reward}


def write_trace(path, schema, rows):
    """Trace CSV in the orchestrator's column layout; loss fields are zero."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(TRACE_COLUMNS)
        for r in rows:
            out.writerow([
                r["task"], r["epoch"], arch_key(schema, r["arch"]),
                f"{r['reward']:.10g}", f"{r['best_reward']:.10g}",
                f"{r.get('loss_c', 0.0):.10g}", f"{r.get('loss_e', 0.0):.10g}",
                f"{r.get('kl', 0.0):.10g}", f"{r.get('epsilon', 0.0):.10g}",
            ])


def run_random(schema, oracle, task, spec, budget, rng):
    """Uniform valid architectures, independently drawn."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rows = []
    best = -np.inf
    for epoch in range(budget):
        actions = random_actions(schema, rng)
        reward = _evaluate(oracle, actions, task, spec)
        best = max(best, reward)
        rows.append(_trace_row(task, epoch, actions, reward, best))
    return rows


def mutate(schema, actions, rng):
    """Resample one uniformly chosen slot to a different valid value.

    On constrained spaces the change can invalidate later slots; those keep
    their old value when still allowed and are redrawn uniformly otherwise.
    A slot whose prefix forces a single option is left as-is.
    """
    actions = tuple(actions)
    slot = int(rng.integers(len(actions)))
    prefix = list(actions[:slot])
    mask = schema.slot_mask(tuple(prefix))
    alternatives = [i for i in range(mask.size) if mask[i] and i != actions[slot]]
    if alternatives:
        prefix.append(alternatives[int(rng.integers(len(alternatives)))])
    else:
        prefix.append(actions[slot])
    for l in range(slot + 1, len(actions)):
        mask = schema.slot_mask(tuple(prefix))
        if mask[actions[l]]:
            prefix.append(actions[l])
        else:
            allowed = np.flatnonzero(mask)
            prefix.append(int(allowed[int(rng.integers(allowed.size))]))
    return tuple(prefix)


def run_rea(schema, oracle, task, spec, budget, rng, population=10, tournament=3):
    """Aging evolution: tournament parent selection, one-slot mutation, FIFO death."""
    population = int(population)
    tournament = int(tournament)
    if population > budget:
        raise ValueError(f"population {population} exceeds budget {budget}")
    if not 1 <= tournament <= population:
        raise ValueError("tournament size must lie in [1, population]")
    rows = []
    pop = []
    best = -np.inf
    for epoch in range(budget):
        if epoch < population:
            actions = random_actions(schema, rng)
        else:
            contenders = rng.choice(len(pop), size=tournament, replace=False)
            parent = max(contenders, key=lambda i: pop[i][1])
            actions = mutate(schema, pop[parent][0], rng)
        reward = _evaluate(oracle, actions, task, spec)
        pop.append((actions, reward))
        if len(pop) > population:
            pop.pop(0)  # aging: the oldest dies regardless of fitness
        best = max(best, reward)
        rows.append(_trace_row(task, epoch, actions, reward, best))
    return rows


def run_reinforce(schema, oracle, task, spec, budget, rng, lr=0.01,
                  baseline_decay=0.9):
    """Score-function gradient on independent per-slot logits, EMA baseline."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    logits = [np.zeros(len(slot.options)) for slot in schema.slots]
    baseline = None
    rows = []
    best = -np.inf
    for epoch in range(budget):
        prefix = []
        probs_seq = []
        for l, slot_logits in enumerate(logits):
            mask = schema.slot_mask(tuple(prefix))
            probs = masked_softmax(slot_logits, mask)
            probs_seq.append(probs)
            prefix.append(categorical_sample(rng, probs))
        actions = tuple(prefix)
        reward = _evaluate(oracle, actions, task, spec)
        if baseline is None:
            baseline = reward
        advantage = reward - baseline
        baseline = baseline_decay * baseline + (1.0 - baseline_decay) * reward
        for l, (probs, a) in enumerate(zip(probs_seq, actions)):
            grad = -probs
            grad[a] += 1.0
            logits[l] += lr * advantage * grad
        best = max(best, reward)
        rows.append(_trace_row(task, epoch, actions, reward, best))
    return rows


BASELINES = {"random": run_random, "rea": run_rea, "reinforce": run_reinforce}


def run_baseline(name, schema, oracle, task, spec, budget, rng, **kwargs):
    if name not in BASELINES:
        raise ValueError(f"unknown baseline {name!r}; have {sorted(BASELINES)}")
    return BASELINES[name](schema, oracle, task, spec, budget, rng, **kwargs)
