"""Performance predictor with prioritized replay.

A relu MLP maps (architecture one-hot, task latent) to a scalar score. The
predictor picks which sampled candidate gets the one oracle evaluation of
the epoch (epsilon-greedy over predicted scores, epsilon stepping down on a
fixed schedule) and regresses observed normalized rewards under a Huber
loss. Replay entries are revisited proportional to a power of their last
absolute prediction error, with importance weights correcting the sampling
bias; the correction exponent anneals toward full compensation.
"""
import struct
import warnings
from collections import deque

import numpy as np

from .numkit import AdamState, Mlp, adam_step, categorical_sample
from .spaces import arch_onehot

PRIORITY_FLOOR = 1e-6


def huber_loss(r, r_hat):
    """0.5 d^2 inside the unit band, |d| - 0.5 outside; d = r - r_hat."""
    d = abs(float(r) - float(r_hat))
    return 0.5 * d * d if d < 1.0 else d - 0.5


def huber_grad(d):
    """Derivative of the Huber penalty with respect to d; |value| <= 1."""
    return d if abs(d) < 1.0 else float(np.sign(d))


class PerConfig:
    def __init__(self, alpha=0.5, beta=0.575, beta_step=0.01, fraction=0.8,
                 capacity=512, lr=1e-4, eps_meta=1.0, eps_adapt=0.5,
                 eps_decay=0.025, eps_every=20):
        if not 0.0 <= alpha <= 1.0 or not 0.0 <= beta <= 1.0:
            raise ValueError("alpha and beta must lie in [0,1]")
        if not 0.0 < fraction <= 1.0:
            raise ValueError("batch fraction must lie in (0,1]")
        self.alpha = float(alpha)
        self.beta = float(beta)
        self.beta_step = float(beta_step)
        self.fraction = float(fraction)
        self.capacity = int(capacity)
        self.lr = float(lr)
        self.eps_meta = float(eps_meta)
        self.eps_adapt = float(eps_adapt)
        self.eps_decay = float(eps_decay)
        self.eps_every = int(eps_every)

    def to_config(self):
        return dict(alpha=self.alpha, beta=self.beta, beta_step=self.beta_step,
                    fraction=self.fraction, capacity=self.capacity, lr=self.lr,
                    eps_meta=self.eps_meta, eps_adapt=self.eps_adapt,
                    eps_decay=self.eps_decay, eps_every=self.eps_every)


class ReplayEntry:
    __slots__ = ("onehot", "z", "reward", "priority", "tag")

    def __init__(self, onehot, z, reward, priority, tag):
        self.onehot = onehot
        self.z = z
        self.reward = reward
        self.priority = priority
        self.tag = tag


class ReplayBuffer:
    """Bounded FIFO of scored observations with proportional prioritization."""

    def __init__(self, capacity):
        self.entries = deque(maxlen=int(capacity))

    def __len__(self):
        return len(self.entries)

    def add(self, onehot, z, reward, tag):
        priority = max((e.priority for e in self.entries), default=1.0)
        self.entries.append(ReplayEntry(
            np.asarray(onehot, dtype=np.float64),
            np.asarray(z, dtype=np.float64),
            float(reward), float(priority), int(tag)))

    def probabilities(self, alpha):
        p = np.array([e.priority for e in self.entries]) ** alpha
        return p / p.sum()

    def sample(self, fraction, alpha, beta, rng):
        """Indices and importance weights; draws without replacement.

        Each draw renormalizes over the remaining entries, so a single-draw
        batch follows p^alpha exactly. Weights use the full-buffer inclusion
        probabilities and are scaled so the largest weight in the batch is 1.
        """
        n = len(self.entries)
        if n == 0:
            raise ValueError("replay buffer is empty")
        k = min(n, max(1, int(round(fraction * n))))
        probs = self.probabilities(alpha)
        remaining = probs.copy()
        picked = []
        for _ in range(k):
            i = categorical_sample(rng, remaining)
            picked.append(i)
            remaining[i] = 0.0
        picked = np.array(picked)
        weights = (n * probs[picked]) ** (-beta)
        weights = weights / weights.max()
        return picked, weights

    def update_priorities(self, indices, td_errors):
        for i, d in zip(indices, td_errors):
            self.entries[int(i)].priority = abs(float(d)) + PRIORITY_FLOOR

    def clear(self):
        self.entries.clear()

    # snapshot for run resumption -----------------------------------------

    MAGIC = b"CTXRB1\x00\x00"

    def save(self, path, beta):
        with open(path, "wb") as fh:
            fh.write(self.MAGIC)
            fh.write(struct.pack("<IdI", self.entries.maxlen, beta, len(self.entries)))
            if self.entries:
                w = self.entries[0].onehot.size
                d = self.entries[0].z.size
            else:
                w = d = 0
            fh.write(struct.pack("<II", w, d))
            for e in self.entries:
                fh.write(e.onehot.astype("<f8").tobytes())
                fh.write(e.z.astype("<f8").tobytes())
                fh.write(struct.pack("<ddq", e.reward, e.priority, e.tag))

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            if fh.read(8) != cls.MAGIC:
                raise ValueError(f"{path}: not a replay snapshot")
            capacity, beta, count = struct.unpack("<IdI", fh.read(16))
            w, d = struct.unpack("<II", fh.read(8))
            buf = cls(capacity)
            for _ in range(count):
                onehot = np.frombuffer(fh.read(8 * w), dtype="<f8").copy()
                z = np.frombuffer(fh.read(8 * d), dtype="<f8").copy()
                reward, priority, tag = struct.unpack("<ddq", fh.read(24))
                entry = ReplayEntry(onehot, z, reward, priority, tag)
                buf.entries.append(entry)
        return buf, beta


class Evaluator:
    def __init__(self, schema, latent_dim, cfg=None, hidden=(64, 64), rng=None):
        self.schema = schema
        self.latent_dim = int(latent_dim)
        self.cfg = cfg if cfg is not None else PerConfig()
        in_dim = schema.onehot_width + self.latent_dim
        self.net = Mlp([in_dim, *hidden, 1], activation="relu", rng=rng)
        self.opt = AdamState(self.net.param_list(), lr=self.cfg.lr)
        self.buffer = ReplayBuffer(self.cfg.capacity)
        self.beta = self.cfg.beta
        self._eps_init = self.cfg.eps_meta
        self._select_steps = 0

    # -- scoring and selection ---------------------------------------------

    def _input(self, actions, z):
        x = np.empty(self.schema.onehot_width + self.latent_dim)
        x[:self.schema.onehot_width] = arch_onehot(self.schema, actions)
        x[self.schema.onehot_width:] = z
        return x

    def score(self, actions, z):
        if len(actions) != len(self.schema.slots):
            raise ValueError("can only score complete architectures")
        return float(self.net.forward(self._input(actions, z))[0])

    def score_batch(self, candidates, z):
        xs = np.stack([self._input(c, z) for c in candidates])
        return self.net.forward(xs)[:, 0]

    def epsilon(self):
        steps = self._select_steps // self.cfg.eps_every
        return max(0.0, self._eps_init - self.cfg.eps_decay * steps)

    def reset_epsilon(self, phase):
        if phase not in ("meta", "adapt"):
            raise ValueError(f"unknown phase {phase!r}")
        self._eps_init = self.cfg.eps_meta if phase == "meta" else self.cfg.eps_adapt
        self._select_steps = 0

    def choose_best(self, candidates, z, rng):
        """Index of the exploited argmax or an explored uniform pick."""
        if len(candidates) == 0:
            raise ValueError("no candidates to choose from")
        eps = self.epsilon()
        self._select_steps += 1
        if rng.random() < eps:
            return int(rng.integers(len(candidates)))
        scores = self.score_batch(candidates, z)
        return int(np.argmax(scores))

    # -- learning ------------------------------------------------------------

    def add_observation(self, actions, z, reward, tag):
        self.buffer.add(arch_onehot(self.schema, actions), z, reward, tag)

    def update(self, rng, tag=None):
        """One prioritized Huber regression step; reports loss and latent grad."""
        if len(self.buffer) == 0:
            warnings.warn("evaluator update skipped: empty buffer", stacklevel=2)
            return {"loss": 0.0, "g_z": np.zeros(self.latent_dim),
                    "batch": 0, "skipped": True}
        indices, weights = self.buffer.sample(
            self.cfg.fraction, self.cfg.alpha, self.beta, rng)
        entries = [self.buffer.entries[int(i)] for i in indices]
        return self._update_on_batch(entries, weights, indices, tag)

    def _update_on_batch(self, entries, weights, indices, tag):
        n = len(entries)
        xs = np.empty((n, self.net.in_dim))
        targets = np.empty(n)
        for i, e in enumerate(entries):
            xs[i, :self.schema.onehot_width] = e.onehot
            xs[i, self.schema.onehot_width:] = e.z
            targets[i] = e.reward
        out, cache = self.net.forward_cached(xs)
        preds = out[:, 0]
        d = targets - preds
        losses = np.where(np.abs(d) < 1.0, 0.5 * d * d, np.abs(d) - 0.5)
        loss = float(np.mean(weights * losses))
        grad_out = np.empty((n, 1))
        for i in range(n):
            # dL/dpred = -w * huber'(d) / n
            grad_out[i, 0] = -weights[i] * huber_grad(d[i]) / n
        grads, input_grads = self.net.backward_cached(cache, grad_out)
        g_z = np.zeros(self.latent_dim)
        if tag is not None:
            for i, e in enumerate(entries):
                if e.tag == tag:
                    g_z += input_grads[i, self.schema.onehot_width:]
        adam_step(self.opt, self.net.param_list(), grads)
        if indices is not None:
            self.buffer.update_priorities(indices, d)
        self.beta = min(1.0, self.beta + self.cfg.beta_step)
        return {"loss": loss, "g_z": g_z, "batch": n, "skipped": False}
