"""Sequential architecture policy trained with clipped-surrogate PPO.

One tanh MLP serves both heads: its input is the task latent concatenated
with the one-hot of the actions taken so far, its first `onehot_width`
outputs are logits (one per option of every slot, with the current slot's
block selected and masked at each step), and the final output is the state
value. Sampling walks the slots left to right, so every finished sequence
decodes to a valid architecture by construction.

Updates run over a short FIFO memory of recent steps. Advantages come from
generalized advantage estimation at collection time and are normalized per
batch; the surrogate is clipped, a value regression and an entropy bonus are
folded into the same scalar loss. The update also reports the loss gradient
with respect to the latent inputs of the steps collected this epoch, which
is how the encoder receives its learning signal.
"""
import warnings
from collections import deque

import numpy as np

from .numkit import (AdamState, Mlp, adam_step, categorical_sample,
                     entropy_rows, masked_log_softmax_rows, masked_softmax)
from .spaces import arch_onehot


class PpoConfig:
    def __init__(self, clip=0.2, gamma=0.99, lam=0.95, value_coeff=1.0,
                 entropy_coeff=0.01, lr=0.001, memory_size=200, passes=4,
                 reward_placement="per-step"):
        if not 0.0 < clip < 1.0:
            raise ValueError(f"clip must be in (0,1), got {clip}")
        if not 0.0 < gamma <= 1.0 or not 0.0 <= lam <= 1.0:
            raise ValueError("gamma in (0,1] and lam in [0,1] required")
        if reward_placement not in ("per-step", "terminal"):
            raise ValueError(f"unknown reward placement {reward_placement!r}")
        self.clip = float(clip)
        self.gamma = float(gamma)
        self.lam = float(lam)
        self.value_coeff = float(value_coeff)
        self.entropy_coeff = float(entropy_coeff)
        self.lr = float(lr)
        self.memory_size = int(memory_size)
        self.passes = int(passes)
        self.reward_placement = reward_placement

    def to_config(self):
        return dict(clip=self.clip, gamma=self.gamma, lam=self.lam,
                    value_coeff=self.value_coeff, entropy_coeff=self.entropy_coeff,
                    lr=self.lr, memory_size=self.memory_size, passes=self.passes,
                    reward_placement=self.reward_placement)


def gae_advantages(rewards, values, gamma, lam):
    """Backward-pass GAE with a zero terminal bootstrap."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if rewards.shape != values.shape or rewards.ndim != 1:
        raise ValueError(
            f"rewards {rewards.shape} and values {values.shape} must be equal-length vectors"
        )
    n = rewards.size
    adv = np.empty(n)
    gae = 0.0
    for t in range(n - 1, -1, -1):
        next_value = values[t + 1] if t + 1 < n else 0.0
        delta = rewards[t] + gamma * next_value - values[t]
        gae = delta + gamma * lam * gae
        adv[t] = gae
    return adv


class Step:
    """One slot decision, frozen at collection time."""

    __slots__ = ("x", "slot", "action", "mask", "logp_old", "value_old",
                 "advantage", "value_target", "tag")

    def __init__(self, x, slot, action, mask, logp_old, value_old):
        self.x = x
        self.slot = slot
        self.action = action
        self.mask = mask
        self.logp_old = logp_old
        self.value_old = value_old
        self.advantage = 0.0
        self.value_target = 0.0
        self.tag = -1


class PpoController:
    def __init__(self, schema, latent_dim, cfg=None, hidden=(64, 64), rng=None):
        self.schema = schema
        self.latent_dim = int(latent_dim)
        self.cfg = cfg if cfg is not None else PpoConfig()
        in_dim = self.latent_dim + schema.onehot_width
        self.net = Mlp([in_dim, *hidden, schema.onehot_width + 1],
                       activation="tanh", rng=rng)
        self.opt = AdamState(self.net.param_list(), lr=self.cfg.lr,
                             scheduler_step=20, scheduler_gamma=0.99)
        self.memory = deque(maxlen=self.cfg.memory_size)

    # -- acting ------------------------------------------------------------

    def _state_input(self, z, prefix):
        x = np.empty(self.latent_dim + self.schema.onehot_width)
        x[:self.latent_dim] = z
        x[self.latent_dim:] = arch_onehot(self.schema, prefix)
        return x

    def policy_step(self, z, prefix):
        """Masked option distribution and value estimate for the next slot."""
        prefix = tuple(prefix)
        slot = len(prefix)
        if slot >= len(self.schema.slots):
            raise ValueError("architecture already complete")
        x = self._state_input(z, prefix)
        out = self.net.forward(x)
        off = self.schema.offsets[slot]
        width = len(self.schema.slots[slot].options)
        logits = out[off:off + width]
        mask = self.schema.slot_mask(prefix)
        probs = masked_softmax(logits, mask)
        return probs, float(out[-1]), x, mask

    def sample_networks(self, z, count, rng):
        """Sample `count` complete action sequences; returns (actions, steps) pairs."""
        if count < 1:
            raise ValueError("need at least one candidate")
        out = []
        for _ in range(count):
            prefix = []
            steps = []
            for slot_idx in range(len(self.schema.slots)):
                probs, value, x, mask = self.policy_step(z, prefix)
                action = categorical_sample(rng, probs)
                steps.append(Step(x, slot_idx, action, mask,
                                  float(np.log(probs[action])), value))
                prefix.append(action)
            out.append((tuple(prefix), steps))
        return out

    # -- learning ----------------------------------------------------------

    def record_trajectory(self, steps, reward, tag):
        """Attach the normalized score, compute advantages, push to memory."""
        n = len(steps)
        rewards = np.full(n, reward) if self.cfg.reward_placement == "per-step" \
            else np.concatenate([np.zeros(n - 1), [reward]])
        values = np.array([s.value_old for s in steps])
        adv = gae_advantages(rewards, values, self.cfg.gamma, self.cfg.lam)
        for s, a in zip(steps, adv):
            s.advantage = float(a)
            s.value_target = float(a + s.value_old)
            s.tag = tag
        self.memory.extend(steps)

    def clear_memory(self):
        self.memory.clear()

    def _loss_and_grads(self, steps, advantages):
        """Loss, parameter grads, and per-step input grads at current params.

        Steps are processed in per-slot groups so the softmax, ratio, and
        entropy arithmetic runs on whole batches instead of row by row.
        """
        cfg = self.cfg
        n = len(steps)
        advantages = np.asarray(advantages, dtype=np.float64)
        xs = np.stack([s.x for s in steps])
        out, cache = self.net.forward_cached(xs)
        grad_out = np.zeros_like(out)
        surr_sum = 0.0
        entropy_sum = 0.0
        by_slot = {}
        for i, s in enumerate(steps):
            by_slot.setdefault(s.slot, []).append(i)
        for slot, members in by_slot.items():
            idx = np.array(members)
            off = self.schema.offsets[slot]
            width = len(self.schema.slots[slot].options)
            sl = slice(off, off + width)
            masks = np.stack([steps[i].mask for i in idx])
            logp_all = masked_log_softmax_rows(out[idx, sl], masks)
            probs = np.where(masks, np.exp(logp_all), 0.0)
            rows = np.arange(idx.size)
            actions = np.array([steps[i].action for i in idx])
            logp_old = np.array([steps[i].logp_old for i in idx])
            adv = advantages[idx]
            ratio = np.exp(logp_all[rows, actions] - logp_old)
            clipped = np.clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip)
            surr1 = ratio * adv
            surr2 = clipped * adv
            surr_sum += float(np.minimum(surr1, surr2).sum())
            # the gradient follows the branch the min selects; the clipped
            # branch is flat outside the trust band
            live = (surr1 <= surr2) \
                | ((1.0 - cfg.clip < ratio) & (ratio < 1.0 + cfg.clip))
            dsurr_dlogp = np.where(live, ratio * adv, 0.0)
            dlogp_dlogits = -probs
            dlogp_dlogits[rows, actions] += 1.0
            h = entropy_rows(probs)
            entropy_sum += float(h.sum())
            safe_logp = np.where(probs > 0.0, np.log(np.where(probs > 0.0, probs, 1.0)), 0.0)
            dh_dlogits = np.where(probs > 0.0, -probs * (safe_logp + h[:, None]), 0.0)
            grad_out[idx, sl] = (-dsurr_dlogp[:, None] * dlogp_dlogits
                                 - cfg.entropy_coeff * dh_dlogits) / n
        targets = np.array([s.value_target for s in steps])
        diff = out[:, -1] - targets
        value_sum = 0.5 * float((diff * diff).sum())
        grad_out[:, -1] = cfg.value_coeff * diff / n
        loss = (-surr_sum + cfg.value_coeff * value_sum
                - cfg.entropy_coeff * entropy_sum) / n
        grads, input_grads = self.net.backward_cached(cache, grad_out)
        report = {
            "loss": float(loss),
            "surrogate": float(surr_sum / n),
            "value_loss": float(value_sum / n),
            "entropy": float(entropy_sum / n),
        }
        return report, grads, input_grads

    def update(self, tag=None):
        """Run the configured passes over memory; returns a loss report.

        The report's `g_z` is the latent gradient of the first-pass loss,
        summed over steps whose tag matches `tag` (the current epoch), taken
        before any parameter step so it is a true gradient of the reported
        loss at the collection-time parameters.
        """
        steps = list(self.memory)
        if not steps:
            warnings.warn("policy update skipped: empty memory", stacklevel=2)
            return {"loss": 0.0, "surrogate": 0.0, "value_loss": 0.0,
                    "entropy": 0.0, "g_z": np.zeros(self.latent_dim),
                    "batch": 0, "skipped": True}
        adv = np.array([s.advantage for s in steps])
        if adv.size > 1 and adv.std() > 0.0:
            adv = (adv - adv.mean()) / (adv.std() + 1e-8)
        else:
            adv = adv - adv.mean()
        first_report = None
        g_z = np.zeros(self.latent_dim)
        for p in range(self.cfg.passes):
            report, grads, input_grads = self._loss_and_grads(steps, adv)
            if p == 0:
                first_report = report
                if tag is not None:
                    for i, s in enumerate(steps):
                        if s.tag == tag:
                            g_z += input_grads[i, :self.latent_dim]
            adam_step(self.opt, self.net.param_list(), grads)
        first_report["g_z"] = g_z
        first_report["batch"] = len(steps)
        first_report["skipped"] = False
        return first_report
