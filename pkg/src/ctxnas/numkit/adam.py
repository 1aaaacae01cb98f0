"""Adam with an optional step-decay learning-rate schedule."""
import numpy as np


class NonFiniteGradientError(ValueError):
    """Raised when an update is rejected because a gradient is not finite."""


class AdamState:
    """Per-parameter moment accumulators plus the decay schedule.

    The schedule multiplies the base rate by scheduler_gamma after every
    scheduler_step completed updates (step-decay). scheduler_step=None
    disables decay.
    """

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8,
                 scheduler_step=None, scheduler_gamma=1.0):
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.scheduler_step = scheduler_step
        self.scheduler_gamma = float(scheduler_gamma)

    def effective_lr(self):
        """Learning rate the next update will use."""
        if not self.scheduler_step:
            return self.lr
        return self.lr * self.scheduler_gamma ** (self.t // self.scheduler_step)


def adam_step(state, params, grads):
    """One Adam update, in place on params (also returned).

    Rejects the whole update if any gradient entry is non-finite, leaving
    params and state untouched.
    """
    if len(params) != len(state.m) or len(grads) != len(params):
        raise ValueError("params/grads do not match optimizer state")
    for i, g in enumerate(grads):
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(
                f"non-finite gradient in parameter {i}; update rejected"
            )
    lr = state.effective_lr()
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params
