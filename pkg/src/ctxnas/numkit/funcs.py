"""Elementwise functions shared across the engine."""
import numpy as np


def softplus(x):
    """log(1 + e^x), numerically stable; strictly positive."""
    return np.logaddexp(0.0, np.asarray(x, dtype=np.float64))


def sigmoid(x):
    """Derivative of softplus."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _check_mask(x, mask):
    x = np.asarray(x, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if x.shape != mask.shape:
        raise ValueError(f"logits shape {x.shape} != mask shape {mask.shape}")
    if not mask.any():
        raise ValueError("all actions masked: no valid option")
    return x, mask


def masked_softmax(x, mask):
    """Softmax over the unmasked entries; masked entries are exactly 0."""
    x, mask = _check_mask(x, mask)
    allowed = x[mask]
    e = np.exp(allowed - allowed.max())
    out = np.zeros_like(x)
    out[mask] = e / e.sum()
    return out


def masked_log_softmax(x, mask):
    """Log-probabilities under masked_softmax; masked entries are -inf."""
    x, mask = _check_mask(x, mask)
    allowed = x[mask]
    shift = allowed - allowed.max()
    logz = np.log(np.exp(shift).sum())
    out = np.full_like(x, -np.inf)
    out[mask] = shift - logz
    return out


def masked_log_softmax_rows(x, mask):
    """Row-wise masked_log_softmax over a 2-D batch of logit rows."""
    x = np.asarray(x, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if x.ndim != 2 or x.shape != mask.shape:
        raise ValueError(f"need matching 2-D logits and mask, got {x.shape} and {mask.shape}")
    if not mask.any(axis=1).all():
        raise ValueError("all actions masked: no valid option")
    shifted = np.where(mask, x, -np.inf)
    shifted -= shifted.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return shifted - logz


def entropy(probs):
    """Shannon entropy in nats; zero-probability entries contribute 0."""
    p = np.asarray(probs, dtype=np.float64)
    nz = p > 0.0
    return float(-(p[nz] * np.log(p[nz])).sum())


def entropy_rows(probs):
    """Per-row Shannon entropy of a 2-D batch of distributions."""
    p = np.asarray(probs, dtype=np.float64)
    logp = np.where(p > 0.0, np.log(np.where(p > 0.0, p, 1.0)), 0.0)
    return -(p * logp).sum(axis=1)


def categorical_sample(rng, probs):
    """Index drawn proportional to probs via inverse CDF.

    One uniform draw per call regardless of outcome, which keeps sampling
    reproducible and independent of how numpy's own choice() evolves.
    """
    p = np.asarray(probs, dtype=np.float64)
    cum = np.cumsum(p)
    u = rng.random() * cum[-1]
    # right side so zero-probability leading entries are never picked
    return min(int(np.searchsorted(cum, u, side="right")), p.size - 1)
