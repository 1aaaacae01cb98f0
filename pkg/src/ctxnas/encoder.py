"""Task-context encoder.

Each context row (an architecture one-hot with its observed reward) is mapped
by a tanh MLP to a diagonal Gaussian factor: the first half of the output is
the factor mean, the second half parameterizes the variance through a
softplus. Factors are fused by a product of Gaussians, which is
precision-weighted:

    var  = 1 / sum_i (1 / v_i)
    mean = var * sum_i (m_i / v_i)

A latent is drawn by reparameterization, z = mean + sqrt(var) * eps, so
downstream gradients with respect to z flow back into the encoder weights.
The KL of the fused Gaussian against a standard normal regularizes the
latent and is weighted into every update.
"""
import numpy as np

from .numkit import AdamState, Mlp, adam_step, sigmoid, softplus

VAR_FLOOR = 1e-8  # keeps precisions finite if a factor variance underflows


def normalize_rewards(rewards):
    """Z-score with population std; constant or singleton input maps to zeros."""
    r = np.asarray(rewards, dtype=np.float64)
    if r.size == 0:
        raise ValueError("need at least one reward")
    if not np.all(np.isfinite(r)):
        raise ValueError("rewards must be finite")
    std = r.std()
    if r.size == 1 or std == 0.0:
        return np.zeros_like(r)
    return (r - r.mean()) / std


class EncodedContext:
    """Everything one encoding pass produces, kept for the backward pass."""

    def __init__(self, contexts, cache, raw, factor_means, factor_vars,
                 mean, var, eps, z):
        self.contexts = contexts
        self.cache = cache
        self.raw = raw
        self.factor_means = factor_means
        self.factor_vars = factor_vars
        self.mean = mean
        self.var = var
        self.eps = eps
        self.z = z

    @property
    def kl(self):
        """KL(N(mean, diag var) || N(0, I)) in nats."""
        return 0.5 * float(np.sum(self.var + self.mean ** 2 - 1.0 - np.log(self.var)))


class ContextEncoder:
    def __init__(self, feature_dim, latent_dim=10, hidden=(64, 64), lr=0.01,
                 kl_weight=0.1, rng=None):
        self.feature_dim = int(feature_dim)
        self.latent_dim = int(latent_dim)
        self.kl_weight = float(kl_weight)
        dims = [self.feature_dim, *hidden, 2 * self.latent_dim]
        self.mlp = Mlp(dims, activation="tanh", rng=rng)
        self.opt = AdamState(self.mlp.param_list(), lr=lr)

    def encode_with_eps(self, contexts, eps):
        """Deterministic encoding for a fixed reparameterization noise."""
        contexts = np.atleast_2d(np.asarray(contexts, dtype=np.float64))
        if contexts.shape[1] != self.feature_dim:
            raise ValueError(
                f"context feature dim {contexts.shape[1]} != {self.feature_dim}"
            )
        raw, cache = self.mlp.forward_cached(contexts)
        d = self.latent_dim
        factor_means = raw[:, :d]
        factor_vars = softplus(raw[:, d:]) + VAR_FLOOR
        precision = np.sum(1.0 / factor_vars, axis=0)
        var = 1.0 / precision
        mean = var * np.sum(factor_means / factor_vars, axis=0)
        eps = np.asarray(eps, dtype=np.float64)
        z = mean + np.sqrt(var) * eps
        return EncodedContext(contexts, cache, raw, factor_means, factor_vars,
                              mean, var, eps, z)

    def encode_sample(self, contexts, rng):
        eps = rng.standard_normal(self.latent_dim)
        return self.encode_with_eps(contexts, eps)

    def parameter_gradients(self, enc, g_z, include_kl=True):
        """Weight gradients of g_z . z(theta) [+ kl_weight * KL(theta)]."""
        g_z = np.asarray(g_z, dtype=np.float64)
        mean, var = enc.mean, enc.var
        g_mean = g_z.copy()
        g_var = g_z * enc.eps / (2.0 * np.sqrt(var))
        if include_kl:
            g_mean += self.kl_weight * mean
            g_var += self.kl_weight * 0.5 * (1.0 - 1.0 / var)
        # product of Gaussians, differentiated through the precision weighting
        fv = enc.factor_vars
        g_fm = g_mean * (var / fv)
        g_fv = g_mean * (mean - enc.factor_means) * var / fv ** 2 \
            + g_var * var ** 2 / fv ** 2
        d = self.latent_dim
        grad_out = np.empty_like(enc.raw)
        grad_out[:, :d] = g_fm
        grad_out[:, d:] = g_fv * sigmoid(enc.raw[:, d:])
        grads, _ = self.mlp.backward_cached(enc.cache, grad_out)
        return grads

    def apply_gradient(self, enc, g_z):
        """One Adam step on the latent gradient plus the KL term."""
        grads = self.parameter_gradients(enc, g_z, include_kl=True)
        adam_step(self.opt, self.mlp.param_list(), grads)
        return enc.kl

    def prior_sample(self, rng):
        return rng.standard_normal(self.latent_dim)
