"""Context-encoder checks: factor head semantics, Gaussian fusion against a
numeric-integration oracle, reparameterization statistics, the KL penalty,
reward normalization, and finite-difference gradient verification."""
import numpy as np
import pytest

from ctxnas.encoder import (VAR_FLOOR, ContextEncoder, normalize_rewards)
from oracle_helpers import fd_worst_rel_error, gaussian_product_on_grid

LN2 = float(np.log(2.0))


def make_encoder(feature_dim=7, latent_dim=3, hidden=(8, 8), seed=0, **kw):
    rng = np.random.default_rng(seed)
    return ContextEncoder(feature_dim, latent_dim=latent_dim, hidden=hidden,
                          rng=rng, **kw)


def zero_weights(encoder):
    for p in encoder.mlp.param_list():
        p[...] = 0.0


# ---------------------------------------------------------------------------
# factor head

def test_zero_weight_factor_is_standardish():
    enc = make_encoder()
    zero_weights(enc)
    out = enc.encode_with_eps(np.ones((1, 7)), np.zeros(3))
    np.testing.assert_allclose(out.factor_means, 0.0, atol=0)
    np.testing.assert_allclose(out.factor_vars, LN2 + VAR_FLOOR, rtol=1e-12)
    np.testing.assert_allclose(out.mean, 0.0, atol=0)
    np.testing.assert_allclose(out.var, LN2 + VAR_FLOOR, rtol=1e-12)


def test_factor_head_matches_raw_output():
    enc = make_encoder(seed=3)
    x = np.random.default_rng(1).standard_normal((4, 7))
    out = enc.encode_with_eps(x, np.zeros(3))
    raw = enc.mlp.forward(x)
    np.testing.assert_allclose(out.factor_means, raw[:, :3], rtol=1e-12)
    np.testing.assert_allclose(
        out.factor_vars, np.log1p(np.exp(raw[:, 3:])) + VAR_FLOOR, rtol=1e-10)
    assert np.all(out.factor_vars > 0)


def test_feature_width_checked():
    enc = make_encoder()
    with pytest.raises(ValueError, match="feature dim"):
        enc.encode_with_eps(np.ones((2, 6)), np.zeros(3))


# ---------------------------------------------------------------------------
# product of Gaussians

class _FixedFactorEncoder(ContextEncoder):
    """Encoder whose factor parameters are injected, for fusion tests."""

    def __init__(self, means, variances):
        self._m = np.asarray(means, dtype=np.float64)
        self._v = np.asarray(variances, dtype=np.float64)
        super().__init__(feature_dim=1, latent_dim=self._m.shape[1], hidden=(4,),
                         rng=np.random.default_rng(0))

    def encode_with_eps(self, contexts, eps):
        out = super().encode_with_eps(np.zeros((self._m.shape[0], 1)), eps)
        precision = np.sum(1.0 / self._v, axis=0)
        out.factor_means, out.factor_vars = self._m, self._v
        out.var = 1.0 / precision
        out.mean = out.var * np.sum(self._m / self._v, axis=0)
        out.z = out.mean + np.sqrt(out.var) * out.eps
        return out


def fuse(means, variances):
    enc = _FixedFactorEncoder(means, variances)
    out = enc.encode_with_eps(None, np.zeros(np.shape(means)[1]))
    return out.mean, out.var


def test_product_single_factor_identity():
    mean, var = fuse([[1.5, -2.0]], [[0.3, 4.0]])
    np.testing.assert_allclose(mean, [1.5, -2.0], rtol=1e-12)
    np.testing.assert_allclose(var, [0.3, 4.0], rtol=1e-12)


def test_product_two_unit_factors():
    mean, var = fuse([[1.0], [3.0]], [[1.0], [1.0]])
    assert mean[0] == pytest.approx(2.0, abs=1e-12)
    assert var[0] == pytest.approx(0.5, abs=1e-12)


def test_product_matches_grid_integration():
    rng = np.random.default_rng(7)
    m = rng.uniform(-2.0, 2.0, size=(5, 1))
    v = rng.uniform(0.2, 3.0, size=(5, 1))
    mean, var = fuse(m, v)
    grid_mean, grid_var = gaussian_product_on_grid(m[:, 0], v[:, 0])
    assert abs(mean[0] - grid_mean) < 1e-6
    assert abs(var[0] - grid_var) < 1e-6


def test_product_is_order_invariant():
    rng = np.random.default_rng(9)
    m = rng.uniform(-1.0, 1.0, size=(6, 2))
    v = rng.uniform(0.5, 2.0, size=(6, 2))
    mean_a, var_a = fuse(m, v)
    perm = rng.permutation(6)
    mean_b, var_b = fuse(m[perm], v[perm])
    np.testing.assert_allclose(mean_a, mean_b, atol=1e-12)
    np.testing.assert_allclose(var_a, var_b, atol=1e-12)


def test_vague_factor_barely_moves_posterior():
    mean_a, _ = fuse([[0.4], [1.1]], [[0.6], [0.9]])
    mean_b, _ = fuse([[0.4], [1.1], [50.0]], [[0.6], [0.9], [1e9]])
    assert abs(mean_a[0] - mean_b[0]) < 1e-4


# ---------------------------------------------------------------------------
# reparameterized sampling

def test_zero_eps_returns_posterior_mean():
    enc = make_encoder(seed=5)
    x = np.random.default_rng(2).standard_normal((3, 7))
    out = enc.encode_with_eps(x, np.zeros(3))
    np.testing.assert_array_equal(out.z, out.mean)


def test_sample_statistics_match_posterior():
    enc = make_encoder(seed=6)
    x = np.random.default_rng(3).standard_normal((3, 7))
    rng = np.random.default_rng(4)
    n = 100_000
    zs = np.stack([enc.encode_sample(x, rng).z for _ in range(n)])
    ref = enc.encode_with_eps(x, np.zeros(3))
    se_mean = np.sqrt(ref.var / n)
    assert np.all(np.abs(zs.mean(axis=0) - ref.mean) < 3 * se_mean)
    # var of the sample variance is about 2 var^2 / n for a Gaussian
    se_var = ref.var * np.sqrt(2.0 / n)
    assert np.all(np.abs(zs.var(axis=0) - ref.var) < 3 * se_var)


# ---------------------------------------------------------------------------
# KL penalty

def test_kl_closed_form_value():
    out = _FixedFactorEncoder([[0.0]], [[0.25]]).encode_with_eps(None, np.zeros(1))
    want = 0.5 * (0.25 + 0.0 - 1.0 - np.log(0.25))
    assert out.kl == pytest.approx(want, abs=1e-12)
    assert round(out.kl, 5) == 0.31815


def test_kl_nonnegative_and_zero_at_prior():
    rng = np.random.default_rng(11)
    for _ in range(50):
        m = rng.uniform(-3.0, 3.0, size=(1, 4))
        v = rng.uniform(0.05, 5.0, size=(1, 4))
        assert _FixedFactorEncoder(m, v).encode_with_eps(None, np.zeros(4)).kl >= 0.0
    at_prior = _FixedFactorEncoder([[0.0, 0.0]], [[1.0, 1.0]])
    assert at_prior.encode_with_eps(None, np.zeros(2)).kl == 0.0


def test_kl_permutation_invariant():
    rng = np.random.default_rng(12)
    m = rng.uniform(-1.0, 1.0, size=(1, 6))
    v = rng.uniform(0.2, 2.0, size=(1, 6))
    perm = rng.permutation(6)
    a = _FixedFactorEncoder(m, v).encode_with_eps(None, np.zeros(6)).kl
    b = _FixedFactorEncoder(m[:, perm], v[:, perm]).encode_with_eps(None, np.zeros(6)).kl
    assert a == pytest.approx(b, abs=1e-12)


# ---------------------------------------------------------------------------
# reward normalization

def test_normalize_rewards_three_point():
    np.testing.assert_allclose(
        normalize_rewards([1.0, 2.0, 3.0]),
        [-1.2247448714, 0.0, 1.2247448714], atol=1e-9)


def test_normalize_rewards_degenerate_inputs():
    np.testing.assert_array_equal(normalize_rewards([0.7]), [0.0])
    np.testing.assert_array_equal(normalize_rewards([2.0, 2.0, 2.0]), [0.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        normalize_rewards([])
    with pytest.raises(ValueError):
        normalize_rewards([1.0, np.nan])


def test_normalize_rewards_moments():
    rng = np.random.default_rng(13)
    out = normalize_rewards(rng.uniform(0.0, 1.0, size=200))
    assert abs(out.mean()) < 1e-12
    assert abs(out.std() - 1.0) < 1e-9


# ---------------------------------------------------------------------------
# gradients

def test_parameter_gradients_match_finite_differences():
    enc = make_encoder(feature_dim=5, latent_dim=2, hidden=(6,), seed=21,
                       kl_weight=0.1)
    x = np.random.default_rng(22).standard_normal((4, 5))
    eps = np.random.default_rng(23).standard_normal(2)
    g_z = np.array([0.7, -1.3])

    def loss():
        out = enc.encode_with_eps(x, eps)
        return float(g_z @ out.z) + enc.kl_weight * out.kl

    analytic = enc.parameter_gradients(enc.encode_with_eps(x, eps), g_z)
    worst = fd_worst_rel_error(loss, enc.mlp.param_list(), analytic,
                               rng=np.random.default_rng(24))
    assert worst < 1e-4


def test_parameter_gradients_without_kl():
    enc = make_encoder(feature_dim=5, latent_dim=2, hidden=(6,), seed=31)
    x = np.random.default_rng(32).standard_normal((3, 5))
    eps = np.random.default_rng(33).standard_normal(2)
    g_z = np.array([-0.4, 0.9])

    def loss():
        return float(g_z @ enc.encode_with_eps(x, eps).z)

    analytic = enc.parameter_gradients(enc.encode_with_eps(x, eps), g_z,
                                       include_kl=False)
    worst = fd_worst_rel_error(loss, enc.mlp.param_list(), analytic,
                               rng=np.random.default_rng(34))
    assert worst < 1e-4


def test_apply_gradient_moves_weights_and_returns_kl():
    enc = make_encoder(seed=41)
    x = np.random.default_rng(42).standard_normal((2, 7))
    out = enc.encode_sample(x, np.random.default_rng(43))
    before = [p.copy() for p in enc.mlp.param_list()]
    kl = enc.apply_gradient(out, np.ones(3))
    assert kl == pytest.approx(out.kl)
    assert any(not np.array_equal(b, p)
               for b, p in zip(before, enc.mlp.param_list()))


def test_zero_latent_gradient_with_zero_kl_weight_is_noop():
    enc = make_encoder(seed=44, kl_weight=0.0)
    x = np.random.default_rng(45).standard_normal((2, 7))
    out = enc.encode_sample(x, np.random.default_rng(46))
    grads = enc.parameter_gradients(out, np.zeros(3))
    assert all(np.all(g == 0.0) for g in grads)


def test_prior_sample_shape():
    enc = make_encoder()
    z = enc.prior_sample(np.random.default_rng(0))
    assert z.shape == (3,)
