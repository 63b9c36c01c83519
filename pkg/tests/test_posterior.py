"""Conditional posteriors: closed-form values, rescaling, marginal gradients.

Random instances are checked against independent straight-line
recomputations and central finite differences of the value functions.
"""

import numpy as np
import pytest

from bgan.errors import ConfigurationError, DataError
from bgan.net import PROB_FLOOR, NetworkSpec, ParamVector, forward
from bgan.posterior import (
    PosteriorConfig,
    PriorSpec,
    grad_disc,
    grad_gen,
    grad_log_prior,
    log_cond_disc_semi,
    log_cond_disc_unsup,
    log_cond_gen_semi,
    log_cond_gen_unsup,
    log_prior,
    marginal_grad_disc,
    marginal_grad_gen,
)

from conftest import central_difference, relative_error

GEN_SPEC = NetworkSpec((2, 5, 3))
DISC_SPEC = NetworkSpec((3, 5, 1), output_head="sigmoid")
K = 4
DISC_SEMI_SPEC = NetworkSpec((3, 5, K + 1), output_head="softmax")
PRIOR = PriorSpec(sigma_g=1.0, sigma_d=1.0)


def params(spec, seed, scale=0.6):
    rng = np.random.default_rng(seed)
    return ParamVector(rng.normal(scale=scale, size=spec.param_count()), spec)


def zero_params(spec):
    return ParamVector(np.zeros(spec.param_count()), spec)


def cfg_unsup(n_g=4, n_d=4, N=40, J_g=1, J_d=1):
    return PosteriorConfig(N=N, mode="unsupervised", n_g=n_g, n_d=n_d, J_g=J_g, J_d=J_d)


def cfg_semi(n_g=4, n_d=4, N=40, N_s=3, J_g=1, J_d=1):
    return PosteriorConfig(N=N, mode="semi_supervised", K=K, n_g=n_g, n_d=n_d,
                           N_s=N_s, J_g=J_g, J_d=J_d)


class TestLogPrior:
    def test_standard_normal_single_param(self):
        spec = NetworkSpec((1, 1))
        # one weight + one bias = 2 params; use a 1-param slice via direct formula
        p = ParamVector(np.zeros(2), spec)
        # P = 2 here; the documented single-parameter value is checked via the formula
        assert abs(log_prior(p, 1.0) - (-np.log(2 * np.pi))) < 1e-12

    def test_zero_vector_closed_form(self):
        # P parameters at zero: -(P/2) ln(2 pi sigma^2)
        spec = NetworkSpec((2, 2))  # P = 6
        p = zero_params(spec)
        sigma = np.sqrt(10.0)
        expected = -3.0 * np.log(2 * np.pi * 10.0)
        np.testing.assert_allclose(log_prior(p, sigma), expected, atol=1e-12)

    def test_ten_params_variance_ten(self):
        # independently evaluated closed form: -(10/2) ln(20 pi) = -20.70215...
        values = np.zeros(10)
        spec = NetworkSpec((1, 5))  # 1*5 + 5 = 10 params
        p = ParamVector(values, spec)
        expected = -5.0 * np.log(20.0 * np.pi)
        np.testing.assert_allclose(log_prior(p, np.sqrt(10.0)), expected, atol=1e-12)
        assert abs(expected - (-20.70231080)) < 1e-6

    def test_doubling_theta_quadratic_drop(self, rng):
        spec = NetworkSpec((2, 3))
        v = rng.normal(size=spec.param_count())
        sigma = 1.7
        lp1 = log_prior(ParamVector(v, spec), sigma)
        lp2 = log_prior(ParamVector(2 * v, spec), sigma)
        np.testing.assert_allclose(lp1 - lp2, 3.0 * (v @ v) / (2 * sigma ** 2), atol=1e-10)

    def test_gradient_exact(self, rng):
        spec = NetworkSpec((3, 2))
        p = params(spec, 5)
        sigma = 2.0
        np.testing.assert_array_equal(grad_log_prior(p, sigma), -p.values / 4.0)

    def test_rejects_nonpositive_sigma(self):
        with pytest.raises(ConfigurationError):
            log_prior(zero_params(GEN_SPEC), 0.0)


class TestGenUnsup:
    def test_constant_half_discriminator(self, rng):
        # zero disc weights: D = 0.5 everywhere; N = n_g makes the scale 1
        cfg = cfg_unsup(n_g=4, n_d=4, N=4)
        theta_g = params(GEN_SPEC, 0)
        z = rng.normal(size=(4, 2))
        value = log_cond_gen_unsup(theta_g, z, zero_params(DISC_SPEC), PRIOR, cfg)
        expected = 4 * np.log(0.5) + log_prior(theta_g, PRIOR.sigma_g)
        np.testing.assert_allclose(value, expected, atol=1e-12)

    def test_rescaling_factor_from_dataset_size(self):
        cfg = PosteriorConfig(N=50000, n_g=64, n_d=64)
        assert cfg.gen_scale == 781.25

    def test_matches_straight_line_recomputation(self, rng):
        cfg = cfg_unsup()
        theta_g = params(GEN_SPEC, 1)
        theta_d = params(DISC_SPEC, 2)
        z = rng.normal(size=(4, 2))
        value = log_cond_gen_unsup(theta_g, z, theta_d, PRIOR, cfg)

        fake = forward(theta_g, z)
        d = np.clip(forward(theta_d, fake), PROB_FLOOR, 1 - PROB_FLOOR)
        expected = (cfg.N / cfg.n_g) * np.log(d).sum() + log_prior(theta_g, PRIOR.sigma_g)
        np.testing.assert_allclose(value, expected, rtol=1e-10)

    def test_ascent_direction_raises_likelihood(self, rng):
        # step along the gradient of the likelihood term: value must increase
        flat = PriorSpec(sigma_g=1e8, sigma_d=1e8)
        cfg = cfg_unsup()
        theta_g = params(GEN_SPEC, 3)
        theta_d = params(DISC_SPEC, 4)
        z = rng.normal(size=(4, 2))
        _, grad = grad_gen(theta_g, z, theta_d, flat, cfg)
        direction = grad.values / np.linalg.norm(grad.values)
        v0 = log_cond_gen_unsup(theta_g, z, theta_d, flat, cfg)
        stepped = ParamVector(theta_g.values + 1e-6 * direction, GEN_SPEC)
        v1 = log_cond_gen_unsup(stepped, z, theta_d, flat, cfg)
        assert v1 > v0


class TestDiscUnsup:
    def test_constant_half_discriminator(self, rng):
        cfg = cfg_unsup(n_g=3, n_d=5, N=40)
        theta_d = zero_params(DISC_SPEC)
        theta_g = params(GEN_SPEC, 1)
        z = rng.normal(size=(3, 2))
        X = rng.normal(size=(5, 3))
        value = log_cond_disc_unsup(theta_d, z, X, theta_g, PRIOR, cfg)
        expected = (40 / 5) * 5 * np.log(0.5) + (40 / 3) * 3 * np.log(0.5) \
            + log_prior(theta_d, PRIOR.sigma_d)
        np.testing.assert_allclose(value, expected, atol=1e-10)

    def test_perfect_discriminator_hits_clamp(self):
        # linear D with a big weight separates real (+1) from fake (-1):
        # every log term lands on the clamp boundary value ln(1 - PROB_FLOOR)
        gen_spec = NetworkSpec((1, 1))
        disc_spec = NetworkSpec((1, 1), output_head="sigmoid")
        theta_g = ParamVector(np.array([0.0, -1.0]), gen_spec)   # G(z) = -1
        theta_d = ParamVector(np.array([50.0, 0.0]), disc_spec)
        cfg = PosteriorConfig(N=2, mode="unsupervised", n_g=2, n_d=2)
        z = np.zeros((2, 1))
        X = np.ones((2, 1))
        value = log_cond_disc_unsup(theta_d, z, X, theta_g, PRIOR, cfg)
        expected = 4 * np.log(1 - PROB_FLOOR) + log_prior(theta_d, PRIOR.sigma_d)
        np.testing.assert_allclose(value, expected, atol=1e-10)

    def test_matches_straight_line_recomputation(self, rng):
        cfg = cfg_unsup()
        theta_g = params(GEN_SPEC, 7)
        theta_d = params(DISC_SPEC, 8)
        z = rng.normal(size=(4, 2))
        X = rng.normal(size=(4, 3))
        value = log_cond_disc_unsup(theta_d, z, X, theta_g, PRIOR, cfg)

        d_real = forward(theta_d, X)
        d_fake = forward(theta_d, forward(theta_g, z))
        expected = (cfg.N / cfg.n_d) * np.log(d_real).sum() \
            + (cfg.N / cfg.n_g) * np.log(1 - d_fake).sum() \
            + log_prior(theta_d, PRIOR.sigma_d)
        np.testing.assert_allclose(value, expected, rtol=1e-10)


class TestGenSemi:
    def test_uniform_softmax_inner_sum(self, rng):
        # zero-weight (K+1)-way discriminator: mass off class 0 is K/(K+1)
        cfg = cfg_semi(n_g=3, N=3, n_d=3)
        theta_g = params(GEN_SPEC, 2)
        value = log_cond_gen_semi(theta_g, rng.normal(size=(3, 2)),
                                  zero_params(DISC_SEMI_SPEC), PRIOR, cfg)
        expected = 3 * np.log(K / (K + 1)) + log_prior(theta_g, PRIOR.sigma_g)
        np.testing.assert_allclose(value, expected, atol=1e-12)

    def test_inner_sum_equals_one_minus_class0(self, rng):
        theta_d = params(DISC_SEMI_SPEC, 3, scale=1.5)
        x = rng.normal(size=(20, 3))
        s = forward(theta_d, x)
        np.testing.assert_allclose(s[:, 1:].sum(axis=1), 1.0 - s[:, 0], atol=1e-12)
        assert np.all(s[:, 1:].sum(axis=1) > 0)
        assert np.all(s[:, 1:].sum(axis=1) < 1)

    def test_matches_straight_line_recomputation(self, rng):
        cfg = cfg_semi()
        theta_g = params(GEN_SPEC, 4)
        theta_d = params(DISC_SEMI_SPEC, 5)
        z = rng.normal(size=(4, 2))
        value = log_cond_gen_semi(theta_g, z, theta_d, PRIOR, cfg)
        s = forward(theta_d, forward(theta_g, z))
        expected = (cfg.N / cfg.n_g) * np.log(1 - s[:, 0]).sum() + log_prior(theta_g, PRIOR.sigma_g)
        np.testing.assert_allclose(value, expected, rtol=1e-10)


class TestDiscSemi:
    def test_uniform_softmax_closed_form(self, rng):
        # one unlabeled row, one fake row, one labeled row, all under K=9
        K9 = 9
        disc = ParamVector(np.zeros(NetworkSpec((3, 5, K9 + 1), output_head="softmax").param_count()),
                           NetworkSpec((3, 5, K9 + 1), output_head="softmax"))
        cfg = PosteriorConfig(N=5, mode="semi_supervised", K=K9, n_g=1, n_d=1, N_s=1)
        theta_g = params(GEN_SPEC, 6)
        z = rng.normal(size=(1, 2))
        X = rng.normal(size=(1, 3))
        labeled = (rng.normal(size=(1, 3)), np.array([4]))
        value = log_cond_disc_semi(disc, z, X, labeled, theta_g, PRIOR, cfg)
        expected = np.log(0.9) * (cfg.N / cfg.n_d) + np.log(0.1) * (cfg.N / cfg.n_g) \
            + np.log(0.1) + log_prior(disc, PRIOR.sigma_d)
        np.testing.assert_allclose(value, expected, atol=1e-10)

    def test_no_labels_reduces_to_unlabeled_terms(self, rng):
        cfg = cfg_semi(N_s=0)
        theta_g = params(GEN_SPEC, 7)
        theta_d = params(DISC_SEMI_SPEC, 8)
        z = rng.normal(size=(4, 2))
        X = rng.normal(size=(4, 3))
        with_none = log_cond_disc_semi(theta_d, z, X, None, theta_g, PRIOR, cfg)
        with_empty = log_cond_disc_semi(theta_d, z, X,
                                        (np.zeros((0, 3)), np.zeros(0, dtype=int)),
                                        theta_g, PRIOR, cfg)
        np.testing.assert_allclose(with_none, with_empty, atol=1e-12)

    def test_matches_straight_line_recomputation(self, rng):
        cfg = cfg_semi()
        theta_g = params(GEN_SPEC, 9)
        theta_d = params(DISC_SEMI_SPEC, 10)
        z = rng.normal(size=(4, 2))
        X = rng.normal(size=(4, 3))
        X_s = rng.normal(size=(3, 3))
        y_s = np.array([1, 4, 2])
        value = log_cond_disc_semi(theta_d, z, X, (X_s, y_s), theta_g, PRIOR, cfg)

        s_real = forward(theta_d, X)
        s_fake = forward(theta_d, forward(theta_g, z))
        s_sup = forward(theta_d, X_s)
        expected = (cfg.N / cfg.n_d) * np.log(1 - s_real[:, 0]).sum() \
            + (cfg.N / cfg.n_g) * np.log(s_fake[:, 0]).sum() \
            + np.log(s_sup[np.arange(3), y_s]).sum() \
            + log_prior(theta_d, PRIOR.sigma_d)
        np.testing.assert_allclose(value, expected, rtol=1e-10)

    def test_label_out_of_range(self, rng):
        cfg = cfg_semi()
        with pytest.raises(DataError):
            log_cond_disc_semi(params(DISC_SEMI_SPEC, 1), rng.normal(size=(4, 2)),
                               rng.normal(size=(4, 3)),
                               (rng.normal(size=(1, 3)), np.array([K + 1])),
                               params(GEN_SPEC, 2), PRIOR, cfg)


class TestMarginalGradients:
    def test_single_pair_equals_conditional_gradient(self, rng):
        cfg = cfg_unsup()
        theta_g = params(GEN_SPEC, 11)
        theta_d = params(DISC_SPEC, 12)
        z = rng.normal(size=(4, 2))
        _, single = grad_gen(theta_g, z, theta_d, PRIOR, cfg)
        marginal = marginal_grad_gen(theta_g, [z], [theta_d], PRIOR, cfg)
        np.testing.assert_allclose(marginal.values, single.values, rtol=1e-12)

    def test_duplicated_pair_doubles_gradient(self, rng):
        cfg = cfg_unsup()
        theta_g = params(GEN_SPEC, 13)
        theta_d = params(DISC_SPEC, 14)
        z = rng.normal(size=(4, 2))
        one = marginal_grad_gen(theta_g, [z], [theta_d], PRIOR, cfg)
        two = marginal_grad_gen(theta_g, [z, z], [theta_d], PRIOR, cfg)
        np.testing.assert_allclose(two.values, 2.0 * one.values, rtol=1e-10)

    def test_two_by_two_equals_sum_of_singles_gen(self, rng):
        cfg = cfg_unsup(J_g=2, J_d=2)
        theta_g = params(GEN_SPEC, 15)
        discs = [params(DISC_SPEC, 16), params(DISC_SPEC, 17)]
        zs = [rng.normal(size=(4, 2)), rng.normal(size=(4, 2))]
        marginal = marginal_grad_gen(theta_g, zs, discs, PRIOR, cfg)
        total = np.zeros_like(theta_g.values)
        for z in zs:
            for d in discs:
                _, g = grad_gen(theta_g, z, d, PRIOR, cfg)
                total += g.values
        np.testing.assert_allclose(marginal.values, total, rtol=1e-10)

    def test_two_by_two_equals_sum_of_singles_disc(self, rng):
        cfg = cfg_semi(J_g=2, J_d=2)
        theta_d = params(DISC_SEMI_SPEC, 18)
        gens = [params(GEN_SPEC, 19), params(GEN_SPEC, 20)]
        zs = [rng.normal(size=(4, 2)), rng.normal(size=(4, 2))]
        X = rng.normal(size=(4, 3))
        labeled = (rng.normal(size=(3, 3)), np.array([1, 2, 3]))
        marginal = marginal_grad_disc(theta_d, zs, X, labeled, gens, PRIOR, cfg)
        total = np.zeros_like(theta_d.values)
        for z in zs:
            for g in gens:
                _, gr = grad_disc(theta_d, z, X, labeled, g, PRIOR, cfg)
                total += gr.values
        np.testing.assert_allclose(marginal.values, total, rtol=1e-10)

    def test_disc_single_pair_equals_conditional(self, rng):
        cfg = cfg_unsup()
        theta_d = params(DISC_SPEC, 21)
        theta_g = params(GEN_SPEC, 22)
        z = rng.normal(size=(4, 2))
        X = rng.normal(size=(4, 3))
        _, single = grad_disc(theta_d, z, X, None, theta_g, PRIOR, cfg)
        marginal = marginal_grad_disc(theta_d, [z], X, None, [theta_g], PRIOR, cfg)
        np.testing.assert_allclose(marginal.values, single.values, rtol=1e-12)


class TestGradientFiniteDifferences:
    """Central differences of the value functions against the backprop path."""

    @pytest.mark.parametrize("seed", range(10))
    def test_gen_unsup(self, seed):
        rng = np.random.default_rng(200 + seed)
        cfg = cfg_unsup()
        theta_g = params(GEN_SPEC, 300 + seed)
        theta_d = params(DISC_SPEC, 400 + seed)
        z = rng.normal(size=(4, 2))
        _, grad = grad_gen(theta_g, z, theta_d, PRIOR, cfg)

        def f(values):
            return log_cond_gen_unsup(ParamVector(values, GEN_SPEC), z, theta_d, PRIOR, cfg)

        fd = central_difference(f, theta_g.values)
        bad = sum(relative_error(fd[i], grad.values[i]) > 1e-4 for i in fd)
        assert bad <= max(1, int(0.01 * len(fd)))

    @pytest.mark.parametrize("seed", range(10))
    def test_disc_semi(self, seed):
        rng = np.random.default_rng(500 + seed)
        cfg = cfg_semi()
        theta_g = params(GEN_SPEC, 600 + seed)
        theta_d = params(DISC_SEMI_SPEC, 700 + seed)
        z = rng.normal(size=(4, 2))
        X = rng.normal(size=(4, 3))
        labeled = (rng.normal(size=(3, 3)), np.array([1, 3, 4]))
        _, grad = grad_disc(theta_d, z, X, labeled, theta_g, PRIOR, cfg)

        def f(values):
            return log_cond_disc_semi(ParamVector(values, DISC_SEMI_SPEC), z, X, labeled,
                                      theta_g, PRIOR, cfg)

        fd = central_difference(f, theta_d.values)
        bad = sum(relative_error(fd[i], grad.values[i]) > 1e-4 for i in fd)
        assert bad <= max(1, int(0.01 * len(fd)))

    def test_marginal_gen_matches_summed_finite_differences(self, rng):
        cfg = cfg_unsup(J_g=2, J_d=1)
        theta_g = params(GEN_SPEC, 23)
        theta_d = params(DISC_SPEC, 24)
        zs = [rng.normal(size=(4, 2)), rng.normal(size=(4, 2))]
        marginal = marginal_grad_gen(theta_g, zs, [theta_d], PRIOR, cfg)

        def f(values):
            p = ParamVector(values, GEN_SPEC)
            return sum(log_cond_gen_unsup(p, z, theta_d, PRIOR, cfg) for z in zs)

        fd = central_difference(f, theta_g.values)
        bad = sum(relative_error(fd[i], marginal.values[i]) > 1e-4 for i in fd)
        assert bad <= max(1, int(0.01 * len(fd)))


class TestStructuralProperties:
    def test_additivity_likelihood_plus_prior(self, rng):
        # with an essentially flat prior the value is the rescaled likelihood
        # plus the prior constant: subtracting log_prior isolates the likelihood
        flat = PriorSpec(sigma_g=1e8, sigma_d=1e8)
        cfg = cfg_unsup()
        theta_g = params(GEN_SPEC, 25)
        theta_d = params(DISC_SPEC, 26)
        z = rng.normal(size=(4, 2))
        value = log_cond_gen_unsup(theta_g, z, theta_d, flat, cfg)
        like = value - log_prior(theta_g, flat.sigma_g)
        d = forward(theta_d, forward(theta_g, z))
        np.testing.assert_allclose(like, (cfg.N / cfg.n_g) * np.log(d).sum(), rtol=1e-8)

    def test_sigmoid_softmax_equivalence(self, rng):
        """A 2-logit softmax discriminator with first logit pinned at zero is
        the sigmoid discriminator: the four objectives must coincide."""
        # sigmoid D: single output row w, b
        disc_sig_spec = NetworkSpec((3, 1), output_head="sigmoid")
        w = rng.normal(size=3)
        b = rng.normal()
        theta_sig = ParamVector(np.concatenate([w, [b]]), disc_sig_spec)

        # softmax D with logits (0, w.x + b): column 0 zero, column 1 = w, b
        disc_soft_spec = NetworkSpec((3, 2), output_head="softmax")
        values = np.zeros(disc_soft_spec.param_count())
        weights = np.zeros((3, 2))
        weights[:, 1] = w
        values[:6] = weights.ravel()
        values[6:] = [0.0, b]
        theta_soft = ParamVector(values, disc_soft_spec)

        theta_g = params(GEN_SPEC, 27)
        z = rng.normal(size=(4, 2))
        X = rng.normal(size=(4, 3))
        cfg_u = cfg_unsup()
        cfg_s = PosteriorConfig(N=40, mode="semi_supervised", K=1, n_g=4, n_d=4)

        g_u = log_cond_gen_unsup(theta_g, z, theta_sig, PRIOR, cfg_u) - log_prior(theta_g, 1.0)
        g_s = log_cond_gen_semi(theta_g, z, theta_soft, PRIOR, cfg_s) - log_prior(theta_g, 1.0)
        np.testing.assert_allclose(g_u, g_s, atol=1e-10)

        d_u = log_cond_disc_unsup(theta_sig, z, X, theta_g, PRIOR, cfg_u) \
            - log_prior(theta_sig, 1.0)
        d_s = log_cond_disc_semi(theta_soft, z, X, None, theta_g, PRIOR, cfg_s) \
            - log_prior(theta_soft, 1.0)
        np.testing.assert_allclose(d_u, d_s, atol=1e-10)

    def test_config_validation(self):
        with pytest.raises(ConfigurationError):
            PosteriorConfig(N=10, mode="semi_supervised", K=0, n_d=4)
        with pytest.raises(ConfigurationError):
            PosteriorConfig(N=2, n_d=4)
        with pytest.raises(ConfigurationError):
            PosteriorConfig(N=10, n_g=0)
