"""Sampler updates: schedule arithmetic, degenerate modes, noise statistics,
and moment recovery on closed-form targets."""

import numpy as np
import pytest

from bgan.errors import ConfigurationError, NumericError
from bgan.rng import substream
from bgan.sghmc import (
    SGHMCConfig,
    SGHMCState,
    adam_step,
    lr_schedule,
    sample_known_posterior,
    sghmc_step,
)


def gaussian_2d(theta):
    return -0.5 * float(theta @ theta), -theta


class TestLrSchedule:
    def test_zero_seen_guard(self):
        assert lr_schedule(2.0, 0, 1000) == 2.0

    def test_basic_decay(self):
        assert lr_schedule(2.0, 1000, 50000) == 0.002

    def test_caps_at_dataset_size(self):
        assert lr_schedule(2.0, 99999, 1000) == 2.0 / 1000

    def test_monotone_nonincreasing_and_bounded(self):
        N = 500
        etas = [lr_schedule(1.0, d, N) for d in range(0, 2 * N, 7)]
        assert all(a >= b for a, b in zip(etas, etas[1:]))
        assert min(etas) >= 1.0 / N

    def test_rejects_nonpositive_gamma(self):
        with pytest.raises(ConfigurationError):
            lr_schedule(0.0, 10, 100)


class TestSGHMCStep:
    def test_full_friction_no_noise_is_gradient_ascent(self, rng):
        # alpha = 1 wipes the momentum: v' = eta * grad exactly
        cfg = SGHMCConfig(alpha=1.0, gamma=1.0, noise_enabled=False, burn_in_iters=0)
        theta = rng.normal(size=8)
        state = SGHMCState.fresh(8)
        state.v[:] = rng.normal(size=8)  # stale momentum must not matter
        eta = 0.01
        trajectory = [theta.copy()]
        ref = theta.copy()
        for step in range(20):
            grad = -trajectory[-1]
            theta_new, state = sghmc_step(trajectory[-1], state, grad, cfg, eta,
                                          substream(0, "unused", step))
            trajectory.append(theta_new)
            ref = ref + eta * (-ref)
            assert np.array_equal(theta_new, ref)

    def test_zero_gradient_zero_momentum_fixed_point(self):
        cfg = SGHMCConfig(alpha=0.5, gamma=1.0, noise_enabled=False, burn_in_iters=0)
        theta = np.array([1.0, -2.0])
        theta_new, _ = sghmc_step(theta, SGHMCState.fresh(2), np.zeros(2), cfg, 0.1,
                                  substream(0, "x"))
        assert np.array_equal(theta_new, theta)

    def test_injected_noise_variance(self):
        # empirical per-coordinate variance of the kick over 1e5 draws
        alpha, eta = 0.2, 0.05
        cfg = SGHMCConfig(alpha=alpha, gamma=1.0, noise_enabled=True, burn_in_iters=0)
        theta = np.zeros(100000)
        state = SGHMCState.fresh(theta.size)
        theta_new, _ = sghmc_step(theta, state, np.zeros_like(theta), cfg, eta,
                                  substream(3, "noise-check"))
        var = theta_new.var()
        assert abs(var - 2 * alpha * eta) < 0.02 * 2 * alpha * eta

    def test_heavy_ball_equivalence_without_noise(self, rng):
        # noise off: the trajectory is classical momentum ascent
        alpha, eta = 0.3, 0.02
        cfg = SGHMCConfig(alpha=alpha, gamma=1.0, noise_enabled=False, burn_in_iters=0)
        theta = rng.normal(size=5)
        state = SGHMCState.fresh(5)
        ref_theta, ref_v = theta.copy(), np.zeros(5)
        for step in range(30):
            grad = -theta
            theta, state = sghmc_step(theta, state, grad, cfg, eta, substream(0, "n", step))
            ref_v = (1 - alpha) * ref_v + eta * (-ref_theta)
            ref_theta = ref_theta + ref_v
            assert np.array_equal(theta, ref_theta)

    def test_determinism_same_seed(self, rng):
        cfg = SGHMCConfig(alpha=0.1, gamma=1.0, noise_enabled=True, burn_in_iters=0)
        theta0 = rng.normal(size=4)

        def run():
            theta = theta0.copy()
            state = SGHMCState.fresh(4)
            for step in range(50):
                theta, state = sghmc_step(theta, state, -theta, cfg, 0.01,
                                          substream(9, "kick", step))
            return theta

        assert np.array_equal(run(), run())

    def test_rejects_bad_eta_and_nonfinite_grad(self):
        cfg = SGHMCConfig(alpha=0.5, gamma=1.0, noise_enabled=False, burn_in_iters=0)
        state = SGHMCState.fresh(2)
        with pytest.raises(ConfigurationError):
            sghmc_step(np.zeros(2), state, np.zeros(2), cfg, 0.0, substream(0, "a"))
        with pytest.raises(NumericError):
            sghmc_step(np.zeros(2), state, np.array([np.nan, 0.0]), cfg, 0.1, substream(0, "a"))


class TestAdamStep:
    def test_zero_gradient_from_fresh_state(self):
        cfg = SGHMCConfig(burn_in_iters=10)
        theta = np.array([0.3, -0.7])
        theta_new, _ = adam_step(theta, SGHMCState.fresh(2), np.zeros(2), cfg)
        assert np.array_equal(theta_new, theta)

    def test_constant_gradient_approaches_lr_times_sign(self):
        cfg = SGHMCConfig(adam_lr=1e-3, burn_in_iters=10)
        g = np.array([2.5, -0.04])
        theta = np.zeros(2)
        state = SGHMCState.fresh(2)
        prev = theta.copy()
        for _ in range(2000):
            prev = theta.copy()
            theta, state = adam_step(theta, state, g, cfg)
        step = theta - prev
        np.testing.assert_allclose(step, cfg.adam_lr * np.sign(g), rtol=1e-3)

    def test_single_step_matches_independent_reimplementation(self, rng):
        cfg = SGHMCConfig(adam_lr=2e-3, adam_beta1=0.5, adam_beta2=0.999,
                          adam_eps=1e-8, burn_in_iters=10)
        theta = rng.normal(size=6)
        g = rng.normal(size=6)
        theta_new, state = adam_step(theta, SGHMCState.fresh(6), g, cfg)

        m = (1 - 0.5) * g
        v = (1 - 0.999) * g * g
        m_hat = m / (1 - 0.5)
        v_hat = v / (1 - 0.999)
        expected = theta + 2e-3 * m_hat / (np.sqrt(v_hat) + 1e-8)
        np.testing.assert_allclose(theta_new, expected, atol=1e-12)
        assert state.step == 1

    def test_multi_step_matches_straight_line_replay(self):
        cfg = SGHMCConfig(adam_lr=1e-3, burn_in_iters=10)
        rng = np.random.default_rng(42)
        start = rng.normal(size=4)
        grads = [rng.normal(size=4) for _ in range(5)]

        theta = start.copy()
        state = SGHMCState.fresh(4)
        for g in grads:
            theta, state = adam_step(theta, state, g, cfg)

        b1, b2 = cfg.adam_beta1, cfg.adam_beta2
        cur = start.copy()
        m = np.zeros(4)
        v = np.zeros(4)
        for t, g in enumerate(grads, start=1):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            cur = cur + cfg.adam_lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + cfg.adam_eps)
        np.testing.assert_allclose(theta, cur, atol=1e-12)


class TestKnownPosterior:
    def test_standard_gaussian_moments(self):
        cfg = SGHMCConfig(alpha=0.1, gamma=1e-3, burn_in_iters=2000,
                          noise_enabled=True, seed=7)
        run = sample_known_posterior(gaussian_2d, 200000, cfg, np.array([3.0, -3.0]))
        assert np.abs(run.mean).max() < 0.05
        np.testing.assert_allclose(np.diag(run.cov), 1.0, rtol=0.10)

    def test_bimodal_mixture_mixes(self):
        mu, s2 = 2.0, 0.64

        def bimodal(theta):
            x = theta[0]
            la = -0.5 * (x - mu) ** 2 / s2
            lb = -0.5 * (x + mu) ** 2 / s2
            m = max(la, lb)
            w = np.exp(la - m) + np.exp(lb - m)
            ga = np.exp(la - m) / w
            gb = np.exp(lb - m) / w
            grad = ga * (-(x - mu) / s2) + gb * (-(x + mu) / s2)
            return m + np.log(0.5 * w), np.array([grad])

        cfg = SGHMCConfig(alpha=0.3, gamma=1e-2, burn_in_iters=1000,
                          noise_enabled=True, seed=11)
        run = sample_known_posterior(bimodal, 200000, cfg, np.array([1.5]))
        signs = np.sign(run.samples[:, 0])
        changes = int((signs[1:] != signs[:-1]).sum())
        assert changes >= 10
        # both modes visited
        assert run.samples.max() > 1.0 and run.samples.min() < -1.0

    def test_noise_off_converges_to_mode(self):
        cfg = SGHMCConfig(alpha=0.5, gamma=1e-2, burn_in_iters=0,
                          noise_enabled=False, seed=0)
        run = sample_known_posterior(gaussian_2d, 5000, cfg, np.array([4.0, -2.0]))
        assert np.abs(run.samples[-1]).max() < 1e-6

    def test_divergence_raises(self):
        def runaway(theta):
            return float(theta @ theta), 2.0 * theta  # ascending an unbounded bowl

        cfg = SGHMCConfig(alpha=0.5, gamma=1.0, burn_in_iters=0,
                          noise_enabled=False, seed=0)
        with pytest.raises(NumericError):
            sample_known_posterior(runaway, 10000, cfg, np.array([1.0, 1.0]))


class TestConfigValidation:
    def test_alpha_bounds(self):
        with pytest.raises(ConfigurationError):
            SGHMCConfig(alpha=0.0)
        with pytest.raises(ConfigurationError):
            SGHMCConfig(alpha=1.5)

    def test_phase_from_step(self):
        state = SGHMCState.fresh(3)
        assert state.phase(5) == "burn_in"
        state.step = 5
        assert state.phase(5) == "sghmc"
