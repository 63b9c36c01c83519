"""Stochastic Gradient Hamiltonian Monte Carlo in ascent form.

One step refreshes the momentum with friction ``alpha``, the scaled
log-posterior gradient, and injected noise of covariance ``2 alpha eta I``,
then moves the position by the new momentum:

    v' = (1 - alpha) v + eta * grad + n,    n ~ N(0, 2 alpha eta I)
    theta' = theta + v'

With the noise disabled this is heavy-ball gradient ascent, and with
``alpha = 1`` plain gradient ascent: the degenerate mode used for MAP
training.  Burn-in uses bias-corrected Adam (ascent) instead; the learning
rate afterwards decays as ``gamma / d`` in the number of distinct real
datapoints seen, bottoming out at ``gamma / N``.

The discretization-noise estimate of the underlying dynamics is taken as
zero (friction dominates), which restricts use to small step sizes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericError
from .rng import substream


@dataclass(frozen=True)
class SGHMCConfig:
    """Sampler constants.

    ``gamma`` is the learning-rate numerator (``eta = gamma / d``);
    ``burn_in_iters`` counts iterations driven by Adam before sampling
    starts; ``noise_enabled=False`` turns the sampler into a MAP optimizer.
    """

    alpha: float = 0.01
    gamma: float = 1.0
    burn_in_iters: int = 5000
    adam_lr: float = 1e-3
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    noise_enabled: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigurationError(f"friction alpha must be in (0, 1], got {self.alpha}")
        if self.gamma <= 0:
            raise ConfigurationError(f"gamma must be positive, got {self.gamma}")
        if self.burn_in_iters < 0:
            raise ConfigurationError(f"burn_in_iters must be >= 0, got {self.burn_in_iters}")


@dataclass
class SGHMCState:
    """Per-chain mutable sampler state."""

    v: np.ndarray
    step: int = 0
    d_seen: int = 0
    adam_m: np.ndarray = field(default=None)
    adam_v: np.ndarray = field(default=None)

    @classmethod
    def fresh(cls, dim: int) -> "SGHMCState":
        return cls(v=np.zeros(dim), adam_m=np.zeros(dim), adam_v=np.zeros(dim))

    def phase(self, burn_in_iters: int) -> str:
        return "burn_in" if self.step < burn_in_iters else "sghmc"

    def copy(self) -> "SGHMCState":
        return SGHMCState(self.v.copy(), self.step, self.d_seen,
                          self.adam_m.copy(), self.adam_v.copy())


def lr_schedule(gamma: float, d_seen: int, N: int) -> float:
    """Learning rate ``gamma / d``, guarded at d=0 and capped at ``gamma / N``."""
    if gamma <= 0:
        raise ConfigurationError(f"gamma must be positive, got {gamma}")
    return gamma / max(min(d_seen, N), 1)


def _check_grad(grad: np.ndarray):
    if not np.isfinite(grad).all():
        raise NumericError("non-finite gradient")


def sghmc_step(theta: np.ndarray, state: SGHMCState, grad: np.ndarray,
               cfg: SGHMCConfig, eta: float, rng: np.random.Generator):
    """One momentum-refresh-then-move update; returns (theta', state')."""
    if eta <= 0:
        raise ConfigurationError(f"learning rate must be positive, got {eta}")
    _check_grad(grad)
    v = (1.0 - cfg.alpha) * state.v + eta * grad
    if cfg.noise_enabled:
        v = v + rng.standard_normal(theta.shape) * np.sqrt(2.0 * cfg.alpha * eta)
    theta_new = theta + v
    new_state = SGHMCState(v, state.step + 1, state.d_seen, state.adam_m, state.adam_v)
    return theta_new, new_state


def adam_step(theta: np.ndarray, state: SGHMCState, grad: np.ndarray, cfg: SGHMCConfig):
    """One bias-corrected adaptive-moment ascent step; returns (theta', state')."""
    _check_grad(grad)
    t = state.step + 1
    m = cfg.adam_beta1 * state.adam_m + (1.0 - cfg.adam_beta1) * grad
    v = cfg.adam_beta2 * state.adam_v + (1.0 - cfg.adam_beta2) * grad * grad
    m_hat = m / (1.0 - cfg.adam_beta1 ** t)
    v_hat = v / (1.0 - cfg.adam_beta2 ** t)
    theta_new = theta + cfg.adam_lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
    new_state = SGHMCState(state.v, t, state.d_seen, m, v)
    return theta_new, new_state


@dataclass
class SamplerRun:
    """Post-burn-in trajectory of a known-target validation run."""

    samples: np.ndarray  # steps x dim
    mean: np.ndarray
    cov: np.ndarray


def sample_known_posterior(logdensity, steps: int, cfg: SGHMCConfig,
                           theta0: np.ndarray) -> SamplerRun:
    """Drive the sampler on a closed-form target and report its moments.

    ``logdensity(theta) -> (value, grad)`` supplies the target.  Burn-in uses
    Adam for ``cfg.burn_in_iters`` steps and is excluded from the statistics;
    ``steps`` SGHMC steps follow at the constant rate ``eta = gamma``.
    Raises NumericError if the trajectory diverges (|theta| > 1e6).
    """
    theta = np.asarray(theta0, dtype=np.float64).copy()
    state = SGHMCState.fresh(theta.size)
    rng = substream(cfg.seed, "sampler-noise")

    for _ in range(cfg.burn_in_iters):
        _, grad = logdensity(theta)
        theta, state = adam_step(theta, state, np.asarray(grad, dtype=np.float64), cfg)
        _check_diverged(theta)

    samples = np.empty((steps, theta.size))
    eta = cfg.gamma
    for i in range(steps):
        _, grad = logdensity(theta)
        theta, state = sghmc_step(theta, state, np.asarray(grad, dtype=np.float64),
                                  cfg, eta, rng)
        _check_diverged(theta)
        samples[i] = theta

    mean = samples.mean(axis=0)
    centered = samples - mean
    cov = centered.T @ centered / max(samples.shape[0] - 1, 1)
    return SamplerRun(samples=samples, mean=mean, cov=cov)


def _check_diverged(theta: np.ndarray):
    if not np.isfinite(theta).all() or np.abs(theta).max() > 1e6:
        raise NumericError("sampler trajectory diverged (|theta| > 1e6 or non-finite)")
