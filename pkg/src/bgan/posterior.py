"""Log conditional posteriors over generator and discriminator weights.

Four objectives: unsupervised generator/discriminator (two-player game with a
sigmoid discriminator) and their semi-supervised counterparts (a (K+1)-way
softmax discriminator whose class 0 means "generated").  Each log conditional
is the sum of a minibatch log-likelihood rescaled to full-dataset weight
(factor N/n per minibatch factor, supervised term unscaled since all labeled
rows enter every evaluation) and an isotropic Gaussian log prior.

The noise variable is integrated out by simple Monte Carlo: marginal
gradients sum the single-conditional gradients over every (noise set, other
network sample) pair, including one prior-gradient contribution per pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DataError, ShapeError
from .net import PROB_FLOOR, LossSpec, ParamVector, forward, loss_grad, loss_grad_full

MODES = ("unsupervised", "semi_supervised")


@dataclass(frozen=True)
class PriorSpec:
    """Standard deviations of the isotropic Gaussian weight priors."""

    sigma_g: float = 1.0
    sigma_d: float = 1.0

    def __post_init__(self):
        if self.sigma_g <= 0 or self.sigma_d <= 0:
            raise ConfigurationError(f"prior standard deviations must be positive, got {self}")


@dataclass(frozen=True)
class PosteriorConfig:
    """Shared constants of the conditional posteriors.

    ``N`` is the total number of real datapoints (the rescaling numerator),
    ``n_g``/``n_d`` the per-set noise and real minibatch sizes, ``J_g``/``J_d``
    the simple-Monte-Carlo noise-set counts, ``K`` the class count in
    semi-supervised mode (class 0 is reserved for generated samples), and
    ``N_s`` the number of labeled rows supplied to the discriminator.
    """

    N: int
    mode: str = "unsupervised"
    n_g: int = 64
    n_d: int = 64
    K: int = 0
    N_s: int = 0
    J_g: int = 1
    J_d: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown mode {self.mode!r}")
        # K = 1 is degenerate but well defined (it reduces to the two-player
        # objective) and is exercised by the equivalence diagnostics
        if self.mode == "semi_supervised" and self.K < 1:
            raise ConfigurationError(f"semi-supervised mode needs K >= 1, got K={self.K}")
        if min(self.n_g, self.n_d, self.J_g, self.J_d) < 1:
            raise ConfigurationError("n_g, n_d, J_g, J_d must all be >= 1")
        if self.N < self.n_d:
            raise ConfigurationError(f"N={self.N} smaller than the real minibatch n_d={self.n_d}")
        if self.N_s < 0:
            raise ConfigurationError(f"N_s must be >= 0, got {self.N_s}")

    @property
    def gen_scale(self) -> float:
        return self.N / self.n_g

    @property
    def disc_scale(self) -> float:
        return self.N / self.n_d


def log_prior(params: ParamVector, sigma: float) -> float:
    """Isotropic Gaussian log density: -|theta|^2/(2 sigma^2) - (P/2) ln(2 pi sigma^2)."""
    if sigma <= 0:
        raise ConfigurationError(f"prior sigma must be positive, got {sigma}")
    v = params.values
    p = v.size
    return float(-(v @ v) / (2.0 * sigma * sigma) - 0.5 * p * np.log(2.0 * np.pi * sigma * sigma))


def grad_log_prior(params: ParamVector, sigma: float) -> np.ndarray:
    """Gradient of the Gaussian log prior: -theta / sigma^2."""
    if sigma <= 0:
        raise ConfigurationError(f"prior sigma must be positive, got {sigma}")
    return -params.values / (sigma * sigma)


def _check_noise(z: np.ndarray, cfg: PosteriorConfig) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] != cfg.n_g:
        raise ShapeError(f"noise batch must have n_g={cfg.n_g} rows, got shape {z.shape}")
    return z


def _check_labels(y: np.ndarray, K: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64)
    if y.ndim != 1:
        raise ShapeError(f"labels must be 1-D, got shape {y.shape}")
    if y.size and (y.min() < 1 or y.max() > K):
        raise DataError(f"class labels must lie in [1, {K}]")
    return y


def _gen_like_loss(cfg: PosteriorConfig) -> LossSpec:
    # probability the discriminator assigns to "real" for a generated point
    if cfg.mode == "unsupervised":
        return LossSpec.log_sigmoid()
    return LossSpec.log_softmax_rest()


def log_cond_gen_unsup(theta_g: ParamVector, z, theta_d: ParamVector,
                       prior: PriorSpec, cfg: PosteriorConfig) -> float:
    """(N/n_g) sum_i log D(G(z_i)) + log prior on the generator weights."""
    z = _check_noise(z, cfg)
    fake = forward(theta_g, z)
    d = forward(theta_d, fake)
    return cfg.gen_scale * float(np.log(d).sum()) + log_prior(theta_g, prior.sigma_g)


def log_cond_gen_semi(theta_g: ParamVector, z, theta_d: ParamVector,
                      prior: PriorSpec, cfg: PosteriorConfig) -> float:
    """(N/n_g) sum_i log(sum_{y>=1} D(G(z_i))=y) + generator log prior.

    The inner sum over real classes equals 1 - softmax_0.
    """
    z = _check_noise(z, cfg)
    _check_disc_head(theta_d, cfg)
    fake = forward(theta_g, z)
    s = forward(theta_d, fake)
    rest = np.clip(1.0 - s[:, 0], PROB_FLOOR, 1.0 - PROB_FLOOR)
    return cfg.gen_scale * float(np.log(rest).sum()) + log_prior(theta_g, prior.sigma_g)


def log_cond_disc_unsup(theta_d: ParamVector, z, X, theta_g: ParamVector,
                        prior: PriorSpec, cfg: PosteriorConfig) -> float:
    """(N/n_d) sum log D(x) + (N/n_g) sum log(1 - D(G(z))) + discriminator log prior."""
    z = _check_noise(z, cfg)
    X = np.asarray(X, dtype=np.float64)
    real = forward(theta_d, X)
    fake = forward(theta_d, forward(theta_g, z))
    real_term = cfg.disc_scale * float(np.log(real).sum())
    fake_term = cfg.gen_scale * float(np.log1p(-fake).sum())
    return real_term + fake_term + log_prior(theta_d, prior.sigma_d)


def log_cond_disc_semi(theta_d: ParamVector, z, X, labeled, theta_g: ParamVector,
                       prior: PriorSpec, cfg: PosteriorConfig) -> float:
    """Semi-supervised discriminator conditional.

    Rescaled unlabeled term (mass off class 0) + rescaled generated term
    (mass on class 0) + unscaled supervised term + log prior.  ``labeled``
    is an (X_s, y_s) pair with labels in 1..K, or None when N_s = 0.
    """
    _check_disc_head(theta_d, cfg)
    z = _check_noise(z, cfg)
    X = np.asarray(X, dtype=np.float64)
    s_real = forward(theta_d, X)
    s_fake = forward(theta_d, forward(theta_g, z))
    rest = np.clip(1.0 - s_real[:, 0], PROB_FLOOR, 1.0 - PROB_FLOOR)
    fake0 = np.clip(s_fake[:, 0], PROB_FLOOR, 1.0 - PROB_FLOOR)
    total = cfg.disc_scale * float(np.log(rest).sum())
    total += cfg.gen_scale * float(np.log(fake0).sum())
    if labeled is not None:
        X_s, y_s = labeled
        y_s = _check_labels(y_s, cfg.K)
        if y_s.size:
            s_sup = forward(theta_d, np.asarray(X_s, dtype=np.float64))
            p = np.clip(s_sup[np.arange(y_s.size), y_s], PROB_FLOOR, 1.0 - PROB_FLOOR)
            total += float(np.log(p).sum())
    return total + log_prior(theta_d, prior.sigma_d)


def _check_disc_head(theta_d: ParamVector, cfg: PosteriorConfig):
    if cfg.mode != "semi_supervised":
        return
    head = theta_d.spec.out_dim
    if head != cfg.K + 1:
        raise ConfigurationError(
            f"semi-supervised discriminator needs a {cfg.K + 1}-way softmax head, got {head}"
        )


def _check_gen_head(theta_g: ParamVector):
    # gradients are pulled back from the discriminator straight into the
    # generator logits, which requires a linear generator head
    if theta_g.spec.output_head != "linear":
        raise ConfigurationError("generator gradients require a linear output head")


def grad_gen(theta_g: ParamVector, z, theta_d: ParamVector,
             prior: PriorSpec, cfg: PosteriorConfig):
    """Value and gradient w.r.t. theta_g of the generator conditional.

    The discriminator loss gradient is pulled back through its input into the
    generator (D(G(z)) differentiated w.r.t. the generator weights).
    """
    from .net import _backward, _forward_trace  # internal reuse

    z = _check_noise(z, cfg)
    _check_disc_head(theta_d, cfg)
    _check_gen_head(theta_g)
    pre, act = _forward_trace(theta_g.spec, theta_g.values, z)
    fake = act[-1]  # generator head is linear
    like, _, dfake = loss_grad_full(theta_d, fake, _gen_like_loss(cfg))
    grad_g, _ = _backward(theta_g.spec, theta_g.values, pre, act, cfg.gen_scale * dfake)
    value = cfg.gen_scale * like + log_prior(theta_g, prior.sigma_g)
    grad = grad_g + grad_log_prior(theta_g, prior.sigma_g)
    return value, ParamVector(grad, theta_g.spec)


def grad_disc(theta_d: ParamVector, z, X, labeled, theta_g: ParamVector,
              prior: PriorSpec, cfg: PosteriorConfig):
    """Value and gradient w.r.t. theta_d of the discriminator conditional."""
    z = _check_noise(z, cfg)
    _check_disc_head(theta_d, cfg)
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] != cfg.n_d:
        raise ShapeError(f"real minibatch must have n_d={cfg.n_d} rows, got {X.shape[0]}")
    fake = forward(theta_g, z)
    value, grad = _disc_terms(theta_d, fake, X, labeled, cfg)
    value += log_prior(theta_d, prior.sigma_d)
    grad = grad + grad_log_prior(theta_d, prior.sigma_d)
    return value, ParamVector(grad, theta_d.spec)


def _disc_terms(theta_d: ParamVector, fake: np.ndarray, X: np.ndarray,
                labeled, cfg: PosteriorConfig):
    """Likelihood terms of the discriminator conditional (no prior)."""
    if cfg.mode == "unsupervised":
        real_loss = LossSpec.log_sigmoid()
        fake_loss = LossSpec.log_one_minus_sigmoid()
    else:
        real_loss = LossSpec.log_softmax_rest()
        fake_loss = LossSpec.log_softmax_class(np.zeros(fake.shape[0], dtype=np.int64))

    v_real, g_real = loss_grad(theta_d, X, real_loss)
    v_fake, g_fake = loss_grad(theta_d, fake, fake_loss)
    value = cfg.disc_scale * v_real + cfg.gen_scale * v_fake
    grad = cfg.disc_scale * g_real.values + cfg.gen_scale * g_fake.values

    if cfg.mode == "semi_supervised" and labeled is not None:
        X_s, y_s = labeled
        y_s = _check_labels(y_s, cfg.K)
        if y_s.size:
            v_sup, g_sup = loss_grad(theta_d, np.asarray(X_s, dtype=np.float64),
                                     LossSpec.log_softmax_class(y_s))
            value += v_sup
            grad = grad + g_sup.values
    return value, grad


def _stack_noise(noise_sets, cfg: PosteriorConfig) -> np.ndarray:
    sets = [_check_noise(z, cfg) for z in noise_sets]
    if not sets:
        raise ConfigurationError("need at least one noise set")
    return np.concatenate(sets, axis=0)


def marginal_grad_gen(theta_g: ParamVector, noise_sets, disc_samples,
                      prior: PriorSpec, cfg: PosteriorConfig) -> ParamVector:
    """Sum of generator-conditional gradients over all (noise set, disc sample) pairs.

    Equal-sized noise sets make the double sum separable: per discriminator
    sample one stacked backward pass covers every noise set, and the prior
    gradient enters once per pair.
    """
    from .net import _backward, _forward_trace

    stacked = _stack_noise(noise_sets, cfg)
    n_sets = len(noise_sets)
    _check_gen_head(theta_g)
    pre, act = _forward_trace(theta_g.spec, theta_g.values, stacked)
    fake = act[-1]
    loss = _gen_like_loss(cfg)
    total = np.zeros_like(theta_g.values)
    for theta_d in disc_samples:
        _check_disc_head(theta_d, cfg)
        _, _, dfake = loss_grad_full(theta_d, fake, loss)
        grad_g, _ = _backward(theta_g.spec, theta_g.values, pre, act, cfg.gen_scale * dfake)
        total += grad_g
    total += n_sets * len(disc_samples) * grad_log_prior(theta_g, prior.sigma_g)
    return ParamVector(total, theta_g.spec)


def marginal_grad_disc(theta_d: ParamVector, noise_sets, X, labeled, gen_samples,
                       prior: PriorSpec, cfg: PosteriorConfig) -> ParamVector:
    """Sum of discriminator-conditional gradients over all (noise set, gen sample) pairs.

    The real-data, supervised, and prior terms do not depend on the pair, so
    they enter with multiplicity J_d * J_g; the generated-data term is
    evaluated once per generator sample on the stacked noise sets.
    """
    stacked = _stack_noise(noise_sets, cfg)
    n_pairs = len(noise_sets) * len(gen_samples)
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] != cfg.n_d:
        raise ShapeError(f"real minibatch must have n_d={cfg.n_d} rows, got {X.shape[0]}")

    if cfg.mode == "unsupervised":
        fake_loss = LossSpec.log_one_minus_sigmoid()
        real_loss = LossSpec.log_sigmoid()
    else:
        _check_disc_head(theta_d, cfg)
        fake_loss = LossSpec.log_softmax_class(np.zeros(stacked.shape[0], dtype=np.int64))
        real_loss = LossSpec.log_softmax_rest()

    total = np.zeros_like(theta_d.values)
    for theta_g in gen_samples:
        fake = forward(theta_g, stacked)
        _, g_fake = loss_grad(theta_d, fake, fake_loss)
        total += cfg.gen_scale * g_fake.values

    _, g_real = loss_grad(theta_d, X, real_loss)
    shared = cfg.disc_scale * g_real.values
    if cfg.mode == "semi_supervised" and labeled is not None:
        X_s, y_s = labeled
        y_s = _check_labels(y_s, cfg.K)
        if y_s.size:
            _, g_sup = loss_grad(theta_d, np.asarray(X_s, dtype=np.float64),
                                 LossSpec.log_softmax_class(y_s))
            shared = shared + g_sup.values
    shared = shared + grad_log_prior(theta_d, prior.sigma_d)
    total += n_pairs * shared
    return ParamVector(total, theta_d.spec)
