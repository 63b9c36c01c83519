"""Bayesian model averaging over collected discriminator samples.

Each stored discriminator defines a (K+1)-way class distribution whose
class 0 means "generated"; at test time that class is excluded by
renormalizing over classes 1..K, and the per-sample distributions are
averaged with equal weight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DataError
from .net import ParamVector, forward


@dataclass(frozen=True)
class Predictor:
    """A committee of discriminator weight samples sharing one architecture."""

    disc_samples: tuple
    K: int

    def __post_init__(self):
        samples = tuple(self.disc_samples)
        object.__setattr__(self, "disc_samples", samples)
        if not samples:
            raise ConfigurationError("predictor needs at least one discriminator sample")
        spec = samples[0].spec
        if any(p.spec != spec for p in samples):
            raise ConfigurationError("all discriminator samples must share one architecture")
        if spec.output_head != "softmax" or spec.out_dim != self.K + 1:
            raise ConfigurationError(
                f"predictor needs a {self.K + 1}-way softmax head, got "
                f"{spec.out_dim}-way {spec.output_head}")

    @property
    def spec(self):
        return self.disc_samples[0].spec


def _single_probs(theta_d: ParamVector, X: np.ndarray, K: int) -> np.ndarray:
    s = forward(theta_d, X)
    real = s[:, 1:]
    denom = np.maximum(real.sum(axis=1, keepdims=True), 1e-300)
    return real / denom


def predict_bma(predictor: Predictor, X) -> np.ndarray:
    """Average the per-sample class distributions; rows are distributions over 1..K."""
    X = np.asarray(X, dtype=np.float64)
    total = np.zeros((X.shape[0], predictor.K))
    for theta_d in predictor.disc_samples:
        total += _single_probs(theta_d, X, predictor.K)
    return total / len(predictor.disc_samples)


def test_error(predictor: Predictor, X, y) -> tuple:
    """Misclassification rate and count under argmax of the model average.

    Ties break toward the smallest class index.  Labels must lie in 1..K.
    """
    y = np.asarray(y, dtype=np.int64)
    if y.size and (y.min() < 1 or y.max() > predictor.K):
        raise DataError(f"labels must lie in [1, {predictor.K}]")
    probs = predict_bma(predictor, X)
    pred = probs.argmax(axis=1) + 1
    wrong = int((pred != y).sum())
    return wrong / y.size, wrong
