"""Closed-form conditional moments for the bias-corrected subsample score.

For univariate families the correction needs the moments
``kappa_k = E(y^k |y - mu_tilde| | x)`` (k = 0, 1, 2) of the response
distribution at the current coefficients, with ``mu_tilde`` the mean
predicted by the pilot.  Binary responses give two-term sums; Poisson
responses reduce to Poisson CDF evaluations.  The multi-class analogue is
a per-class log offset ``g`` added to the linear predictors before the
softmax.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special as sps

__all__ = [
    "ConditionalMoments",
    "MultiClassAdjustment",
    "binary_kappas",
    "poisson_cdf",
    "poisson_q",
    "poisson_kappas",
    "multiclass_adjustment",
    "adjusted_class_probabilities",
]


@dataclass(frozen=True)
class ConditionalMoments:
    """kappa0 = E|y-mu~|, kappa1 = E(y|y-mu~|), kappa2 = E(y^2|y-mu~|), given x."""

    kappa0: np.ndarray
    kappa1: np.ndarray
    kappa2: np.ndarray

    @property
    def conditional_mean(self) -> np.ndarray:
        """Mean of y under the |y - mu~|-tilted conditional distribution."""
        return self.kappa1 / self.kappa0

    @property
    def conditional_second_moment_gap(self) -> np.ndarray:
        """kappa2/kappa0 - (kappa1/kappa0)^2; nonnegative by Cauchy-Schwarz."""
        ratio = self.kappa1 / self.kappa0
        return self.kappa2 / self.kappa0 - ratio**2


def binary_kappas(p_beta, p_plt) -> ConditionalMoments:
    """Moments for a 0/1 response; both arguments are success probabilities.

    Enumerating y in {0,1}: kappa0 = p + p~ - 2 p p~ and
    kappa1 = kappa2 = p (1 - p~).
    """
    p_beta = np.asarray(p_beta, dtype=float)
    p_plt = np.asarray(p_plt, dtype=float)
    kappa0 = p_beta + p_plt - 2.0 * p_beta * p_plt
    kappa1 = p_beta * (1.0 - p_plt)
    return ConditionalMoments(kappa0, kappa1, kappa1)


# F(m; mu) = 1 to double precision far above the upper Poisson tail; capping
# the argument there keeps the incomplete-gamma evaluation cheap and exact
# even when a wild pilot produces m ~ 1e300.
def _tail_cap(mu: np.ndarray) -> np.ndarray:
    return mu + 40.0 * np.sqrt(mu) + 1000.0


def poisson_cdf(m, mu):
    """Poisson CDF F(m; mu) with F = 0 for m < 0.

    Evaluated through the regularized upper incomplete gamma function,
    which is what ``scipy.special.pdtr`` computes; accurate to ~1e-14
    relative over the ranges used here.
    """
    m = np.asarray(m, dtype=float)
    mu = np.asarray(mu, dtype=float)
    m, mu = np.broadcast_arrays(m, mu)
    out = np.zeros(m.shape, dtype=float)
    valid = m >= 0
    if np.any(valid):
        mv = np.minimum(np.floor(m[valid]), _tail_cap(mu[valid]))
        out[valid] = sps.pdtr(mv, mu[valid])
    if out.ndim == 0:
        return float(out)
    return out


def poisson_q(m, k: int, mu):
    """Truncated Poisson moment sum_{y=0}^{m} y^k e^{-mu} mu^y / y!.

    ``m < 0`` returns 0 (empty sum); ``k`` must be one of 0, 1, 2, 3, the
    orders needed by the moment formulas.
    """
    if k not in (0, 1, 2, 3):
        raise ValueError(f"k must be in 0..3, got {k}")
    mu = np.asarray(mu, dtype=float)
    m = np.asarray(m, dtype=float)
    if k == 0:
        return poisson_cdf(m, mu)
    if k == 1:
        return mu * poisson_cdf(m - 1, mu)
    if k == 2:
        return mu * poisson_cdf(m - 1, mu) + mu**2 * poisson_cdf(m - 2, mu)
    return (
        mu * poisson_cdf(m - 1, mu)
        + 3.0 * mu**2 * poisson_cdf(m - 2, mu)
        + mu**3 * poisson_cdf(m - 3, mu)
    )


def poisson_kappas(mu, mu_tilde) -> ConditionalMoments:
    """Closed-form moments for a Poisson response.

    With m = floor(mu_tilde) and F the Poisson CDF at mean ``mu``:

        kappa0 = 2 mu~ F(m)   - 2 mu F(m-1) + mu - mu~
        kappa1 = 2 mu (mu~-1) F(m-1) - 2 mu^2 F(m-2) + mu + mu^2 - mu mu~
        kappa2 = kappa1 + mu^2 (mu~-2) {2 F(m-2) - 1} - 2 mu^3 F(m-3) + mu^3
    """
    mu = np.asarray(mu, dtype=float)
    mu_tilde = np.asarray(mu_tilde, dtype=float)
    mu, mu_tilde = np.broadcast_arrays(mu, mu_tilde)
    m = np.floor(mu_tilde)
    f0 = poisson_cdf(m, mu)
    f1 = poisson_cdf(m - 1, mu)
    f2 = poisson_cdf(m - 2, mu)
    f3 = poisson_cdf(m - 3, mu)
    kappa0 = 2.0 * mu_tilde * f0 - 2.0 * mu * f1 + mu - mu_tilde
    kappa1 = 2.0 * mu * (mu_tilde - 1.0) * f1 - 2.0 * mu**2 * f2 + mu + mu**2 - mu * mu_tilde
    kappa2 = (
        kappa1
        + mu**2 * (mu_tilde - 2.0) * (2.0 * f2 - 1.0)
        - 2.0 * mu**3 * f3
        + mu**3
    )
    return ConditionalMoments(kappa0, kappa1, kappa2)


@dataclass(frozen=True)
class MultiClassAdjustment:
    """Per-class log offsets ``g`` and the adjusted pilot class distribution.

    ``g`` satisfies exp(2 g_k) * sum_l p_l^2 = ||e_k - p||^2 where p is the
    pilot class-probability vector; adding any constant to all components
    of ``g`` leaves the adjusted probabilities unchanged.
    """

    g: np.ndarray
    p_g: np.ndarray

    def apply(self, p_beta: np.ndarray) -> np.ndarray:
        """Reweight class probabilities ``p_beta`` by exp(g) and renormalize."""
        with np.errstate(divide="ignore"):
            log_p = np.log(np.maximum(p_beta, 0.0))
        return adjusted_class_probabilities(log_p, self.g)


def adjusted_class_probabilities(log_p_or_eta: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Row-wise softmax of ``log_p_or_eta + g``; tolerates -inf entries."""
    logits = np.atleast_2d(log_p_or_eta) + np.atleast_2d(g)
    shifted = logits - logits.max(axis=1, keepdims=True)
    w = np.exp(shifted)
    out = w / w.sum(axis=1, keepdims=True)
    if np.asarray(log_p_or_eta).ndim == 1:
        return out[0]
    return out


def multiclass_adjustment(p_plt: np.ndarray) -> MultiClassAdjustment:
    """Log offsets from a pilot class-probability vector (or rows thereof).

    g_k = 0.5 * log{1 + (1 - 2 p_k) / sum_l p_l^2}.  The argument of the
    log equals ||e_k - p||^2 / sum_l p_l^2 and is nonnegative; it reaches 0
    (g = -inf) only when the pilot puts probability one on class k, in
    which case the adjusted probability of class k is exactly zero.
    """
    p = np.atleast_2d(np.asarray(p_plt, dtype=float))
    s2 = np.sum(p**2, axis=1, keepdims=True)
    with np.errstate(divide="ignore"):
        g = 0.5 * np.log((1.0 - 2.0 * p + s2) / s2)
    with np.errstate(invalid="ignore"):
        weights = p * np.exp(g)
    p_g = weights / weights.sum(axis=1, keepdims=True)
    if np.asarray(p_plt).ndim == 1:
        return MultiClassAdjustment(g[0], p_g[0])
    return MultiClassAdjustment(g, p_g)
