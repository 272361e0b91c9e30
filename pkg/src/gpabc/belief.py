"""Pointwise belief quantities of the unnormalised threshold-accept posterior.

Under the surrogate, the latent discrepancy mean at a point is Gaussian with
mean `mean` and sd `sd`, observations add independent Gaussian noise with sd
`noise_sd`, and a simulation is accepted when its discrepancy falls below
`epsilon`.  The unnormalised posterior density at the point is then the prior
density times the (random) acceptance probability; its mean, median,
quantiles, variance and mean absolute deviation are available in closed form
via the Gaussian cdf and Owen's T function.

All fields of `ThresholdedBelief` may be scalars or broadcastable arrays, so
the same code path serves both the scalar oracle tests and vectorised grid /
importance-sampling integration.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .special import log_norm_cdf, norm_cdf, norm_inv_cdf, owen_t

__all__ = [
    "ThresholdedBelief",
    "threshold_margin",
    "unnorm_mean",
    "unnorm_median",
    "unnorm_quantile",
    "unnorm_variance",
    "unnorm_mad",
    "true_unnorm_density",
    "log_unnorm_mean",
    "log_unnorm_median",
]


@dataclass(frozen=True)
class ThresholdedBelief:
    """Acceptance threshold, noise level and surrogate state at point(s)."""

    epsilon: float
    noise_sd: float
    prior_density: np.ndarray
    mean: np.ndarray
    sd: np.ndarray

    def __post_init__(self):
        if not np.all(np.asarray(self.noise_sd) > 0):
            raise DomainError("noise_sd must be > 0")
        if np.any(np.asarray(self.sd) < 0):
            raise DomainError("surrogate sd must be >= 0")
        if np.any(np.asarray(self.prior_density) < 0):
            raise DomainError("prior density must be >= 0")


def threshold_margin(belief):
    """Standardised threshold excess (eps - mean) / sqrt(noise_var + sd^2)."""
    total_sd = np.sqrt(belief.noise_sd**2 + np.asarray(belief.sd) ** 2)
    return (belief.epsilon - np.asarray(belief.mean)) / total_sd


def unnorm_mean(belief):
    """Mean of the unnormalised posterior density: prior * Phi(margin)."""
    return belief.prior_density * norm_cdf(threshold_margin(belief))


def unnorm_median(belief):
    """Marginal median: prior * Phi((eps - mean) / noise_sd)."""
    return belief.prior_density * norm_cdf(
        (belief.epsilon - np.asarray(belief.mean)) / belief.noise_sd
    )


def unnorm_quantile(belief, alpha):
    """alpha-quantile: prior * Phi((sd * Phi^{-1}(alpha) - mean + eps) / noise_sd)."""
    z = norm_inv_cdf(alpha)
    arg = (np.asarray(belief.sd) * z - np.asarray(belief.mean) + belief.epsilon) / (
        belief.noise_sd
    )
    return belief.prior_density * norm_cdf(arg)


def unnorm_variance(belief):
    """Pointwise variance of the unnormalised posterior density.

    prior^2 * [Phi(a) Phi(-a) - 2 T(a, noise_sd / sqrt(noise_var + 2 sd^2))]
    with a the standardised threshold margin.  Clamped at zero; the bracket
    can only go negative by floating-point rounding (it vanishes at sd = 0
    through the identity T(h, 1) = Phi(h) Phi(-h) / 2).
    """
    a = threshold_margin(belief)
    sd2 = np.asarray(belief.sd) ** 2
    slope = belief.noise_sd / np.sqrt(belief.noise_sd**2 + 2.0 * sd2)
    bracket = norm_cdf(a) * norm_cdf(-a) - 2.0 * owen_t(a, slope)
    return np.asarray(belief.prior_density) ** 2 * np.clip(bracket, 0.0, None)


def unnorm_mad(belief):
    """Pointwise mean absolute deviation around the median.

    2 * prior * T(a, sd / noise_sd) with a the standardised threshold margin.
    """
    a = threshold_margin(belief)
    return 2.0 * np.asarray(belief.prior_density) * owen_t(
        a, np.asarray(belief.sd) / belief.noise_sd
    )


def true_unnorm_density(f_value, epsilon, noise_sd, prior_density):
    """Unnormalised posterior density for a known latent value f.

    prior * Phi((eps - f) / noise_sd); the acceptance probability of a
    simulation whose discrepancy is Gaussian around f with sd `noise_sd`.
    """
    if not np.all(np.asarray(noise_sd) > 0):
        raise DomainError("noise_sd must be > 0")
    return np.asarray(prior_density) * norm_cdf(
        (epsilon - np.asarray(f_value)) / noise_sd
    )


def log_unnorm_mean(log_prior_density, mean, sd, epsilon, noise_sd):
    """Log of `unnorm_mean` from log-prior values; stable deep in the tails."""
    a = (epsilon - np.asarray(mean)) / np.sqrt(noise_sd**2 + np.asarray(sd) ** 2)
    return np.asarray(log_prior_density) + log_norm_cdf(a)


def log_unnorm_median(log_prior_density, mean, sd, epsilon, noise_sd):
    """Log of `unnorm_median` from log-prior values."""
    del sd  # the median does not depend on the surrogate sd
    return np.asarray(log_prior_density) + log_norm_cdf(
        (epsilon - np.asarray(mean)) / noise_sd
    )
