"""Uncertainty quantification of the normalised threshold-accept posterior.

The surrogate induces a distribution over posterior densities: every joint
sample path of the latent discrepancy mean defines one realisation.  Paths
are drawn once at a shared set of evaluation points (a quadrature grid in low
dimension, thinned MCMC draws from a quantile-surface instrumental otherwise)
and converted into one normalised weight row per path.  Moments and marginal
densities of the ensemble then summarise how uncertain the posterior itself
still is.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .belief import log_unnorm_mean
from .errors import DegenerateWeightsError, DomainError
from .sampling import McmcConfig, adaptive_metropolis, midpoint_grid, thin, weighted_kde_1d
from .special import log_norm_cdf, norm_inv_cdf

__all__ = [
    "UqConfig",
    "PosteriorEnsemble",
    "MomentSummary",
    "quantify_grid",
    "quantify_is",
    "ensemble_moments",
    "ensemble_marginals",
]


@dataclass(frozen=True)
class UqConfig:
    """Settings for posterior uncertainty quantification.

    `sample_path_count` latent paths are shared by both routes.  The grid
    route uses `grid_resolution` cells per axis (p <= 2).  The IS route runs
    `is_chain_count` x `is_chain_length` MCMC steps on the instrumental whose
    unnormalised density is the `instrumental_quantile`-quantile of the
    unnormalised posterior, then thins to `thinned_count` nodes.
    """

    sample_path_count: int = 2000
    grid_resolution: int = 80
    is_chain_count: int = 15
    is_chain_length: int = 20_000
    thinned_count: int = 7500
    instrumental_quantile: float = 0.95

    def __post_init__(self):
        if self.sample_path_count < 2:
            raise DomainError("sample_path_count must be >= 2")
        if not 0.0 < self.instrumental_quantile < 1.0:
            raise DomainError("instrumental_quantile must lie in (0, 1)")
        kept = self.is_chain_count * (self.is_chain_length // 2)
        if self.thinned_count > kept:
            raise DomainError("thinned_count exceeds the retained MCMC draws")
        if self.grid_resolution < 2:
            raise DomainError("grid_resolution must be >= 2")


@dataclass(frozen=True)
class PosteriorEnsemble:
    """Shared evaluation points with one normalised weight row per path."""

    points: np.ndarray  # (n, p)
    weights: np.ndarray  # (s, n), each row sums to 1
    kind: str  # "grid" or "is"
    path_values: np.ndarray = None  # optional (s, n) latent draws

    def __post_init__(self):
        if np.any(self.weights < 0):
            raise DomainError("ensemble weights must be nonnegative")
        if not np.allclose(self.weights.sum(axis=1), 1.0, atol=1e-8):
            raise DomainError("every weight row must sum to 1")

    @property
    def path_count(self):
        return self.weights.shape[0]

    @property
    def ess(self):
        """Per-path effective sample sizes."""
        return 1.0 / np.sum(self.weights**2, axis=1)


def _normalise_rows(log_w):
    """Row-normalise log-weights; rows with no finite entry are an error."""
    norm = logsumexp(log_w, axis=1)
    if not np.all(np.isfinite(norm)):
        raise DegenerateWeightsError(
            "a sample path produced an all-zero weight row"
        )
    return np.exp(log_w - norm[:, None])


def quantify_grid(post, epsilon, noise_sd, prior, config, rng, keep_paths=False):
    """Posterior ensemble on a midpoint grid over the prior box (p <= 2).

    Draws the sample paths jointly at the grid nodes and turns every path
    into the normalised cell masses of its induced posterior (prior times
    acceptance probability times cell volume).
    """
    if prior.dim > 2:
        raise DomainError("grid quantification is restricted to p <= 2")
    points, cell_w = midpoint_grid(prior.bounds, config.grid_resolution)
    paths = post.sample_paths(points, config.sample_path_count, rng)
    with np.errstate(divide="ignore"):
        log_base = np.log(cell_w) + prior.log_density(points)
    log_w = log_base[None, :] + log_norm_cdf((epsilon - paths) / noise_sd)
    return PosteriorEnsemble(
        points=points,
        weights=_normalise_rows(log_w),
        kind="grid",
        path_values=paths if keep_paths else None,
    )


def quantile_surface_log_density(post, epsilon, noise_sd, prior, alpha):
    """Log unnormalised density of the instrumental used by the IS route:
    the alpha-quantile of the unnormalised posterior density at each point."""
    z = norm_inv_cdf(alpha)

    def log_density(points):
        points = np.atleast_2d(points)
        mean, sd = post.predict_marginals(points)
        arg = (sd * z - mean + epsilon) / noise_sd
        return prior.log_density(points) + log_norm_cdf(arg)

    return log_density


def quantify_is(
    post,
    epsilon,
    noise_sd,
    prior,
    config,
    rng,
    keep_paths=False,
    min_median_ess=50.0,
):
    """Posterior ensemble on thinned MCMC draws from the quantile instrumental.

    Usable in any dimension; intended for p > 2 where grids are infeasible.
    Warns when the median per-path effective sample size drops below
    `min_median_ess`, the sign that no single instrumental covers all the
    sampled posteriors well.
    """
    log_q = quantile_surface_log_density(
        post, epsilon, noise_sd, prior, config.instrumental_quantile
    )
    data_points = post.dataset.points
    start = data_points[int(np.argmax(log_q(data_points)))]
    width = float(np.mean(prior.bounds[:, 1] - prior.bounds[:, 0]))
    mcmc = McmcConfig(
        chain_count=config.is_chain_count,
        chain_length=config.is_chain_length,
        initial_scale=0.1 * width,
        adapt_start=min(200, config.is_chain_length // 4),
        init_point=start,
    )
    draws = adaptive_metropolis(log_q, mcmc, rng)
    nodes = thin(draws, min(config.thinned_count, draws.shape[0]))
    paths = post.sample_paths(nodes, config.sample_path_count, rng)
    log_target = prior.log_density(nodes)[None, :] + log_norm_cdf(
        (epsilon - paths) / noise_sd
    )
    log_w = log_target - log_q(nodes)[None, :]
    ensemble = PosteriorEnsemble(
        points=nodes,
        weights=_normalise_rows(log_w),
        kind="is",
        path_values=paths if keep_paths else None,
    )
    median_ess = float(np.median(ensemble.ess))
    if median_ess < min_median_ess:
        warnings.warn(
            f"median per-path ESS {median_ess:.1f} below {min_median_ess:g}; "
            "the instrumental may cover the sampled posteriors poorly",
            RuntimeWarning,
        )
    return ensemble


@dataclass(frozen=True)
class MomentSummary:
    """Ensemble statistics of per-path posterior expectations and variances."""

    expectation_mean: np.ndarray  # (p,)
    expectation_lo: np.ndarray  # 2.5% over paths
    expectation_hi: np.ndarray  # 97.5% over paths
    variance_mean: np.ndarray
    variance_lo: np.ndarray
    variance_hi: np.ndarray

    @property
    def expectation_ci_width(self):
        return self.expectation_hi - self.expectation_lo

    def to_dict(self):
        return {
            "expectation_mean": self.expectation_mean.tolist(),
            "expectation_ci": [
                self.expectation_lo.tolist(),
                self.expectation_hi.tolist(),
            ],
            "variance_mean": self.variance_mean.tolist(),
            "variance_ci": [self.variance_lo.tolist(), self.variance_hi.tolist()],
        }


def ensemble_moments(ensemble):
    """Per-dimension mean and central 95% interval of the per-path posterior
    expectations and variances."""
    if ensemble.path_count < 40:
        warnings.warn(
            "fewer than 40 paths; interval endpoints are unreliable",
            RuntimeWarning,
        )
    pts = ensemble.points
    W = ensemble.weights
    expectations = W @ pts  # (s, p)
    second = W @ pts**2
    variances = np.clip(second - expectations**2, 0.0, None)
    exp_lo, exp_hi = np.percentile(expectations, [2.5, 97.5], axis=0)
    var_lo, var_hi = np.percentile(variances, [2.5, 97.5], axis=0)
    return MomentSummary(
        expectation_mean=expectations.mean(axis=0),
        expectation_lo=exp_lo,
        expectation_hi=exp_hi,
        variance_mean=variances.mean(axis=0),
        variance_lo=var_lo,
        variance_hi=var_hi,
    )


def ensemble_marginals(ensemble, dim, eval_grid):
    """Per-path marginal density curves on `eval_grid` for one dimension,
    plus pointwise central 95% bands over paths.

    Returns (curves, lower, upper) with curves of shape (paths, grid).
    """
    eval_grid = np.asarray(eval_grid, dtype=float).ravel()
    x = ensemble.points[:, dim]
    curves = np.empty((ensemble.path_count, eval_grid.size))
    for i in range(ensemble.path_count):
        curves[i] = weighted_kde_1d(x, ensemble.weights[i], eval_grid)
    lower, upper = np.percentile(curves, [2.5, 97.5], axis=0)
    return curves, lower, upper
