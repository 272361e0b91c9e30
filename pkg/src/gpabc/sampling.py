"""Monte Carlo utilities: adaptive Metropolis MCMC, midpoint-rule grids,
self-normalised importance sampling, thinning and weighted 1-D KDE."""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateWeightsError, DomainError

__all__ = [
    "McmcConfig",
    "WeightedSamples",
    "adaptive_metropolis",
    "midpoint_grid",
    "grid_evaluate",
    "self_normalized_is",
    "thin",
    "weighted_kde_1d",
]


@dataclass(frozen=True)
class McmcConfig:
    """Settings for the adaptive random-walk Metropolis sampler.

    Chains start at `init_point` with proposal covariance
    `initial_scale^2 * I`; from step `adapt_start` onward the proposal
    covariance tracks the scaled empirical covariance of the chain history.
    The leading `burn_in` fraction of every chain is dropped.
    """

    chain_count: int = 4
    chain_length: int = 10_000
    burn_in: float = 0.5
    initial_scale: float = 1.0
    adapt_start: int = 200
    init_point: np.ndarray = None

    def __post_init__(self):
        if self.init_point is None:
            raise DomainError("init_point is required")
        object.__setattr__(
            self, "init_point", np.asarray(self.init_point, dtype=float).ravel()
        )
        if not 0.0 < self.burn_in < 1.0:
            raise DomainError("burn_in must lie in (0, 1)")
        if self.chain_length <= 2 * self.adapt_start:
            raise DomainError("chain_length must exceed 2 * adapt_start")
        if self.chain_count < 1 or self.initial_scale <= 0:
            raise DomainError("chain_count >= 1 and initial_scale > 0 required")


@dataclass(frozen=True)
class WeightedSamples:
    """Points with nonnegative weights summing to one."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        points = np.atleast_2d(np.asarray(self.points, dtype=float))
        weights = np.asarray(self.weights, dtype=float).ravel()
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)
        if points.shape[0] != weights.size:
            raise DomainError("points and weights must have equal length")
        if np.any(weights < 0) or not np.isclose(weights.sum(), 1.0, atol=1e-9):
            raise DomainError("weights must be nonnegative and sum to 1")

    @property
    def ess(self):
        """Effective sample size 1 / sum(w^2), in [1, n]."""
        return float(1.0 / np.sum(self.weights**2))


def adaptive_metropolis(log_density, config, rng):
    """Adaptive random-walk Metropolis targeting `exp(log_density)`.

    `log_density` must accept an (n, p) array of points and return (n,) log
    values; the chains advance in lockstep so every step costs one batched
    evaluation, which matters when the target involves GP predictions.

    Runs `config.chain_count` chains from independent substreams of `rng`,
    each started at `config.init_point`, with Haario-style per-chain
    empirical-covariance adaptation at scale 2.38^2/dim (plus 1e-6 I
    regularisation).  Burn-in is discarded and the chains are concatenated.
    Deterministic given the rng state; each chain consumes its own
    substream exactly as a stand-alone run would, so results do not depend
    on the lockstep schedule.  Warns if the post burn-in acceptance rate of
    any chain falls below 1%.
    """
    dim = config.init_point.size
    n_chains = config.chain_count
    length = config.chain_length
    keep = int(np.floor(config.burn_in * length))
    scale = 2.38**2 / dim
    seeds = rng.integers(0, 2**63 - 1, size=n_chains)
    chain_rngs = [np.random.default_rng(int(s)) for s in seeds]

    x = np.tile(config.init_point, (n_chains, 1))
    lx = np.asarray(log_density(x), dtype=float)
    if not np.all(np.isfinite(lx)):
        raise DomainError("log_density must be finite at the initial point")
    chol = np.tile(config.initial_scale * np.eye(dim), (n_chains, 1, 1))
    run_mean = x.copy()
    run_cov = np.zeros((n_chains, dim, dim))
    chains = np.empty((n_chains, length, dim))
    accepted = np.zeros(n_chains, dtype=int)
    eye = 1e-6 * np.eye(dim)
    for i in range(length):
        z = np.stack([r.standard_normal(dim) for r in chain_rngs])
        u = np.array([r.random() for r in chain_rngs])
        prop = x + np.einsum("cij,cj->ci", chol, z)
        lp = np.asarray(log_density(prop), dtype=float)
        with np.errstate(invalid="ignore"):
            accept = np.log(u) < lp - lx
        accept &= np.isfinite(lp)
        x[accept] = prop[accept]
        lx[accept] = lp[accept]
        if i >= keep:
            accepted += accept
        chains[:, i] = x
        # Welford-style recursion over each chain's history (the init point
        # counts as the first observation).
        n = i + 2
        delta = x - run_mean
        run_mean = run_mean + delta / n
        run_cov = run_cov * ((n - 2) / (n - 1)) + np.einsum(
            "ci,cj->cij", delta, delta
        ) / n
        if i + 1 >= config.adapt_start:
            for c in range(n_chains):
                try:
                    chol[c] = np.linalg.cholesky(scale * (run_cov[c] + eye))
                except np.linalg.LinAlgError:
                    pass  # keep the previous proposal until history improves
    rates = accepted / (length - keep)
    for c, rate in enumerate(rates):
        if rate < 0.01:
            warnings.warn(
                f"MCMC chain {c} acceptance rate {rate:.3%} below 1%; "
                "check the target scale or the proposal",
                RuntimeWarning,
            )
    return chains[:, keep:].reshape(-1, dim)


def midpoint_grid(bounds, resolution):
    """Cell midpoints and per-cell volumes of a regular grid over a box.

    Returns (points, weights) with points of shape (resolution^p, p) and the
    constant cell volume repeated in `weights`, so sum(w * f(points))
    approximates the integral of f over the box by the midpoint rule.
    """
    bounds = np.atleast_2d(np.asarray(bounds, dtype=float))
    if resolution < 2:
        raise DomainError("resolution must be >= 2")
    axes, steps = [], []
    for low, high in bounds:
        edges = np.linspace(low, high, resolution + 1)
        axes.append(0.5 * (edges[:-1] + edges[1:]))
        steps.append((high - low) / resolution)
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.column_stack([m.ravel() for m in mesh])
    cell_volume = float(np.prod(steps))
    return points, np.full(points.shape[0], cell_volume)


def grid_evaluate(fn, bounds, resolution):
    """Evaluate `fn` on the midpoint grid; returns (values, cell weights)."""
    points, weights = midpoint_grid(bounds, resolution)
    values = np.asarray(fn(points), dtype=float).ravel()
    if values.size != points.shape[0]:
        raise DomainError("fn must return one value per grid point")
    return values, weights


def self_normalized_is(points, log_target_unnorm, log_instrumental_unnorm):
    """Self-normalised importance weights for points drawn from the instrumental.

    Both log-density arrays are unnormalised values at `points`.  The weights
    are proportional to exp(log_target - log_instrumental), normalised to sum
    to one.  Raises DegenerateWeightsError when every weight underflows to
    zero or is non-finite.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    lw = np.asarray(log_target_unnorm, dtype=float) - np.asarray(
        log_instrumental_unnorm, dtype=float
    )
    lw = np.where(np.isneginf(lw), -np.inf, lw)
    finite = np.isfinite(lw)
    if not np.any(finite):
        raise DegenerateWeightsError("all importance weights are zero or non-finite")
    w = np.exp(lw - np.max(lw[finite]))
    w[~np.isfinite(w)] = 0.0
    total = w.sum()
    if total <= 0:
        raise DegenerateWeightsError("importance weights sum to zero")
    return WeightedSamples(points=points, weights=w / total)


def thin(samples, target_count):
    """Evenly strided subsample keeping order, anchored at the last element.

    With n inputs and target m, the stride is floor(n / m) and the kept
    indices are n-1, n-1-stride, ... reversed into increasing order; target
    equal to n returns the input unchanged (stride 1).
    """
    samples = np.asarray(samples)
    n = samples.shape[0]
    if not 1 <= target_count <= n:
        raise DomainError(f"target_count must lie in [1, {n}]")
    stride = n // target_count
    idx = n - 1 - stride * np.arange(target_count)
    return samples[idx[::-1]]


def weighted_kde_1d(points, weights, eval_grid):
    """Gaussian-kernel weighted density estimate on a 1-D evaluation grid.

    The bandwidth is Silverman's rule on the weighted sd with the effective
    sample size in place of n.  A zero weighted variance degenerates to a
    narrow bump around the common point and triggers a warning.
    """
    points = np.asarray(points, dtype=float).ravel()
    weights = np.asarray(weights, dtype=float).ravel()
    eval_grid = np.asarray(eval_grid, dtype=float).ravel()
    if points.size != weights.size:
        raise DomainError("points and weights must have equal length")
    total = weights.sum()
    if total <= 0:
        raise DegenerateWeightsError("weights must have positive sum")
    w = weights / total
    mean = float(np.sum(w * points))
    var = float(np.sum(w * (points - mean) ** 2))
    ess = 1.0 / np.sum(w**2)
    if var > 0:
        bandwidth = np.sqrt(var) * (4.0 / (3.0 * ess)) ** 0.2
    else:
        warnings.warn("zero weighted variance; returning a point-mass bump",
                      RuntimeWarning)
        span = eval_grid.max() - eval_grid.min()
        bandwidth = max(span, abs(mean), 1.0) * 1e-3
    z = (eval_grid[:, None] - points[None, :]) / bandwidth
    kernel = np.exp(-0.5 * z**2) / (bandwidth * np.sqrt(2.0 * np.pi))
    return kernel @ w
