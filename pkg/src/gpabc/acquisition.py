"""Acquisition functions and batch construction for choosing simulation points.

Two families are provided.  The lookahead family (EIV, EIMAD) scores a whole
pending batch by the expected integrated variance / mean absolute deviation of
the unnormalised posterior density after the batch would be observed; the
integral runs over the parameter space through a prepared integration backend
(midpoint grid in low dimension, self-normalised importance samples
otherwise).  The uncertainty-sampling family (MAXV, MAXMAD) maximises the
pointwise variance / MAD, extended to batches by conditioning the pointwise
quantity on the variance reduction from already-pending points.  RAND draws
prior samples, and LCB is a confidence-bound selector kept for the
quantile-equivalence diagnostics.
"""

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import belief as bl
from .errors import DomainError, OptimizationError
from .sampling import McmcConfig, adaptive_metropolis, midpoint_grid, thin
from .special import owen_t

__all__ = [
    "AcquisitionKind",
    "IntegrationBackend",
    "CandidateBatch",
    "prepare_grid_backend",
    "prepare_is_backend",
    "pointwise_uncertainty",
    "expected_pointwise_uncertainty",
    "bayes_risk",
    "eval_expected_loss",
    "greedy_batch",
    "optimize_acquisition",
    "lcb_select",
]


class AcquisitionKind(str, enum.Enum):
    MAXV = "maxv"
    MAXMAD = "maxmad"
    EIV = "eiv"
    EIMAD = "eimad"
    RAND = "rand"
    LCB = "lcb"

    @property
    def mad_family(self):
        return self in (AcquisitionKind.MAXMAD, AcquisitionKind.EIMAD)

    @property
    def lookahead(self):
        return self in (AcquisitionKind.EIV, AcquisitionKind.EIMAD)

    @property
    def estimator(self):
        """Point estimator paired with the kind: marginal median for the MAD
        family, posterior mean for everything else."""
        return "median" if self.mad_family else "mean"


@dataclass(frozen=True)
class IntegrationBackend:
    """Quadrature nodes with cached current-posterior state.

    `quad_weights` are absolute quadrature weights: cell volumes for a grid,
    or box volume times normalised inverse-instrumental weights for
    importance sampling, so that sum(quad_weights * g(points)) approximates
    the integral of g over the box in both cases.
    """

    kind: str  # "grid" or "is"
    points: np.ndarray
    quad_weights: np.ndarray
    prior_density: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    epsilon: float
    noise_sd: float
    ess: float = None
    # node-side GP blocks, precomputed so candidate sweeps only pay the
    # candidate-side cost
    node_cache: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if np.any(self.quad_weights < 0):
            raise DomainError("quadrature weights must be nonnegative")

    @property
    def belief(self):
        return bl.ThresholdedBelief(
            epsilon=self.epsilon,
            noise_sd=self.noise_sd,
            prior_density=self.prior_density,
            mean=self.mean,
            sd=self.sd,
        )


@dataclass(frozen=True)
class CandidateBatch:
    """Points selected for one simulation batch plus selection diagnostics."""

    points: np.ndarray
    values: np.ndarray
    kind: AcquisitionKind
    iteration: int = 0

    def __post_init__(self):
        points = np.atleast_2d(np.asarray(self.points, dtype=float))
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float).ravel())
        if points.shape[0] < 1:
            raise DomainError("a batch holds at least one point")


# ---------------------------------------------------------------------------
# Pointwise acquisition values
# ---------------------------------------------------------------------------


def pointwise_uncertainty(kind, belief):
    """Current pointwise uncertainty of the unnormalised posterior density.

    Variance for the MAXV/EIV family, mean absolute deviation for the
    MAXMAD/EIMAD family.  Zero wherever the surrogate is exact (sd = 0) or
    the prior vanishes.
    """
    kind = AcquisitionKind(kind)
    if kind.mad_family:
        return bl.unnorm_mad(belief)
    return bl.unnorm_variance(belief)


def expected_pointwise_uncertainty(kind, belief, tau_sq):
    """Expected pointwise uncertainty after observing pending points whose
    effect on the predictive variance is `tau_sq`.

    With `tau_sq = 0` this reduces exactly to `pointwise_uncertainty` (via
    the identity T(h, 1) = Phi(h) Phi(-h) / 2); with `tau_sq = sd^2` the MAD
    form vanishes.  Values beyond sd^2 by more than 1e-10 are rejected.
    """
    kind = AcquisitionKind(kind)
    tau_sq = np.asarray(tau_sq, dtype=float)
    sd_sq = np.asarray(belief.sd) ** 2
    if np.any(tau_sq > sd_sq + 1e-10) or np.any(tau_sq < -1e-10):
        raise DomainError("lookahead variance reduction must lie in [0, sd^2]")
    tau_sq = np.clip(tau_sq, 0.0, sd_sq)
    a = bl.threshold_margin(belief)
    noise_var = belief.noise_sd**2
    prior = np.asarray(belief.prior_density)
    if kind.mad_family:
        slope = np.sqrt(sd_sq - tau_sq) / np.sqrt(noise_var + tau_sq)
        return 2.0 * prior * owen_t(a, slope)
    total = noise_var + sd_sq
    slope_ahead = np.sqrt((total - tau_sq) / (total + tau_sq))
    slope_floor = belief.noise_sd / np.sqrt(noise_var + 2.0 * sd_sq)
    bracket = owen_t(a, slope_ahead) - owen_t(a, slope_floor)
    return 2.0 * prior**2 * np.clip(bracket, 0.0, None)


# ---------------------------------------------------------------------------
# Integration backends
# ---------------------------------------------------------------------------


def prepare_grid_backend(post, epsilon, noise_sd, prior, resolution=50):
    """Midpoint-rule integration backend over the prior box (p <= 2)."""
    if prior.dim > 2:
        raise DomainError("grid backend is restricted to p <= 2")
    if resolution < 10:
        raise DomainError("grid resolution must be >= 10")
    points, weights = midpoint_grid(prior.bounds, resolution)
    mean, sd = post.predict_marginals(points)
    return IntegrationBackend(
        kind="grid",
        points=points,
        quad_weights=weights,
        prior_density=prior.density(points),
        mean=mean,
        sd=sd,
        epsilon=epsilon,
        noise_sd=noise_sd,
        node_cache=post.query_cache(points),
    )


def prepare_is_backend(
    post,
    epsilon,
    noise_sd,
    prior,
    kind,
    rng,
    thin_to=500,
    chain_count=4,
    chain_length=2500,
):
    """Importance-sampling backend whose instrumental is the current loss
    surface of `kind` interpreted as an unnormalised density.

    Samples the instrumental by adaptive MCMC started at the best current
    dataset point, thins to `thin_to` nodes, and weights each node by the
    normalised reciprocal of the instrumental there (truncated at the
    sqrt-rule cap to tame the weight tail); the same backend is reused for
    every point of a batch.

    Loss values computed on this backend carry the instrumental normaliser
    as an unknown positive factor: they are mutually comparable (which is
    all greedy selection needs) but not on the grid backend's absolute
    scale.  Scale-free loss ratios against the empty batch do transfer
    across backends.
    """
    kind = AcquisitionKind(kind)

    def log_instrumental(points):
        points = np.atleast_2d(points)
        mean, sd = post.predict_marginals(points)
        b = bl.ThresholdedBelief(
            epsilon=epsilon,
            noise_sd=noise_sd,
            prior_density=prior.density(points),
            mean=mean,
            sd=sd,
        )
        with np.errstate(divide="ignore"):
            return np.log(pointwise_uncertainty(kind, b))

    data_points = post.dataset.points
    start = data_points[int(np.argmax(log_instrumental(data_points)))]
    width = float(np.mean(prior.bounds[:, 1] - prior.bounds[:, 0]))
    config = McmcConfig(
        chain_count=chain_count,
        chain_length=chain_length,
        initial_scale=0.1 * width,
        adapt_start=min(200, chain_length // 4),
        init_point=start,
    )
    draws = adaptive_metropolis(log_instrumental, config, rng)
    nodes = thin(draws, min(thin_to, draws.shape[0]))
    log_q = log_instrumental(nodes)
    lw = -log_q
    lw -= np.max(lw[np.isfinite(lw)])
    w = np.exp(lw)
    w[~np.isfinite(w)] = 0.0
    w /= w.sum()
    w = np.minimum(w, np.mean(w) * np.sqrt(w.size))  # truncated-IS cap
    w /= w.sum()
    ess = float(1.0 / np.sum(w**2))
    if ess < 2.0:
        warnings.warn("importance backend is nearly degenerate (ESS < 2)",
                      RuntimeWarning)
    mean, sd = post.predict_marginals(nodes)
    return IntegrationBackend(
        kind="is",
        points=nodes,
        quad_weights=prior.volume * w,
        prior_density=prior.density(nodes),
        mean=mean,
        sd=sd,
        epsilon=epsilon,
        noise_sd=noise_sd,
        ess=ess,
        node_cache=post.query_cache(nodes),
    )


# ---------------------------------------------------------------------------
# Batch losses
# ---------------------------------------------------------------------------


def bayes_risk(kind, backend):
    """Current integrated uncertainty (no pending points) on a backend."""
    kind = AcquisitionKind(kind)
    integrand = pointwise_uncertainty(kind, backend.belief)
    return float(backend.quad_weights @ integrand)


def eval_expected_loss(kind, post, pending, backend):
    """Expected integrated variance (EIV) or MAD (EIMAD) after observing the
    pending points, approximated on the backend.

    Deterministic given the backend.  An empty pending set is allowed and
    reduces the value to the current integrated uncertainty.
    """
    kind = AcquisitionKind(kind)
    if not kind.lookahead:
        raise DomainError("expected loss is defined for EIV and EIMAD only")
    pending = np.atleast_2d(np.asarray(pending, dtype=float))
    if pending.size == 0:
        tau_sq = np.zeros(backend.points.shape[0])
    else:
        tau_sq = post.lookahead_var_reduction(backend.points, pending)
    tau_sq = np.minimum(tau_sq, np.asarray(backend.sd) ** 2)
    integrand = expected_pointwise_uncertainty(kind, backend.belief, tau_sq)
    return float(backend.quad_weights @ integrand)


class _GreedyLossEvaluator:
    """Expected loss of fixed + [candidate] for whole candidate sweeps.

    Factorises the node-side and fixed-pending blocks once; each call then
    pays only the candidate-side cost.  The variance reduction of the grown
    pending set comes from the Schur complement of its covariance block.
    """

    def __init__(self, kind, post, backend, fixed):
        self.kind = AcquisitionKind(kind)
        self.post = post
        self.backend = backend
        self.fixed = np.atleast_2d(np.asarray(fixed, dtype=float))
        node_cache = backend.node_cache
        if node_cache is None:
            node_cache = post.query_cache(backend.points)
        # The expected integrand never exceeds the current one pointwise, so
        # nodes jointly carrying under 1e-9 of the current risk cannot move
        # the ranking; drop them from the sweep.
        current = backend.quad_weights * pointwise_uncertainty(
            self.kind, backend.belief
        )
        order = np.argsort(current)[::-1]
        csum = np.cumsum(current[order])
        if csum[-1] > 0:
            keep = int(np.searchsorted(csum, (1.0 - 1e-9) * csum[-1])) + 1
            active = np.sort(order[:keep])
        else:
            active = np.arange(backend.points.shape[0])
        self.node_cache = {key: val[..., active] if key != "points" else val[active]
                           for key, val in node_cache.items()}
        self.quad_weights = backend.quad_weights[active]
        self.sd_sq_nodes = np.asarray(backend.sd)[active] ** 2
        self.noise_var = post.hyper.noise_var
        if self.fixed.shape[0]:
            self.fixed_cache = post.query_cache(self.fixed)
            (X,), _ = post.cross_cov_multi([self.node_cache], self.fixed)
            _, C_ff = post.predict(self.fixed)
            self.chol_A = cho_factor(
                C_ff + self.noise_var * np.eye(self.fixed.shape[0]), lower=True
            )
            self.AX = cho_solve(self.chol_A, X.T)  # (b, n)
            self.X = X  # (n, b)
            self.base = np.einsum("nb,bn->n", X, self.AX)
        self._belief_cols = bl.ThresholdedBelief(
            epsilon=backend.epsilon,
            noise_sd=backend.noise_sd,
            prior_density=np.asarray(backend.prior_density)[active, None],
            mean=np.asarray(backend.mean)[active, None],
            sd=np.asarray(backend.sd)[active, None],
        )

    def tau_sq(self, cands):
        """(n_nodes, n_cands) variance reduction for fixed + [c]."""
        if self.fixed.shape[0] == 0:
            (Y,), var_c = self.post.cross_cov_multi([self.node_cache], cands)
            tau = Y**2 / (var_c + self.noise_var)[None, :]
        else:
            (Y, U), var_c = self.post.cross_cov_multi(
                [self.node_cache, self.fixed_cache], cands
            )
            d = var_c + self.noise_var
            AU = cho_solve(self.chol_A, U)  # (b, m)
            schur = np.clip(d - np.einsum("bm,bm->m", U, AU), 1e-300, None)
            cross = Y - self.X @ AU
            tau = self.base[:, None] + cross**2 / schur[None, :]
        return np.clip(tau, 0.0, self.sd_sq_nodes[:, None])

    def __call__(self, cands):
        integrand = expected_pointwise_uncertainty(
            self.kind, self._belief_cols, self.tau_sq(cands)
        )
        return self.quad_weights @ integrand


# ---------------------------------------------------------------------------
# Optimisation
# ---------------------------------------------------------------------------


def _refine_batch(objective, starts, start_vals, bounds, maxiter):
    """Box-constrained local descent on several start points at once.

    Forward-difference gradients and the trial steps for every point are
    gathered into single batched objective calls; per-point step sizes adapt
    by backtracking (halve on failure, grow on success).  Only improving
    moves are accepted, so the returned values never exceed the start
    values.  Minimisation only; callers flip signs.
    """
    low, high = bounds[:, 0], bounds[:, 1]
    width = high - low
    X = starts.copy()
    fX = start_vals.copy()
    k, p = X.shape
    steps = np.full(k, 0.05)  # in units of the box width
    fd = 1e-7 * width
    stalled = 0
    for _ in range(maxiter):
        probes = X[:, None, :] + np.eye(p)[None, :, :] * fd[None, :, None]
        probes = np.clip(probes, low, high).reshape(k * p, p)
        f_probe = np.asarray(objective(probes), dtype=float).reshape(k, p)
        grad = (f_probe - fX[:, None]) / fd[None, :]
        grad = np.where(np.isfinite(grad), grad, 0.0)
        norm = np.linalg.norm(grad * width[None, :], axis=1)
        scale = np.where(norm > 0, 1.0 / np.clip(norm, 1e-300, None), 0.0)
        direction = -grad * (width[None, :] ** 2) * scale[:, None]
        trial = np.clip(X + steps[:, None] * direction, low, high)
        f_trial = np.asarray(objective(trial), dtype=float)
        better = np.isfinite(f_trial) & (f_trial < fX)
        gain = float(np.sum(np.where(better, fX - f_trial, 0.0)))
        X[better] = trial[better]
        fX[better] = f_trial[better]
        steps = np.where(better, np.minimum(steps * 1.6, 0.5), steps * 0.4)
        # descent has flattened out once successive gains are negligible
        # relative to the objective scale
        if gain <= 1e-6 * float(np.max(np.abs(fX)) + 1e-300):
            stalled += 1
            if stalled >= 2:
                break
        else:
            stalled = 0
        if np.all(steps < 1e-9):
            break
    return X, fX


def optimize_acquisition(
    objective, bounds, rng, n_random=None, n_refine=10, maximize=False, maxiter=50
):
    """Global random search followed by local refinement of the best points.

    `objective` must accept an (n, p) array and return (n,) values.  Draws
    uniform random candidates over the box (1000 for p <= 2, 2000 above),
    refines the best `n_refine` of them by batched bounded descent under
    finite-difference gradients, and returns the best point evaluated
    anywhere; ties resolve to the earliest evaluation.
    """
    bounds = np.atleast_2d(np.asarray(bounds, dtype=float))
    p = bounds.shape[0]
    if n_random is None:
        n_random = 1000 if p <= 2 else 2000
    sign = -1.0 if maximize else 1.0
    low, high = bounds[:, 0], bounds[:, 1]
    cands = low + (high - low) * rng.random((n_random, p))
    vals = sign * np.asarray(objective(cands), dtype=float)
    finite = np.isfinite(vals)
    if not np.any(finite):
        raise OptimizationError("objective is non-finite at every random point")
    vals = np.where(finite, vals, np.inf)
    order = np.argsort(vals, kind="stable")[: min(n_refine, int(finite.sum()))]

    def signed(points):
        out = sign * np.asarray(objective(points), dtype=float)
        return np.where(np.isfinite(out), out, np.inf)

    refined, refined_vals = _refine_batch(
        signed, cands[order], vals[order], bounds, maxiter
    )
    points = np.vstack([cands, refined])
    values = np.concatenate([vals, refined_vals])
    best = int(np.argmin(values))
    return points[best], float(sign * values[best])


def lcb_select(post, beta, bounds, rng=None, candidates=None):
    """Point minimising mean - beta * sd over the box.

    With explicit `candidates` the argmin is taken over them exactly
    (earliest index wins ties); otherwise global optimisation is used.
    """
    if not np.isfinite(beta):
        raise DomainError("beta must be finite")

    def objective(points):
        mean, sd = post.predict_marginals(points)
        return mean - beta * sd

    if candidates is not None:
        candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
        return candidates[int(np.argmin(objective(candidates)))]
    if rng is None:
        rng = np.random.default_rng(0)
    point, _ = optimize_acquisition(objective, bounds, rng)
    return point


# ---------------------------------------------------------------------------
# Greedy batch construction
# ---------------------------------------------------------------------------


def greedy_batch(
    kind,
    post,
    batch_size,
    *,
    prior,
    epsilon,
    noise_sd,
    rng,
    backend=None,
    iteration=0,
    n_random=None,
    n_refine=10,
    refine_maxiter=50,
):
    """Select a batch of `batch_size` points with greedy one-at-a-time search.

    EIV/EIMAD minimise the expected loss of the growing pending set on the
    supplied backend; MAXV/MAXMAD maximise the (expected) pointwise
    uncertainty given the points already pending; RAND draws i.i.d. prior
    samples.  With `batch_size` 1 every kind reduces to its sequential rule.
    """
    kind = AcquisitionKind(kind)
    if batch_size < 1:
        raise DomainError("batch_size must be >= 1")
    if kind is AcquisitionKind.LCB:
        raise DomainError("LCB is a diagnostic selector; use lcb_select")
    if kind is AcquisitionKind.RAND:
        points = prior.sample(batch_size, rng)
        return CandidateBatch(
            points=points,
            values=np.full(batch_size, np.nan),
            kind=kind,
            iteration=iteration,
        )
    if kind.lookahead and backend is None:
        raise DomainError("EIV/EIMAD need a prepared integration backend")

    dim = prior.dim
    chosen, values = [], []
    for _ in range(batch_size):
        fixed = np.asarray(chosen, dtype=float).reshape(len(chosen), dim)
        if kind.lookahead:
            objective = _GreedyLossEvaluator(kind, post, backend, fixed)

            point, value = optimize_acquisition(
                objective, prior.bounds, rng,
                n_random=n_random, n_refine=n_refine, maximize=False,
                maxiter=refine_maxiter,
            )
        else:
            def objective(cands, fixed=fixed):
                mean, sd = post.predict_marginals(cands)
                b = bl.ThresholdedBelief(
                    epsilon=epsilon,
                    noise_sd=noise_sd,
                    prior_density=prior.density(cands),
                    mean=mean,
                    sd=sd,
                )
                if fixed.shape[0] == 0:
                    return pointwise_uncertainty(kind, b)
                tau = post.lookahead_var_reduction(cands, fixed)
                return expected_pointwise_uncertainty(
                    kind, b, np.minimum(tau, sd**2)
                )

            point, value = optimize_acquisition(
                objective, prior.bounds, rng,
                n_random=n_random, n_refine=n_refine, maximize=True,
                maxiter=refine_maxiter,
            )
        clipped = prior.clip(point)
        if not np.array_equal(clipped, point):  # pragma: no cover
            warnings.warn("optimiser left the box; point clipped to bounds",
                          RuntimeWarning)
        chosen.append(clipped)
        values.append(value)
    return CandidateBatch(
        points=np.asarray(chosen),
        values=np.asarray(values),
        kind=kind,
        iteration=iteration,
    )
