"""Experiment orchestration: the batch-sequential inference loop, ground-truth
generation, total-variation metrics, repeated runs and persistence."""

import dataclasses
import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import belief as bl
from .acquisition import (
    AcquisitionKind,
    greedy_batch,
    prepare_grid_backend,
    prepare_is_backend,
)
from .errors import ConfigError, DegenerateWeightsError, DomainError, SimulatorError
from .gp import BasisSpec, DiscrepancyDataset, fit, map_hyperparameters
from .sampling import McmcConfig, adaptive_metropolis, midpoint_grid, thin, weighted_kde_1d
from .simulators import get_simulator
from .uq import UqConfig, ensemble_moments, quantify_grid, quantify_is

__all__ = [
    "ExperimentConfig",
    "GridDensity",
    "IterationRecord",
    "RunRecord",
    "RepeatSummary",
    "run_inference",
    "ground_truth",
    "tv_distance",
    "repeat_experiment",
    "simulate_batch",
    "estimator_grid_density",
    "uq_checkpoint_summaries",
    "save_run_record",
    "load_reference",
    "save_reference",
]


# ---------------------------------------------------------------------------
# Densities on grids and the TV metric
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridDensity:
    """Normalised cell masses of a density on a regular midpoint grid."""

    bounds: np.ndarray
    resolution: int
    masses: np.ndarray

    def __post_init__(self):
        bounds = np.atleast_2d(np.asarray(self.bounds, dtype=float))
        masses = np.asarray(self.masses, dtype=float).ravel()
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "masses", masses)
        if masses.size != self.resolution ** bounds.shape[0]:
            raise DomainError("mass vector size does not match the grid")
        if np.any(masses < 0):
            raise DomainError("cell masses must be nonnegative")
        total = masses.sum()
        if not total > 0 or not np.isfinite(total):
            raise DegenerateWeightsError("density is unnormalisable")
        object.__setattr__(self, "masses", masses / total)

    @classmethod
    def from_function(cls, fn, bounds, resolution):
        """Build from unnormalised density values at the grid midpoints."""
        points, _ = midpoint_grid(bounds, resolution)
        values = np.asarray(fn(points), dtype=float).ravel()
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise DegenerateWeightsError("density values must be finite and >= 0")
        return cls(bounds=bounds, resolution=resolution, masses=values)

    @property
    def points(self):
        points, _ = midpoint_grid(self.bounds, self.resolution)
        return points

    @property
    def cell_sizes(self):
        return (self.bounds[:, 1] - self.bounds[:, 0]) / self.resolution

    def sample(self, count, rng):
        """Draw points by sampling cells by mass and jittering inside them."""
        idx = rng.choice(self.masses.size, size=count, p=self.masses)
        jitter = (rng.random((count, self.bounds.shape[0])) - 0.5) * self.cell_sizes
        return self.points[idx] + jitter


def _tv_between_grids(a, b):
    if a.resolution != b.resolution or not np.allclose(a.bounds, b.bounds):
        raise DomainError("grid densities must share bounds and resolution")
    return 0.5 * float(np.abs(a.masses - b.masses).sum())


def _marginal_grid(xs, ys, lo, hi, grid_size):
    """Uniform grid over [lo, hi] refined with pooled sample quantiles, so
    narrow density features are resolved wherever the samples concentrate."""
    qs = np.linspace(0.0, 1.0, grid_size // 2)
    grid = np.concatenate([
        np.linspace(lo, hi, grid_size),
        np.quantile(xs, qs),
        np.quantile(ys, qs),
    ])
    grid = np.unique(np.clip(grid, lo, hi))
    return grid


def _tv_between_samples(xs, ys, bounds=None, grid_size=200,
                        x_weights=None, y_weights=None):
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    if xs.shape[1] != ys.shape[1]:
        raise DomainError("sample sets must share the dimension")
    p = xs.shape[1]
    if x_weights is None:
        x_weights = np.full(xs.shape[0], 1.0 / xs.shape[0])
    if y_weights is None:
        y_weights = np.full(ys.shape[0], 1.0 / ys.shape[0])
    tvs = []
    for d in range(p):
        if bounds is not None:
            lo, hi = bounds[d]
        else:
            lo = min(xs[:, d].min(), ys[:, d].min())
            hi = max(xs[:, d].max(), ys[:, d].max())
            pad = 0.05 * (hi - lo)
            lo, hi = lo - pad, hi + pad
        grid = _marginal_grid(xs[:, d], ys[:, d], lo, hi, grid_size)
        ka = weighted_kde_1d(xs[:, d], x_weights, grid)
        kb = weighted_kde_1d(ys[:, d], y_weights, grid)
        tvs.append(0.5 * float(np.trapezoid(np.abs(ka - kb), grid)))
    return float(np.clip(np.mean(tvs), 0.0, 1.0))


def tv_distance(estimate, truth, bounds=None, grid_size=200):
    """Total variation distance between two posterior representations.

    Two grid densities (p <= 2) are compared cell by cell on their shared
    grid; two sample sets are compared through the average of per-dimension
    total variation between marginal kernel density estimates.
    """
    est_grid = isinstance(estimate, GridDensity)
    tru_grid = isinstance(truth, GridDensity)
    if est_grid and tru_grid:
        return _tv_between_grids(estimate, truth)
    if est_grid or tru_grid:
        raise DomainError("cannot compare a grid density with raw samples")
    return _tv_between_samples(estimate, truth, bounds=bounds, grid_size=grid_size)


# ---------------------------------------------------------------------------
# Configuration and records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one inference run."""

    simulator: str
    acquisition: str = "eiv"
    batch_size: int = 1
    max_iterations: int = 10
    initial_design: int = None  # 10 for p <= 2, 20 above when unset
    seed: int = 0
    epsilon: float = None  # simulator reference threshold when unset
    threads: int = 1
    # acquisition integration backend
    backend_grid_resolution: int = 50
    backend_thin: int = 500
    backend_chain_count: int = 4
    backend_chain_length: int = 2500
    # final / per-iteration posterior representation
    posterior_grid_resolution: int = 100
    posterior_chain_count: int = 8
    posterior_chain_length: int = 20_000
    posterior_sample_count: int = 10_000
    # hyperparameter estimation
    map_restarts: int = 9
    map_warm_restarts: int = 2
    map_refit_every: int = 1
    map_maxiter: int = 60
    # acquisition optimiser
    optimizer_random_points: int = None  # 1000 for p <= 2, 2000 above
    optimizer_refine: int = 10
    optimizer_maxiter: int = 50
    # ground truth generation
    truth_seed: int = 321
    truth_chain_count: int = 8
    truth_chain_length: int = 25_000
    truth_proposal_frac: float = 0.15
    truth_sample_count: int = 10_000
    # posterior uncertainty quantification (desk-scale defaults)
    uq_sample_paths: int = 400
    uq_grid_resolution: int = 60
    uq_chain_count: int = 4
    uq_chain_length: int = 4000
    uq_thinned: int = 1000
    uq_quantile: float = 0.95
    out_dir: str = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.max_iterations < 0:
            raise ConfigError("max_iterations must be >= 0")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.map_refit_every < 1:
            raise ConfigError("map_refit_every must be >= 1")
        try:
            AcquisitionKind(self.acquisition)
        except ValueError as exc:
            raise ConfigError(f"unknown acquisition {self.acquisition!r}") from exc

    @property
    def kind(self):
        return AcquisitionKind(self.acquisition)

    def uq_config(self):
        return UqConfig(
            sample_path_count=self.uq_sample_paths,
            grid_resolution=self.uq_grid_resolution,
            is_chain_count=self.uq_chain_count,
            is_chain_length=self.uq_chain_length,
            thinned_count=self.uq_thinned,
            instrumental_quantile=self.uq_quantile,
        )

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    dataset_size: int
    points: np.ndarray
    acq_values: np.ndarray
    hyper: tuple  # (noise_var, signal_var, lengthscales...)
    tv: float = None


@dataclass
class RunRecord:
    config: ExperimentConfig
    iterations: list
    dataset_points: np.ndarray = None
    dataset_values: np.ndarray = None
    final_hyper: tuple = None
    posterior_samples: np.ndarray = None
    posterior_grid: GridDensity = None
    final_tv: float = None
    uq_summaries: list = field(default_factory=list)
    aborted: bool = False
    error: str = None

    @property
    def tv_trace(self):
        """(iteration, tv) pairs for iterations where TV was computed."""
        return [(r.iteration, r.tv) for r in self.iterations if r.tv is not None]


def _hyper_tuple(hyper):
    return (hyper.noise_var, hyper.signal_var, tuple(hyper.lengthscales.tolist()))


# ---------------------------------------------------------------------------
# Simulation execution
# ---------------------------------------------------------------------------


def simulate_batch(discrepancy, points, rng, executor=None):
    """Run the simulator at each point, in batch order, with one pre-spawned
    generator per point so results do not depend on scheduling.

    A non-finite result is retried once on the same substream; a second
    failure raises SimulatorError.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    streams = rng.spawn(points.shape[0])

    def run_one(args):
        point, sub = args
        try:
            value = discrepancy(point, sub)
        except Exception:
            value = np.nan
        if not np.isfinite(value):
            try:
                value = discrepancy(point, sub)
            except Exception as exc:
                raise SimulatorError(
                    f"simulator raised twice at {point}: {exc}"
                ) from exc
        return float(value)

    jobs = list(zip(points, streams))
    if executor is not None:
        values = list(executor.map(run_one, jobs))
    else:
        values = [run_one(j) for j in jobs]
    values = np.asarray(values)
    if not np.all(np.isfinite(values)):
        bad = points[~np.isfinite(values)][0]
        raise SimulatorError(f"simulator returned non-finite discrepancy at {bad}")
    return values


# ---------------------------------------------------------------------------
# Estimator representations
# ---------------------------------------------------------------------------


def estimator_value_fn(post, epsilon, prior, estimator):
    """Unnormalised estimator density evaluated at (n, p) points."""
    noise_sd = post.hyper.noise_sd

    def values(points):
        mean, sd = post.predict_marginals(points)
        b = bl.ThresholdedBelief(
            epsilon=epsilon,
            noise_sd=noise_sd,
            prior_density=prior.density(points),
            mean=mean,
            sd=sd,
        )
        return bl.unnorm_median(b) if estimator == "median" else bl.unnorm_mean(b)

    return values


def estimator_log_fn(post, epsilon, prior, estimator):
    """Log unnormalised estimator density at (n, p) points, for MCMC."""
    noise_sd = post.hyper.noise_sd

    def log_values(points):
        points = np.atleast_2d(points)
        mean, sd = post.predict_marginals(points)
        lp = prior.log_density(points)
        if estimator == "median":
            return bl.log_unnorm_median(lp, mean, sd, epsilon, noise_sd)
        return bl.log_unnorm_mean(lp, mean, sd, epsilon, noise_sd)

    return log_values


def estimator_grid_density(post, epsilon, prior, estimator, resolution):
    return GridDensity.from_function(
        estimator_value_fn(post, epsilon, prior, estimator), prior.bounds, resolution
    )


def sample_estimator_posterior(post, epsilon, prior, estimator, config, rng):
    """Draw posterior samples from the estimator density.

    Grid sampling for p <= 2, adaptive MCMC (started at the best dataset
    point, thinned to the configured count) above.
    """
    if prior.dim <= 2:
        grid = estimator_grid_density(
            post, epsilon, prior, estimator, config.posterior_grid_resolution
        )
        return grid.sample(config.posterior_sample_count, rng), grid
    log_fn = estimator_log_fn(post, epsilon, prior, estimator)
    data_points = post.dataset.points
    best = data_points[int(np.argmax(log_fn(data_points)))]
    width = float(np.mean(prior.bounds[:, 1] - prior.bounds[:, 0]))
    mcmc = McmcConfig(
        chain_count=config.posterior_chain_count,
        chain_length=config.posterior_chain_length,
        initial_scale=0.1 * width,
        adapt_start=min(200, config.posterior_chain_length // 4),
        init_point=best,
    )
    draws = adaptive_metropolis(log_fn, mcmc, rng)
    return thin(draws, min(config.posterior_sample_count, draws.shape[0])), None


# ---------------------------------------------------------------------------
# The inference loop
# ---------------------------------------------------------------------------


def run_inference(config, reference=None):
    """Run one batch-sequential inference experiment.

    Draws the initial design from the prior, then loops: hyperparameter MAP
    refit on schedule, backend preparation, greedy batch selection, parallel
    simulation, dataset merge.  Finishes with a final MAP refit and sampling
    from the estimator paired with the acquisition kind.  When `reference`
    is given (a GridDensity for p <= 2, samples above), records TV against
    it per iteration (p <= 2) or at the end.

    All randomness flows from `config.seed` through named substreams;
    simulator failure aborts with a partial record.
    """
    sim = get_simulator(config.simulator)
    prior = sim.prior
    p = sim.dim
    b0 = config.initial_design if config.initial_design is not None else (
        10 if p <= 2 else 20
    )
    if b0 < p + 2:
        raise ConfigError(f"initial design {b0} below minimum {p + 2}")
    epsilon = config.epsilon if config.epsilon is not None else sim.epsilon
    kind = config.kind
    if kind is AcquisitionKind.LCB:
        raise ConfigError("LCB is not an inference acquisition")

    streams = np.random.SeedSequence(config.seed).spawn(5)
    r_init, r_sim, r_opt, r_mcmc, r_post = (np.random.default_rng(s) for s in streams)
    executor = ThreadPoolExecutor(config.threads) if config.threads > 1 else None
    basis = BasisSpec.quadratic(p)
    record = RunRecord(config=config, iterations=[])

    def tv_now(current_post):
        if reference is None or p > 2:
            return None
        est = estimator_grid_density(
            current_post, epsilon, prior, kind.estimator,
            config.posterior_grid_resolution,
        )
        return tv_distance(est, reference)

    try:
        init_points = prior.sample(b0, r_init)
        init_values = simulate_batch(sim.discrepancy, init_points, r_sim, executor)
        dataset = DiscrepancyDataset(init_points, init_values, sim.bounds)

        hyper = map_hyperparameters(
            dataset, basis, restarts=config.map_restarts, rng=r_opt,
            maxiter=config.map_maxiter,
        )
        post = fit(dataset, hyper, basis)
        record.iterations.append(
            IterationRecord(0, len(dataset), init_points,
                            np.full(b0, np.nan), _hyper_tuple(hyper), tv_now(post))
        )

        for it in range(1, config.max_iterations + 1):
            if it > 1 and (it - 1) % config.map_refit_every == 0:
                hyper = map_hyperparameters(
                    dataset, basis, init=hyper,
                    restarts=config.map_warm_restarts, rng=r_opt,
                    maxiter=config.map_maxiter,
                )
            post = fit(dataset, hyper, basis)
            backend = None
            if kind.lookahead:
                if p <= 2:
                    backend = prepare_grid_backend(
                        post, epsilon, hyper.noise_sd, prior,
                        config.backend_grid_resolution,
                    )
                else:
                    backend = prepare_is_backend(
                        post, epsilon, hyper.noise_sd, prior, kind, r_mcmc,
                        thin_to=config.backend_thin,
                        chain_count=config.backend_chain_count,
                        chain_length=config.backend_chain_length,
                    )
            batch = greedy_batch(
                kind, post, config.batch_size,
                prior=prior, epsilon=epsilon, noise_sd=hyper.noise_sd,
                rng=r_opt, backend=backend, iteration=it,
                n_random=config.optimizer_random_points,
                n_refine=config.optimizer_refine,
                refine_maxiter=config.optimizer_maxiter,
            )
            new_values = simulate_batch(sim.discrepancy, batch.points, r_sim, executor)
            dataset = dataset.append(batch.points, new_values)
            post = fit(dataset, hyper, basis)
            record.iterations.append(
                IterationRecord(it, len(dataset), batch.points, batch.values,
                                _hyper_tuple(hyper), tv_now(post))
            )

        hyper = map_hyperparameters(
            dataset, basis, init=hyper, restarts=config.map_warm_restarts,
            rng=r_opt, maxiter=config.map_maxiter,
        )
        post = fit(dataset, hyper, basis)
        record.dataset_points = dataset.points
        record.dataset_values = dataset.values
        record.final_hyper = _hyper_tuple(hyper)
        samples, grid = sample_estimator_posterior(
            post, epsilon, prior, kind.estimator, config, r_post
        )
        record.posterior_samples = samples
        record.posterior_grid = grid
        if reference is not None:
            if p <= 2:
                record.final_tv = tv_distance(grid, reference)
            else:
                record.final_tv = tv_distance(
                    samples, reference, bounds=sim.bounds
                )
    except SimulatorError as exc:
        record.aborted = True
        record.error = str(exc)
    finally:
        if executor is not None:
            executor.shutdown()
    return record


# ---------------------------------------------------------------------------
# Ground truth
# ---------------------------------------------------------------------------


def _abc_mcmc_chain(sim, epsilon, proposal_sd, length, init, rng):
    low, high = sim.bounds[:, 0], sim.bounds[:, 1]
    x = np.asarray(init, dtype=float).copy()
    chain = np.empty((length, x.size))
    accepted = 0
    for i in range(length):
        prop = x + proposal_sd * rng.standard_normal(x.size)
        if np.all(prop >= low) and np.all(prop <= high):
            if sim.discrepancy(prop, rng) <= epsilon:
                x = prop
                accepted += 1
        chain[i] = x
    return chain, accepted / length


def ground_truth(config):
    """Reference posterior for the configured benchmark.

    Benchmarks with a known mean function and p <= 2 get the exact density by
    quadrature on the posterior grid; the rest get rejection-kernel ABC-MCMC
    samples (chains started at the true parameter, first half discarded,
    combined and thinned).  Deterministic given `config.truth_seed`.
    """
    sim = get_simulator(config.simulator)
    epsilon = config.epsilon if config.epsilon is not None else sim.epsilon
    if sim.mean_fn is not None and sim.dim <= 2:
        prior = sim.prior

        def fn(points):
            return bl.true_unnorm_density(
                sim.mean_fn(points), epsilon, sim.noise_sd, prior.density(points)
            )

        return GridDensity.from_function(
            fn, sim.bounds, config.posterior_grid_resolution
        )
    rng = np.random.default_rng(config.truth_seed)
    proposal_sd = config.truth_proposal_frac * (sim.bounds[:, 1] - sim.bounds[:, 0])
    keep = []
    for sub in rng.spawn(config.truth_chain_count):
        chain, acc = _abc_mcmc_chain(
            sim, epsilon, proposal_sd, config.truth_chain_length, sim.theta_true, sub
        )
        if acc < 1e-3:
            warnings.warn(
                f"ABC-MCMC acceptance rate {acc:.4%} below 0.1%; "
                "consider a larger epsilon",
                RuntimeWarning,
            )
        keep.append(chain[chain.shape[0] // 2:])
    combined = np.vstack(keep)
    return thin(combined, min(config.truth_sample_count, combined.shape[0]))


# ---------------------------------------------------------------------------
# Repeated runs
# ---------------------------------------------------------------------------


@dataclass
class RepeatSummary:
    iterations: np.ndarray  # 1..max_iterations
    tv_median: np.ndarray
    tv_lo: np.ndarray  # 5%
    tv_hi: np.ndarray  # 95%
    initial_tvs: np.ndarray
    final_tvs: np.ndarray
    aborted: int
    records: list


def repeat_experiment(config, runs=10, reference=None, seeds=None):
    """Run seeded repetitions and aggregate their TV traces.

    Returns per-iteration {median, 5%, 95%} TV bands (p <= 2), plus the
    per-run initial and final TV values.  Aborted runs are excluded from the
    aggregates and counted.
    """
    if runs < 3:
        raise ConfigError("repeat_experiment needs runs >= 3")
    if reference is None:
        reference = ground_truth(config)
    if seeds is None:
        seeds = [config.seed + 7919 * k for k in range(runs)]
    if len(seeds) != runs:
        raise ConfigError("seeds must match the number of runs")
    records, aborted = [], 0
    for seed in seeds:
        rec = run_inference(replace(config, seed=int(seed)), reference=reference)
        if rec.aborted:
            aborted += 1
        else:
            records.append(rec)
    if not records:
        raise SimulatorError("all repetitions aborted")
    iters = np.arange(1, config.max_iterations + 1)
    per_run = []
    for rec in records:
        trace = dict(rec.tv_trace)
        per_run.append([trace.get(i, np.nan) for i in iters])
    per_run = np.asarray(per_run, dtype=float)
    if per_run.size and np.all(np.isfinite(per_run)):
        med = np.median(per_run, axis=0)
        lo, hi = np.percentile(per_run, [5, 95], axis=0)
    else:
        med = lo = hi = np.full(iters.size, np.nan)
    initial = np.asarray(

        [dict(rec.tv_trace).get(0, np.nan) for rec in records], dtype=float
    )
    final = np.asarray(
        [rec.final_tv if rec.final_tv is not None else np.nan for rec in records],
        dtype=float,
    )
    return RepeatSummary(
        iterations=iters,
        tv_median=med,
        tv_lo=lo,
        tv_hi=hi,
        initial_tvs=initial,
        final_tvs=final,
        aborted=aborted,
        records=records,
    )


# ---------------------------------------------------------------------------
# Posterior uncertainty summaries at dataset checkpoints
# ---------------------------------------------------------------------------


def uq_checkpoint_summaries(config, dataset, checkpoints=None, rng=None):
    """Moment summaries of the posterior ensemble at nested dataset prefixes.

    `dataset` must hold the points in acquisition order; each checkpoint size
    m reuses its prefix, refits the hyperparameters and quantifies with the
    grid route (p <= 2) or the importance-sampling route.
    """
    sim = get_simulator(config.simulator)
    prior = sim.prior
    epsilon = config.epsilon if config.epsilon is not None else sim.epsilon
    if checkpoints is None:
        checkpoints = sorted({max(2, len(dataset) // 4), len(dataset) // 2,
                              len(dataset)})
    if rng is None:
        rng = np.random.default_rng(config.seed + 99)
    basis = BasisSpec.quadratic(sim.dim)
    uq_cfg = config.uq_config()
    out = []
    for size in checkpoints:
        if not 2 <= size <= len(dataset):
            raise ConfigError(f"checkpoint {size} outside [2, {len(dataset)}]")
        subset = DiscrepancyDataset(
            dataset.points[:size], dataset.values[:size], dataset.bounds
        )
        hyper = map_hyperparameters(
            subset, basis, restarts=config.map_restarts, rng=rng,
            maxiter=config.map_maxiter,
        )
        post = fit(subset, hyper, basis)
        if sim.dim <= 2:
            ens = quantify_grid(post, epsilon, hyper.noise_sd, prior, uq_cfg, rng)
        else:
            ens = quantify_is(post, epsilon, hyper.noise_sd, prior, uq_cfg, rng)
        summary = ensemble_moments(ens)
        out.append({"dataset_size": size, **summary.to_dict(),
                    "median_ess": float(np.median(ens.ess))})
    return out


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.10g}" if isinstance(v, float) else str(v)
                              for v in row) + "\n")


def save_run_record(record, out_dir):
    """Write a run directory: manifest, dataset, batch log, TV trace,
    posterior samples/grid and UQ summaries."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    import scipy

    manifest = {
        "config": record.config.to_dict(),
        "versions": {"numpy": np.__version__, "scipy": scipy.__version__},
        "aborted": record.aborted,
        "error": record.error,
        "final_hyper": record.final_hyper,
        "final_tv": record.final_tv,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    if record.dataset_points is not None:
        p = record.dataset_points.shape[1]
        _write_csv(
            out / "dataset.csv",
            [f"x{i}" for i in range(p)] + ["value"],
            [list(map(float, pt)) + [float(v)]
             for pt, v in zip(record.dataset_points, record.dataset_values)],
        )
    rows = []
    for rec in record.iterations:
        for pt, val in zip(rec.points, rec.acq_values):
            rows.append([rec.iteration] + list(map(float, pt)) + [float(val)])
    if rows:
        p = len(rows[0]) - 2
        _write_csv(out / "batch_log.csv",
                   ["iteration"] + [f"x{i}" for i in range(p)] + ["acq_value"], rows)
    trace = record.tv_trace
    if trace:
        _write_csv(out / "tv_trace.csv", ["iteration", "tv"],
                   [[i, float(v)] for i, v in trace])
    if record.posterior_samples is not None:
        p = record.posterior_samples.shape[1]
        _write_csv(out / "posterior_samples.csv", [f"x{i}" for i in range(p)],
                   [list(map(float, row)) for row in record.posterior_samples])
    if record.posterior_grid is not None:
        save_reference(record.posterior_grid, out / "posterior_grid.npz")
    if record.uq_summaries:
        (out / "uq_summaries.json").write_text(json.dumps(record.uq_summaries,
                                                          indent=2))
    return out


def save_reference(reference, path):
    """Persist a ground-truth posterior (grid density or sample array)."""
    path = Path(path)
    if isinstance(reference, GridDensity):
        np.savez(path, kind="grid", bounds=reference.bounds,
                 resolution=reference.resolution, masses=reference.masses)
    else:
        np.savez(path, kind="samples", samples=np.asarray(reference))
    return path


def load_reference(path):
    data = np.load(path, allow_pickle=False)
    kind = str(data["kind"])
    if kind == "grid":
        return GridDensity(
            bounds=data["bounds"],
            resolution=int(data["resolution"]),
            masses=data["masses"],
        )
    return data["samples"]
