"""Gaussian-process regression on discrepancy observations.

The model is a GP with squared-exponential ARD kernel and a linear-in-basis
mean function whose coefficients carry a Gaussian prior and are marginalised
out analytically (generalised least squares).  The fitted posterior exposes
predictive means/covariances, the deterministic variance reduction caused by
a set of pending evaluation points, joint sample-path draws, and MAP
estimation of the kernel/noise hyperparameters under log-normal hyperpriors.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize
from scipy.spatial.distance import cdist

from .errors import DomainError, IllConditionedError

__all__ = [
    "DiscrepancyDataset",
    "GpHyper",
    "BasisSpec",
    "HyperPriors",
    "GpPosterior",
    "fit",
    "map_hyperparameters",
    "sq_exp_kernel",
]

# Relative jitter levels tried in order when a Cholesky factorisation fails.
JITTER_LADDER = (0.0, 1e-10, 1e-8, 1e-6, 1e-4)


@dataclass(frozen=True)
class DiscrepancyDataset:
    """Evaluated parameter points and their observed discrepancies.

    points : (t, p) array, each row inside the axis-aligned box `bounds`
    values : (t,) array of nonnegative discrepancy observations
    bounds : (p, 2) array of [low, high] per axis
    """

    points: np.ndarray
    values: np.ndarray
    bounds: np.ndarray

    def __post_init__(self):
        points = np.atleast_2d(np.asarray(self.points, dtype=float))
        values = np.asarray(self.values, dtype=float).ravel()
        bounds = np.atleast_2d(np.asarray(self.bounds, dtype=float))
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "bounds", bounds)
        if bounds.shape != (points.shape[1], 2):
            raise DomainError(
                f"bounds shape {bounds.shape} does not match dimension {points.shape[1]}"
            )
        if np.any(bounds[:, 0] >= bounds[:, 1]):
            raise DomainError("each bounds row must satisfy low < high")
        if points.shape[0] != values.shape[0]:
            raise DomainError("points and values must have equal length")
        if not (np.all(np.isfinite(points)) and np.all(np.isfinite(values))):
            raise DomainError("points and values must be finite")
        tol = 1e-9 * np.max(bounds[:, 1] - bounds[:, 0])
        if np.any(points < bounds[:, 0] - tol) or np.any(points > bounds[:, 1] + tol):
            raise DomainError("all points must lie inside the bounds box")

    def __len__(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    def append(self, new_points, new_values):
        """Return a new dataset with extra rows appended in order."""
        new_points = np.atleast_2d(np.asarray(new_points, dtype=float))
        new_values = np.asarray(new_values, dtype=float).ravel()
        return DiscrepancyDataset(
            points=np.vstack([self.points, new_points]),
            values=np.concatenate([self.values, new_values]),
            bounds=self.bounds,
        )


@dataclass(frozen=True)
class GpHyper:
    """Kernel and noise hyperparameters; all strictly positive."""

    noise_var: float
    signal_var: float
    lengthscales: np.ndarray

    def __post_init__(self):
        ls = np.asarray(self.lengthscales, dtype=float).ravel()
        object.__setattr__(self, "lengthscales", ls)
        if not (self.noise_var > 0 and self.signal_var > 0 and np.all(ls > 0)):
            raise DomainError("noise_var, signal_var and lengthscales must be > 0")
        if not (
            np.isfinite(self.noise_var)
            and np.isfinite(self.signal_var)
            and np.all(np.isfinite(ls))
        ):
            raise DomainError("hyperparameters must be finite")

    @property
    def noise_sd(self):
        return float(np.sqrt(self.noise_var))


@dataclass(frozen=True)
class BasisSpec:
    """Mean-function basis h(theta) with Gaussian prior on its coefficients.

    feature_fn maps an (n, p) array to the (n, r) design matrix.  prior_mean
    is the length-r coefficient prior mean, prior_cov the r x r symmetric
    positive-definite prior covariance.
    """

    feature_fn: callable
    prior_mean: np.ndarray
    prior_cov: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.prior_mean, dtype=float).ravel()
        B = np.atleast_2d(np.asarray(self.prior_cov, dtype=float))
        object.__setattr__(self, "prior_mean", b)
        object.__setattr__(self, "prior_cov", B)
        if B.shape != (b.size, b.size):
            raise DomainError("prior_cov must be r x r with r = len(prior_mean)")
        if not np.allclose(B, B.T):
            raise DomainError("prior_cov must be symmetric")

    @classmethod
    def quadratic(cls, dim, prior_scale=10.0):
        """Constant + per-coordinate linear and quadratic basis, r = 2p + 1.

        Coefficients get a zero-mean prior with sd `prior_scale` per entry.
        """

        def features(X):
            X = np.atleast_2d(np.asarray(X, dtype=float))
            return np.hstack([np.ones((X.shape[0], 1)), X, X**2])

        r = 2 * dim + 1
        return cls(
            feature_fn=features,
            prior_mean=np.zeros(r),
            prior_cov=prior_scale**2 * np.eye(r),
        )

    def design_matrix(self, X):
        H = np.atleast_2d(np.asarray(self.feature_fn(X), dtype=float))
        if H.shape[1] != self.prior_mean.size:
            raise DomainError("feature_fn returned wrong number of columns")
        return H


def sq_exp_kernel(X1, X2, hyper, diag=False):
    """Squared-exponential ARD kernel matrix between two point sets."""
    X1 = np.atleast_2d(np.asarray(X1, dtype=float))
    if diag:
        return np.full(X1.shape[0], hyper.signal_var)
    X2 = np.atleast_2d(np.asarray(X2, dtype=float))
    ls = hyper.lengthscales
    d2 = cdist(X1 / ls, X2 / ls, metric="sqeuclidean")
    return hyper.signal_var * np.exp(-0.5 * d2)


def _chol_with_jitter(mat, what):
    """Lower Cholesky factor with escalating relative jitter on the diagonal."""
    scale = max(float(np.mean(np.diag(mat))), 1e-12)
    for level in JITTER_LADDER:
        try:
            return cholesky(mat + level * scale * np.eye(mat.shape[0]), lower=True)
        except np.linalg.LinAlgError:
            continue
        except ValueError:
            continue
    raise IllConditionedError(
        f"{what}: Cholesky failed even with jitter {JITTER_LADDER[-1]:g} * mean diagonal"
    )


@dataclass
class GpPosterior:
    """Fitted GP posterior with cached factorisations.

    Immutable after construction; predictive queries are read-only and safe
    to issue concurrently.
    """

    dataset: DiscrepancyDataset
    hyper: GpHyper
    basis: BasisSpec
    _chol_K: np.ndarray = field(repr=False)
    _alpha: np.ndarray = field(repr=False)  # K^{-1} y
    _KinvH: np.ndarray = field(repr=False)  # K^{-1} H, (t, r)
    _chol_G: np.ndarray = field(repr=False)  # chol of B^{-1} + H^T K^{-1} H
    _gls_coef: np.ndarray = field(repr=False)  # marginal posterior mean of basis coefs
    _H: np.ndarray = field(repr=False)  # (t, r) design matrix

    # -- internal helpers -------------------------------------------------

    def _query_blocks(self, Q):
        """Kernel cross block, its K-solve, and the basis residual for Q."""
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        Ks = sq_exp_kernel(self.dataset.points, Q, self.hyper)  # (t, n)
        KinvKs = cho_solve((self._chol_K, True), Ks)  # (t, n)
        R = self.basis.design_matrix(Q).T - self._H.T @ KinvKs  # (r, n)
        return Q, Ks, KinvKs, R

    def query_cache(self, points):
        """Precompute the query-side blocks for a fixed point set, so that
        repeated cross-covariances against varying candidates only pay the
        candidate-side cost.  Used by acquisition backends."""
        Q, Ks, KinvKs, R = self._query_blocks(points)
        GinvR = cho_solve((self._chol_G, True), R)
        return {"points": Q, "Ks": Ks, "KinvKs": KinvKs, "R": R, "GinvR": GinvR}

    def cross_cov_multi(self, caches, cands):
        """Cross-covariance blocks of `cands` against several cached point
        sets, plus the predictive variance at `cands`, all from a single
        candidate-side factorisation.

        Returns ([c(cache_i points, cands), ...], var(cands)).
        """
        Qc, Ksc, KinvKsc, Rc = self._query_blocks(cands)
        GinvRc = cho_solve((self._chol_G, True), Rc)
        var = (
            self.hyper.signal_var
            - np.einsum("ij,ij->j", Ksc, KinvKsc)
            + np.einsum("ij,ij->j", Rc, GinvRc)
        )
        crosses = [
            sq_exp_kernel(c["points"], Qc, self.hyper)
            - c["Ks"].T @ KinvKsc
            + c["GinvR"].T @ Rc
            for c in caches
        ]
        return crosses, np.clip(var, 0.0, None)

    # -- predictive equations ---------------------------------------------

    def predict(self, query):
        """Joint predictive mean vector and covariance matrix at `query`.

        The covariance is symmetrised and its diagonal clamped at zero.
        """
        Q, Ks, KinvKs, R = self._query_blocks(query)
        GinvR = cho_solve((self._chol_G, True), R)
        mean = Ks.T @ self._alpha + R.T @ self._gls_coef
        cov = sq_exp_kernel(Q, Q, self.hyper) - Ks.T @ KinvKs + R.T @ GinvR
        cov = 0.5 * (cov + cov.T)
        d = np.einsum("ii->i", cov)
        d[d < 0.0] = 0.0
        return mean, cov

    def predict_marginals(self, query):
        """Pointwise predictive mean and standard deviation (sd >= 0)."""
        _, Ks, KinvKs, R = self._query_blocks(query)
        GinvR = cho_solve((self._chol_G, True), R)
        mean = Ks.T @ self._alpha + R.T @ self._gls_coef
        var = (
            self.hyper.signal_var
            - np.einsum("ij,ij->j", Ks, KinvKs)
            + np.einsum("ij,ij->j", R, GinvR)
        )
        return mean, np.sqrt(np.clip(var, 0.0, None))

    def cross_cov(self, query_a, query_b):
        """Predictive covariance block c(query_a, query_b)."""
        Qa, Ksa, _, Ra = self._query_blocks(query_a)
        Qb, Ksb, KinvKsb, Rb = self._query_blocks(query_b)
        GinvRb = cho_solve((self._chol_G, True), Rb)
        return sq_exp_kernel(Qa, Qb, self.hyper) - Ksa.T @ KinvKsb + Ra.T @ GinvRb

    def lookahead_var_reduction(self, query, pending):
        """Deterministic drop in predictive variance at `query` caused by
        observing the `pending` points, whatever their outcomes turn out to be.

        Returns one value per query row, clamped into [0, s^2(query)].
        """
        pending = np.atleast_2d(np.asarray(pending, dtype=float))
        if pending.shape[0] == 0:
            raise DomainError("pending must contain at least one point")
        C_qp = self.cross_cov(query, pending)  # (n, b)
        _, C_pp = self.predict(pending)  # (b, b)
        M = C_pp + self.hyper.noise_var * np.eye(pending.shape[0])
        sol = cho_solve(cho_factor(M, lower=True), C_qp.T)  # (b, n)
        tau_sq = np.einsum("nb,bn->n", C_qp, sol)
        _, sd = self.predict_marginals(query)
        return np.clip(tau_sq, 0.0, sd**2)

    def sample_paths(self, eval_points, count, rng):
        """Draw `count` independent joint sample paths at `eval_points`.

        Returns a (count, n) array; rows are i.i.d. draws from the joint
        Gaussian posterior of the latent function at the evaluation points.
        """
        eval_points = np.atleast_2d(np.asarray(eval_points, dtype=float))
        n = eval_points.shape[0]
        if count == 0:
            return np.empty((0, n))
        mean, cov = self.predict(eval_points)
        L = _chol_with_jitter(cov, "sample_paths joint covariance")
        z = rng.standard_normal((count, n))
        return mean[None, :] + z @ L.T


def fit(dataset, hyper, basis=None):
    """Fit the GP posterior for a dataset under fixed hyperparameters.

    Deterministic given its inputs.  Raises IllConditionedError if the
    kernel matrix cannot be factorised even after jitter escalation.
    """
    if len(dataset) == 0:
        raise DomainError("fit requires a nonempty dataset")
    if basis is None:
        basis = BasisSpec.quadratic(dataset.dim)
    X, y = dataset.points, dataset.values
    K = sq_exp_kernel(X, X, hyper) + hyper.noise_var * np.eye(len(dataset))
    chol_K = _chol_with_jitter(K, "training kernel matrix")
    H = basis.design_matrix(X)  # (t, r)
    alpha = cho_solve((chol_K, True), y)
    KinvH = cho_solve((chol_K, True), H)
    chol_B = _chol_with_jitter(basis.prior_cov, "basis prior covariance")
    Binv = cho_solve((chol_B, True), np.eye(basis.prior_mean.size))
    G = Binv + H.T @ KinvH
    chol_G = _chol_with_jitter(G, "generalised least-squares matrix")
    gls_coef = cho_solve(
        (chol_G, True), H.T @ alpha + Binv @ basis.prior_mean
    )
    return GpPosterior(
        dataset=dataset,
        hyper=hyper,
        basis=basis,
        _chol_K=chol_K,
        _alpha=alpha,
        _KinvH=KinvH,
        _chol_G=chol_G,
        _gls_coef=gls_coef,
        _H=H,
    )


# ---------------------------------------------------------------------------
# Marginal likelihood and MAP hyperparameter estimation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HyperPriors:
    """Independent log-normal hyperpriors, parameterised in log-space.

    Each field is a (mu, sd) pair for the log of the natural-scale quantity:
    noise sd, signal sd, and every lengthscale.
    """

    log_noise_sd: tuple
    log_signal_sd: tuple
    log_lengthscales: list

    @classmethod
    def from_data(cls, dataset):
        """Scale-aware defaults: lengthscales centred at half the box width,
        signal sd at the sample sd of the observations, noise sd at a tenth
        of it; all with unit sd in log-space."""
        widths = dataset.bounds[:, 1] - dataset.bounds[:, 0]
        samp_sd = float(np.std(dataset.values))
        if not samp_sd > 0:
            samp_sd = 1.0
        return cls(
            log_noise_sd=(float(np.log(0.1 * samp_sd)), 1.0),
            log_signal_sd=(float(np.log(samp_sd)), 1.0),
            log_lengthscales=[(float(np.log(w / 2.0)), 1.0) for w in widths],
        )

    def _stacked(self):
        mus = [self.log_noise_sd[0], self.log_signal_sd[0]] + [
            m for m, _ in self.log_lengthscales
        ]
        sds = [self.log_noise_sd[1], self.log_signal_sd[1]] + [
            s for _, s in self.log_lengthscales
        ]
        return np.array(mus), np.array(sds)

    def log_density(self, z):
        """Log prior density of the packed log-parameter vector z."""
        mus, sds = self._stacked()
        return float(np.sum(-0.5 * ((z - mus) / sds) ** 2 - np.log(sds)))

    def sample(self, rng):
        mus, sds = self._stacked()
        return mus + sds * rng.standard_normal(mus.size)


def _pack(hyper):
    return np.concatenate(
        [
            [0.5 * np.log(hyper.noise_var), 0.5 * np.log(hyper.signal_var)],
            np.log(hyper.lengthscales),
        ]
    )


def _unpack(z):
    return GpHyper(
        noise_var=float(np.exp(2.0 * z[0])),
        signal_var=float(np.exp(2.0 * z[1])),
        lengthscales=np.exp(z[2:]),
    )


def log_marginal_likelihood(dataset, hyper, basis):
    """Log evidence of the observations with basis coefficients integrated out.

    Uses the equivalent representation with mean H b and kernel
    k + h^T B h', whose Gram matrix is K + H B H^T.
    """
    X, y = dataset.points, dataset.values
    H = basis.design_matrix(X)
    K = (
        sq_exp_kernel(X, X, hyper)
        + hyper.noise_var * np.eye(len(dataset))
        + H @ basis.prior_cov @ H.T
    )
    L = _chol_with_jitter(K, "augmented kernel matrix")
    resid = y - H @ basis.prior_mean
    w = solve_triangular(L, resid, lower=True)
    return float(
        -0.5 * w @ w
        - np.sum(np.log(np.diag(L)))
        - 0.5 * len(dataset) * np.log(2.0 * np.pi)
    )


def map_hyperparameters(
    dataset, basis=None, hyper_priors=None, init=None, restarts=9, rng=None, maxiter=60
):
    """MAP estimate of the hyperparameters by multistart local optimisation.

    Starts from `init` plus `restarts` hyperprior draws, optimises the log
    marginal likelihood plus log hyperprior in log-space with L-BFGS-B and
    finite-difference gradients, and returns the best evaluated point. The
    returned objective value never falls below the value at `init`; if no
    restart improves on it, `init` is returned with a warning.
    """
    if len(dataset) < 2:
        raise DomainError("MAP estimation requires at least 2 points")
    if basis is None:
        basis = BasisSpec.quadratic(dataset.dim)
    if hyper_priors is None:
        hyper_priors = HyperPriors.from_data(dataset)
    if rng is None:
        rng = np.random.default_rng(0)
    mus, sds = hyper_priors._stacked()
    if init is None:
        init = _unpack(mus)
    z_bounds = list(zip(mus - 6.0 * sds, mus + 6.0 * sds))

    def neg_objective(z):
        z = np.clip(z, [lo for lo, _ in z_bounds], [hi for _, hi in z_bounds])
        try:
            ll = log_marginal_likelihood(dataset, _unpack(z), basis)
        except IllConditionedError:
            return 1e12
        return -(ll + hyper_priors.log_density(z))

    z_init = np.clip(_pack(init), [lo for lo, _ in z_bounds], [hi for _, hi in z_bounds])
    starts = [z_init] + [hyper_priors.sample(rng) for _ in range(restarts)]
    best_z, best_val = z_init, neg_objective(z_init)
    init_val = best_val
    for z0 in starts:
        res = minimize(
            neg_objective,
            z0,
            method="L-BFGS-B",
            bounds=z_bounds,
            options={"maxiter": maxiter},
        )
        if np.isfinite(res.fun) and res.fun < best_val:
            best_z, best_val = res.x, res.fun
    if best_val >= init_val and not np.allclose(best_z, z_init):  # pragma: no cover
        best_z = z_init
    if best_val >= init_val:
        warnings.warn(
            "hyperparameter optimisation did not improve on the initial value",
            RuntimeWarning,
        )
        return init
    return _unpack(best_z)
