import numpy as np
import pytest

from gpabc.errors import DomainError
from gpabc.belief import true_unnorm_density
from gpabc.priors import BoxPrior
from gpabc.sampling import midpoint_grid
from gpabc.simulators import (
    GK_THETA_TRUE,
    GkParams,
    MahalanobisSpec,
    TOY_BOUNDS_2D,
    derive_epsilon,
    estimate_weight_matrix,
    gaussianity_diagnostic,
    get_simulator,
    gk_quantile,
    gk_sample,
    gk_summaries,
    mahalanobis_discrepancy,
    simulator_names,
    toy2d_discrepancy,
    toy_mean,
)
from gpabc.special import norm_inv_cdf

# frozen from the seeded benchmark construction (seed 20240811, n = 1e4)
GK_OBSERVED_SUMMARIES = np.array(
    [3.00390568, 1.60892969, 0.45302645, 1.73841179]
)


class TestToyLandscapes:
    def test_minimum_is_zero_without_noise(self):
        argmins = {
            "gaussian": (2.0, -1.0),
            "bimodal": (-6.0, -5.0),
            "banana": (0.0, -6.0),
            "multimodal": (0.0, 0.0),
        }
        rng = np.random.default_rng(0)
        for kind, theta in argmins.items():
            assert toy2d_discrepancy(kind, theta, rng, noise_sd=0.0) == \
                pytest.approx(0.0, abs=1e-12)

    def test_noise_is_additive_and_unbiased(self):
        rng = np.random.default_rng(1)
        theta = np.array([4.0, -3.0])
        draws = np.array(
            [toy2d_discrepancy("gaussian", theta, rng) for _ in range(30_000)]
        )
        f_val = toy_mean("gaussian", theta)
        se = draws.std() / np.sqrt(draws.size)
        assert abs(draws.mean() - f_val) <= 3 * se
        assert draws.std() == pytest.approx(0.5, abs=0.01)

    def test_vectorised_mean_matches_scalar_draws(self):
        rng = np.random.default_rng(2)
        pts = rng.uniform(-16, 16, size=(5, 2))
        vec = toy_mean("banana", pts)
        for i, theta in enumerate(pts):
            assert toy2d_discrepancy("banana", theta, rng, noise_sd=0.0) == \
                pytest.approx(vec[i], abs=1e-12)

    def test_outside_box_rejected(self):
        rng = np.random.default_rng(3)
        with pytest.raises(DomainError):
            toy2d_discrepancy("gaussian", [20.0, 0.0], rng)
        with pytest.raises(DomainError):
            toy2d_discrepancy("nope", [0.0, 0.0], rng)

    def test_deterministic_given_seed(self):
        a = toy2d_discrepancy("multimodal", [1.0, 1.0], np.random.default_rng(7))
        b = toy2d_discrepancy("multimodal", [1.0, 1.0], np.random.default_rng(7))
        assert a == b

    def test_ground_truth_normaliser_converges(self):
        # quadrature of the exact unnormalised posterior stabilises with
        # resolution, so the normalised density integrates to 1 reliably
        sim = get_simulator("gaussian")
        prior = BoxPrior(sim.bounds)

        def normaliser(res):
            pts, w = midpoint_grid(sim.bounds, res)
            vals = true_unnorm_density(
                sim.mean_fn(pts), sim.epsilon, sim.noise_sd, prior.density(pts)
            )
            return float(vals @ w)

        z100, z300 = normaliser(100), normaliser(300)
        assert abs(z100 - z300) <= 1e-6 * abs(z300)

    def test_rejection_abc_matches_exact_posterior(self):
        # accepted prior draws are exact posterior samples by construction;
        # compare their histogram against the exact cell masses
        sim = get_simulator("gaussian")
        rng = np.random.default_rng(4)
        n = 1_000_000
        thetas = BoxPrior(sim.bounds).sample(n, rng)
        deltas = toy_mean("gaussian", thetas) + sim.noise_sd * rng.standard_normal(n)
        accepted = thetas[deltas <= sim.epsilon]
        assert accepted.shape[0] > 10_000

        res, sub = 20, 10  # 20 x 20 histogram, exact masses from a finer grid
        pts, w = midpoint_grid(sim.bounds, res * sub)
        vals = true_unnorm_density(sim.mean_fn(pts), sim.epsilon, sim.noise_sd,
                                   np.ones(pts.shape[0]))
        fine = (vals * w).reshape(res, sub, res, sub)
        exact = fine.sum(axis=(1, 3)).ravel()
        exact /= exact.sum()
        edges = np.linspace(-16, 16, res + 1)
        hist, _, _ = np.histogram2d(accepted[:, 0], accepted[:, 1],
                                    bins=[edges, edges])
        emp = hist.ravel() / hist.sum()
        assert 0.5 * np.abs(emp - exact).sum() <= 0.02


class TestGk:
    def test_collapses_to_gaussian(self):
        rng = np.random.default_rng(5)
        params = GkParams(a=2.5, b=1.5, g=0.0, k=0.0)
        x = gk_sample(params, 100_000, rng)
        assert abs(x.mean() - 2.5) <= 3 * 1.5 / np.sqrt(x.size)
        assert x.std() == pytest.approx(1.5, rel=0.02)

    def test_quantile_function_monotone(self):
        z = norm_inv_cdf(np.linspace(1e-4, 1 - 1e-4, 2001))
        for params in (GkParams(3, 1, 2, 0.5), GkParams(2, 0.5, 4, 2.0),
                       GkParams(0, 1, -1.0, 0.1)):
            q = gk_quantile(z, params)
            assert np.all(np.diff(q) > 0)

    def test_octiles_match_quantile_function(self):
        rng = np.random.default_rng(6)
        params = GkParams(3, 1, 2, 0.5)
        x = np.sort(gk_sample(params, 10_000, rng))
        n = x.size
        probs = np.arange(1, 8) / 8.0
        for prob in probs:
            target = float(gk_quantile(norm_inv_cdf(prob), params))
            half = 4.0 * np.sqrt(n * prob * (1 - prob))
            lo = x[int(np.clip(np.floor(n * prob - half), 0, n - 1))]
            hi = x[int(np.clip(np.ceil(n * prob + half), 0, n - 1))]
            assert lo <= target <= hi

    def test_invalid_params(self):
        with pytest.raises(DomainError):
            GkParams(0, -1.0, 0, 0)
        with pytest.raises(DomainError):
            GkParams(0, 1.0, 0, -0.6)

    def test_summaries_equivariance(self):
        rng = np.random.default_rng(7)
        x = gk_sample(GkParams(3, 1, 2, 0.5), 5_000, rng)
        base = gk_summaries(x)
        shifted = gk_summaries(x + 2.5)
        assert shifted[0] == pytest.approx(base[0] + 2.5, abs=1e-9)
        assert shifted[1:] == pytest.approx(base[1:], abs=1e-9)
        scaled = gk_summaries(x * 3.0)
        assert scaled[0] == pytest.approx(base[0] * 3.0, rel=1e-9)
        assert scaled[1] == pytest.approx(base[1] * 3.0, rel=1e-9)
        assert scaled[2:] == pytest.approx(base[2:], rel=1e-9)

    def test_degenerate_data(self):
        with pytest.raises(DomainError):
            gk_summaries(np.full(100, 1.3))
        with pytest.raises(DomainError):
            gk_summaries([1.0, 2.0])

    def test_frozen_observed_summaries(self):
        gk = get_simulator("gk")
        rng = np.random.default_rng(20240811)
        obs = gk_summaries(gk_sample(GkParams(*GK_THETA_TRUE), 10_000, rng))
        assert obs == pytest.approx(GK_OBSERVED_SUMMARIES, abs=1e-8)
        assert gk.epsilon > 0


class TestMahalanobis:
    def test_zero_iff_equal(self):
        spec = MahalanobisSpec(observed=[1.0, 2.0], weight=np.eye(2))
        assert mahalanobis_discrepancy(spec, [1.0, 2.0]) == 0.0
        assert mahalanobis_discrepancy(spec, [1.1, 2.0]) > 0

    def test_identity_weight_is_euclidean(self):
        spec = MahalanobisSpec(observed=[0.0, 0.0, 0.0], weight=np.eye(3))
        assert mahalanobis_discrepancy(spec, [3.0, 4.0, 0.0]) == pytest.approx(5.0)

    def test_random_pd_quadratic_form(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            A = rng.standard_normal((4, 4))
            W = A @ A.T + 0.5 * np.eye(4)
            s_o = rng.standard_normal(4)
            s = rng.standard_normal(4)
            spec = MahalanobisSpec(observed=s_o, weight=W)
            direct = np.sqrt((s_o - s) @ W @ (s_o - s))
            assert mahalanobis_discrepancy(spec, s) == pytest.approx(direct,
                                                                     abs=1e-12)

    def test_rejects_invalid_weight(self):
        with pytest.raises(DomainError):
            MahalanobisSpec(observed=[0.0, 0.0], weight=-np.eye(2))
        with pytest.raises(DomainError):
            MahalanobisSpec(observed=[0.0, 0.0], weight=np.array([[1, 2], [0, 1]]))


class TestWeightMatrix:
    def test_recovers_known_inverse_covariance(self):
        rng = np.random.default_rng(9)
        cov = np.array([[1.0, 0.4, 0.2], [0.4, 1.5, 0.5], [0.2, 0.5, 0.8]])
        L = np.linalg.cholesky(cov)

        def summary(theta, r):
            return L @ r.standard_normal(3)

        W = estimate_weight_matrix(summary, np.zeros(1), replications=10_000,
                                   rng=rng)
        target = np.linalg.inv(cov)
        assert np.max(np.abs(W - target) / np.abs(target)) <= 0.10

    def test_one_dimensional(self):
        rng = np.random.default_rng(10)
        draws = []

        def summary(theta, r):
            v = np.array([2.0 * r.standard_normal()])
            draws.append(v[0])
            return v

        W = estimate_weight_matrix(summary, np.zeros(1), replications=500, rng=rng)
        assert W.shape == (1, 1)
        assert W[0, 0] == pytest.approx(1.0 / np.var(draws, ddof=1), rel=1e-9)

    def test_symmetric_pd_output(self):
        rng = np.random.default_rng(11)

        def summary(theta, r):
            return r.standard_normal(3)

        for seed in range(5):
            W = estimate_weight_matrix(summary, np.zeros(1), replications=50,
                                       rng=np.random.default_rng(seed))
            assert np.allclose(W, W.T)
            assert np.all(np.linalg.eigvalsh(W) > 0)

    def test_too_few_replications(self):
        with pytest.raises(DomainError):
            estimate_weight_matrix(lambda t, r: r.standard_normal(5),
                                   np.zeros(1), replications=4)


class TestGaussianityDiagnostic:
    def test_gaussian_draws_look_gaussian(self):
        out = gaussianity_diagnostic(
            lambda t, r: float(2.0 + 0.3 * r.standard_normal()),
            np.zeros(1), replications=500, rng=np.random.default_rng(12),
        )
        assert abs(out["skewness"]) < 0.2
        assert abs(out["excess_kurtosis"]) < 0.5

    def test_chi5_slightly_right_skewed(self):
        # chi distribution with 5 dof has skewness ~0.35
        def disc(theta, r):
            return float(np.sqrt(np.sum(r.standard_normal(5) ** 2)))

        out = gaussianity_diagnostic(disc, np.zeros(1), replications=2_000,
                                     rng=np.random.default_rng(13))
        assert 0.0 < out["skewness"] < 0.8

    def test_constant_warns(self):
        with pytest.warns(RuntimeWarning, match="constant"):
            out = gaussianity_diagnostic(lambda t, r: 1.0, np.zeros(1),
                                         replications=50)
        assert np.isnan(out["skewness"])


class TestRegistry:
    def test_names_and_lookup(self):
        assert set(simulator_names()) == {
            "gaussian", "bimodal", "banana", "multimodal", "demo1d", "gk"
        }
        with pytest.raises(DomainError):
            get_simulator("lorenz")

    def test_toy_specs(self):
        for name in ("gaussian", "bimodal", "banana", "multimodal"):
            sim = get_simulator(name)
            assert sim.dim == 2
            assert np.allclose(sim.bounds, TOY_BOUNDS_2D)
            assert sim.noise_sd > 0 and sim.epsilon > 0
            assert sim.mean_fn is not None
            assert toy_mean(name, sim.theta_true) == pytest.approx(0.0, abs=1e-12)

    def test_demo1d(self):
        sim = get_simulator("demo1d")
        assert sim.dim == 1
        rng = np.random.default_rng(14)
        assert sim.discrepancy(np.array([2.0]), rng) == pytest.approx(
            0.0, abs=4 * sim.noise_sd
        )

    def test_derive_epsilon_quantile(self):
        rng = np.random.default_rng(15)
        eps = derive_epsilon(
            lambda t, r: float(np.sum(t**2) + 0.01 * r.standard_normal()),
            [[-1, 1], [-1, 1]], rng=rng, pilot=2000, quantile=0.5,
        )
        # the median of t1^2 + t2^2 over the unit box is ~0.637
        assert eps == pytest.approx(0.637, abs=0.05)
