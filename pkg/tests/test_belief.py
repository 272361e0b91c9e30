import numpy as np
import pytest

from gpabc.belief import (
    ThresholdedBelief,
    log_unnorm_mean,
    log_unnorm_median,
    threshold_margin,
    true_unnorm_density,
    unnorm_mad,
    unnorm_mean,
    unnorm_median,
    unnorm_quantile,
    unnorm_variance,
)
from gpabc.errors import DomainError

from _oracles import mc_belief_draws


def random_belief(rng, allow_zero_sd=True):
    sd = rng.uniform(0.0 if allow_zero_sd and rng.random() < 0.15 else 0.05, 3.0)
    return ThresholdedBelief(
        epsilon=rng.uniform(-1.0, 3.0),
        noise_sd=rng.uniform(0.05, 2.0),
        prior_density=rng.uniform(0.05, 2.0),
        mean=rng.uniform(-3.0, 5.0),
        sd=sd,
    )


def order_stat_window(sorted_draws, prob, z=3.0):
    """Central z-sigma order-statistic interval around the prob-quantile."""
    n = sorted_draws.size
    half = z * np.sqrt(n * prob * (1 - prob))
    lo = int(np.clip(np.floor(n * prob - half), 0, n - 1))
    hi = int(np.clip(np.ceil(n * prob + half), 0, n - 1))
    return sorted_draws[lo], sorted_draws[hi]


class TestArithmeticCases:
    def test_margin(self):
        b = ThresholdedBelief(epsilon=1.0, noise_sd=0.2, prior_density=1.0,
                              mean=0.5, sd=0.1)
        assert threshold_margin(b) == pytest.approx(0.5 / np.sqrt(0.05), abs=1e-12)
        b0 = ThresholdedBelief(epsilon=0.7, noise_sd=0.2, prior_density=1.0,
                               mean=0.7, sd=0.4)
        assert threshold_margin(b0) == 0.0
        bs = ThresholdedBelief(epsilon=1.0, noise_sd=0.5, prior_density=1.0,
                               mean=0.2, sd=0.0)
        assert threshold_margin(bs) == pytest.approx((1.0 - 0.2) / 0.5)

    def test_mean_median_trivials(self):
        b = ThresholdedBelief(epsilon=0.3, noise_sd=0.4, prior_density=0.0,
                              mean=1.0, sd=0.5)
        assert unnorm_mean(b) == 0.0
        at_eps = ThresholdedBelief(epsilon=1.0, noise_sd=0.4, prior_density=0.8,
                                   mean=1.0, sd=0.7)
        assert unnorm_mean(at_eps) == pytest.approx(0.4, abs=1e-14)
        assert unnorm_median(at_eps) == pytest.approx(0.4, abs=1e-14)

    def test_degenerate_sd_collapses(self):
        b = ThresholdedBelief(epsilon=0.5, noise_sd=0.3, prior_density=1.2,
                              mean=0.1, sd=0.0)
        assert unnorm_mean(b) == pytest.approx(unnorm_median(b), abs=1e-15)
        assert unnorm_variance(b) == pytest.approx(0.0, abs=1e-12)
        assert unnorm_mad(b) == 0.0
        for alpha in (0.05, 0.5, 0.95):
            assert unnorm_quantile(b, alpha) == pytest.approx(unnorm_median(b),
                                                              abs=1e-15)

    def test_quantile_median_consistency(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            b = random_belief(rng)
            assert unnorm_quantile(b, 0.5) == pytest.approx(unnorm_median(b),
                                                            abs=1e-14)

    def test_quantile_domain(self):
        b = ThresholdedBelief(epsilon=0.5, noise_sd=0.3, prior_density=1.0,
                              mean=0.1, sd=0.2)
        for bad in (0.0, 1.0, -0.5):
            with pytest.raises(DomainError):
                unnorm_quantile(b, bad)


class TestMonteCarloOracles:
    N = 1_000_000

    def test_all_quantities_match_mc(self):
        rng = np.random.default_rng(42)
        for case in range(25):
            b = random_belief(rng, allow_zero_sd=False)
            draws = mc_belief_draws(b, self.N, rng)
            n = draws.size
            # mean
            se = draws.std() / np.sqrt(n)
            assert abs(unnorm_mean(b) - draws.mean()) <= 3 * se + 1e-12
            # variance (standard error of the sample variance)
            centred = draws - draws.mean()
            m2 = np.mean(centred**2)
            m4 = np.mean(centred**4)
            se_var = np.sqrt(max(m4 - m2**2, 0.0) / n)
            assert abs(unnorm_variance(b) - draws.var()) <= 3 * se_var + 1e-12
            # median and quantiles through order statistics
            # 4-sigma order-statistic windows: 75 simultaneous checks make a
            # strict 3-sigma window flaky at the 1e6 draw size
            sorted_draws = np.sort(draws)
            lo, hi = order_stat_window(sorted_draws, 0.5, z=4.0)
            assert lo - 1e-12 <= unnorm_median(b) <= hi + 1e-12
            for alpha in (0.05, 0.95):
                lo, hi = order_stat_window(sorted_draws, alpha, z=4.0)
                assert lo - 1e-12 <= unnorm_quantile(b, alpha) <= hi + 1e-12
            # MAD around the analytic median
            dev = np.abs(draws - unnorm_median(b))
            se_mad = dev.std() / np.sqrt(n)
            assert abs(unnorm_mad(b) - dev.mean()) <= 3 * se_mad + 1e-12

    def test_true_density_is_acceptance_probability(self):
        rng = np.random.default_rng(3)
        for f_val, eps, noise in ((0.4, 0.5, 0.3), (2.0, 0.5, 0.8), (-1.0, 0.0, 0.4)):
            n = 1_000_000
            delta = f_val + noise * rng.standard_normal(n)
            p_hat = np.mean(delta <= eps)
            se = np.sqrt(p_hat * (1 - p_hat) / n)
            val = true_unnorm_density(f_val, eps, noise, 1.0)
            assert abs(val - p_hat) <= 3 * se + 1e-12

    def test_true_density_trivials(self):
        assert true_unnorm_density(-50.0, 0.0, 0.5, 0.7) == pytest.approx(0.7)
        assert true_unnorm_density(0.3, 0.3, 0.5, 0.7) == pytest.approx(0.35)


class TestInvariants:
    def test_bounds_and_nonnegativity(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            b = random_belief(rng)
            pi = b.prior_density
            for val in (unnorm_mean(b), unnorm_median(b),
                        unnorm_quantile(b, rng.uniform(0.01, 0.99))):
                assert 0.0 <= val <= pi + 1e-12
            assert unnorm_variance(b) >= 0.0
            assert unnorm_mad(b) >= 0.0

    def test_quantile_monotone_in_alpha(self):
        rng = np.random.default_rng(8)
        alphas = np.linspace(0.01, 0.99, 25)
        for _ in range(20):
            b = random_belief(rng)
            vals = np.array([unnorm_quantile(b, a) for a in alphas])
            assert np.all(np.diff(vals) >= -1e-12)

    def test_vectorised_fields_broadcast(self):
        b = ThresholdedBelief(
            epsilon=0.5,
            noise_sd=0.3,
            prior_density=np.array([0.0, 1.0, 0.5]),
            mean=np.array([0.1, 0.5, 2.0]),
            sd=np.array([0.2, 0.0, 1.0]),
        )
        for fn in (unnorm_mean, unnorm_median, unnorm_variance, unnorm_mad):
            out = fn(b)
            assert out.shape == (3,)
            assert out[0] == 0.0


class TestLogVariants:
    def test_match_plain_versions(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            b = random_belief(rng)
            lp = np.log(b.prior_density)
            lm = log_unnorm_mean(lp, b.mean, b.sd, b.epsilon, b.noise_sd)
            lmed = log_unnorm_median(lp, b.mean, b.sd, b.epsilon, b.noise_sd)
            assert np.exp(lm) == pytest.approx(unnorm_mean(b), rel=1e-12)
            assert np.exp(lmed) == pytest.approx(unnorm_median(b), rel=1e-12)

    def test_stable_deep_in_tail(self):
        # far above the threshold the plain version underflows; the log one
        # must stay finite and ordered
        lv = log_unnorm_mean(0.0, 60.0, 0.5, 0.0, 1.0)
        assert np.isfinite(lv) and lv < -1000
