"""Independent reference implementations used as test oracles.

These deliberately avoid the production code paths: the GP oracle works in
the augmented-kernel representation with plain dense solves, Owen's T is
computed by adaptive quadrature of its defining integral, and the belief
quantities are estimated by brute-force Monte Carlo.
"""

import numpy as np
from scipy.integrate import dblquad, quad


def owen_t_quad(h, a):
    """Owen's T by adaptive quadrature of the defining integral."""
    sign = 1.0
    if a < 0:
        a, sign = -a, -1.0
    if a == 0:
        return 0.0
    val, _ = quad(
        lambda x: np.exp(-0.5 * h * h * (1.0 + x * x)) / (1.0 + x * x),
        0.0,
        a,
        epsabs=1e-14,
        epsrel=1e-13,
        limit=200,
    )
    return sign * val / (2.0 * np.pi)


def bvn_quadrant_quad(h, rho):
    """P(X <= h, Y <= 0) for standard bivariate normal by 2-D quadrature."""
    det = 1.0 - rho * rho
    norm = 1.0 / (2.0 * np.pi * np.sqrt(det))

    def pdf(y, x):
        return norm * np.exp(-(x * x - 2.0 * rho * x * y + y * y) / (2.0 * det))

    val, _ = dblquad(pdf, -8.5, h, -8.5, 0.0, epsabs=1e-11, epsrel=1e-10)
    return val


def sq_exp(X1, X2, signal_var, lengthscales):
    X1 = np.atleast_2d(X1)
    X2 = np.atleast_2d(X2)
    d2 = np.sum(
        ((X1[:, None, :] - X2[None, :, :]) / lengthscales) ** 2, axis=2
    )
    return signal_var * np.exp(-0.5 * d2)


def dense_gp_predict(X, y, Q, hyper, basis):
    """Predictive mean and covariance via the augmented-kernel formulas.

    The basis-coefficient prior is folded into the kernel:
    mean h^T b, kernel k + h^T B h'.  `y` may be a (t,) vector or a (t, m)
    matrix of observation sets sharing the design X, in which case the mean
    comes back with shape (n, m).
    """
    X = np.atleast_2d(X)
    Q = np.atleast_2d(Q)
    y = np.asarray(y, dtype=float)
    H_X = basis.design_matrix(X)
    H_Q = basis.design_matrix(Q)
    B = basis.prior_cov
    b = basis.prior_mean
    sv, ls = hyper.signal_var, hyper.lengthscales
    K = sq_exp(X, X, sv, ls) + H_X @ B @ H_X.T + hyper.noise_var * np.eye(X.shape[0])
    Ks = sq_exp(X, Q, sv, ls) + H_X @ B @ H_Q.T  # (t, n)
    Kqq = sq_exp(Q, Q, sv, ls) + H_Q @ B @ H_Q.T
    resid = (y.T - H_X @ b).T if y.ndim == 2 else y - H_X @ b
    alpha = np.linalg.solve(K, resid)
    mean = (H_Q @ b)[:, None] + Ks.T @ alpha if y.ndim == 2 else H_Q @ b + Ks.T @ alpha
    cov = Kqq - Ks.T @ np.linalg.solve(K, Ks)
    return mean, cov


def mc_belief_draws(belief, n_draws, rng):
    """Monte-Carlo draws of the unnormalised posterior density at one point."""
    f = belief.mean + belief.sd * rng.standard_normal(n_draws)
    from scipy.special import ndtr

    return belief.prior_density * ndtr((belief.epsilon - f) / belief.noise_sd)
