"""Scalar special functions used by the closed-form belief and acquisition formulas.

Everything here is a thin, strictly-validated wrapper around well-tested
scipy.special routines: the Gaussian cdf/quantile (erfc-based, so relative
accuracy is retained deep in the tails) and Owen's T function (Patefield-Tandy
region-selection algorithm as shipped by scipy/Boost).  All functions accept
scalars or numpy arrays and broadcast elementwise.
"""

import numpy as np
from scipy import special as _sp

from .errors import DomainError

__all__ = [
    "norm_cdf",
    "norm_inv_cdf",
    "log_norm_cdf",
    "owen_t",
    "bvn_quadrant",
]


def _validate_finite(name, x):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError(f"{name} must be finite, got {x!r}")
    return x


def norm_cdf(x):
    """Standard Gaussian cdf.

    Parameters
    ----------
    x : float or array_like
        Finite evaluation point(s).

    Returns
    -------
    float or np.ndarray
        Values in [0, 1], monotone nondecreasing in ``x``.
    """
    x = _validate_finite("x", x)
    return _sp.ndtr(x)


def log_norm_cdf(x):
    """Log of the standard Gaussian cdf, stable for large negative ``x``."""
    x = _validate_finite("x", x)
    return _sp.log_ndtr(x)


def norm_inv_cdf(p):
    """Standard Gaussian quantile function.

    Parameters
    ----------
    p : float or array_like
        Probabilities strictly inside (0, 1).

    Returns
    -------
    float or np.ndarray
        ``x`` such that ``norm_cdf(x) == p`` (to ~1e-15 relative).
    """
    p = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(p)) or np.any(p <= 0.0) or np.any(p >= 1.0):
        raise DomainError(f"p must lie strictly in (0, 1), got {p!r}")
    return _sp.ndtri(p)


def owen_t(h, a):
    """Owen's T function T(h, a).

    T(h, a) = (1/2pi) * integral_0^a exp(-h^2 (1+x^2)/2) / (1+x^2) dx.

    Negative ``a`` is handled through the odd symmetry T(h, -a) = -T(h, a);
    T is even in ``h``.  For a >= 0 the value lies in [0, 0.25].
    """
    h = _validate_finite("h", h)
    a = _validate_finite("a", a)
    return _sp.owens_t(h, a)


def bvn_quadrant(h, rho):
    """Zero-mean, unit-variance bivariate normal cdf evaluated at (h, 0).

    Computed through the Owen's T identity
    ``BVN(h, 0; rho) = T(h, rho / sqrt(1 - rho^2)) + norm_cdf(h) / 2``.
    Used as an identity oracle in tests.

    Parameters
    ----------
    h : float or array_like
    rho : float or array_like
        Correlation coefficient(s), |rho| < 1.
    """
    h = _validate_finite("h", h)
    rho = _validate_finite("rho", rho)
    if np.any(np.abs(rho) >= 1.0):
        raise DomainError(f"|rho| must be < 1, got {rho!r}")
    slope = rho / np.sqrt(1.0 - rho**2)
    return _sp.owens_t(h, slope) + 0.5 * _sp.ndtr(h)
