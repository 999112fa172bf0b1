"""Closed-form profiles of a ball truncated by a half-space.

Every function takes ``t`` (distance to the boundary), a scale ``eps`` and
the intrinsic dimension ``d``.  They describe the leading-order behavior of
neighbor counts, local means and local covariances near the boundary of a
d-dimensional manifold, and serve as reference values in tests.

For ``d == 1`` the ratio ``|S^{d-2}| / (d-1)`` is taken to be 1.
"""

from __future__ import annotations

import math

from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import gamma

_QUAD = dict(epsabs=1e-13, epsrel=1e-12, limit=200)


def sphere_volume(m: int) -> float:
    """Surface area of the unit sphere ``S^m`` in ``R^{m+1}``."""
    if m < 0:
        raise ValueError("sphere dimension must be non-negative")
    return 2.0 * math.pi ** ((m + 1) / 2.0) / gamma((m + 1) / 2.0)


def ball_volume(d: int) -> float:
    return sphere_volume(d - 1) / d


def _ratio(d: int) -> float:
    """``|S^{d-2}| / (d-1)``, equal to 1 when d == 1."""
    if d < 1:
        raise ValueError("intrinsic dimension must be >= 1")
    return 1.0 if d == 1 else sphere_volume(d - 2) / (d - 1)


def _check(t, eps):
    if t < 0:
        raise ValueError("distance to boundary must be non-negative")
    if not eps > 0:
        raise ValueError("scale must be positive")


def _integral(upper, power, x2=False):
    if upper <= 0:
        return 0.0
    if x2:
        f = lambda x: (1.0 - x * x) ** power * x * x
    else:
        f = lambda x: (1.0 - x * x) ** power
    return quad(f, 0.0, upper, **_QUAD)[0]


def sigma0(t, eps, d):
    """Volume fraction of the unit ball on the inner side of the cut."""
    _check(t, eps)
    full = sphere_volume(d - 1) / d
    if t > eps:
        return full
    return full / 2 + _ratio(d) * _integral(t / eps, (d - 1) / 2)


def sigma1d(t, eps, d):
    """Normal component of the first moment; zero away from the boundary."""
    _check(t, eps)
    if t > eps:
        return 0.0
    return -_ratio(d) / (d + 1) * (1 - (t / eps) ** 2) ** ((d + 1) / 2)


def sigma2(t, eps, d):
    """Second moment along a direction tangent to the boundary."""
    _check(t, eps)
    full = sphere_volume(d - 1) / (d * (d + 2))
    if t > eps:
        return full
    return full / 2 + _ratio(d) / (d + 1) * _integral(t / eps, (d + 1) / 2)


def sigma2d(t, eps, d):
    """Second moment along the inward normal direction."""
    _check(t, eps)
    full = sphere_volume(d - 1) / (d * (d + 2))
    if t > eps:
        return full
    return full / 2 + _ratio(d) * _integral(t / eps, (d - 1) / 2, x2=True)


def sigma3(t, eps, d):
    _check(t, eps)
    if t > eps:
        return 0.0
    coef = -_ratio(d) / ((d + 1) * (d + 3))
    return coef * (1 - (t / eps) ** 2) ** ((d + 3) / 2)


def sigma3d(t, eps, d):
    _check(t, eps)
    if t > eps:
        return 0.0
    u = (t / eps) ** 2
    coef = -_ratio(d) / ((d + 1) * (d + 3))
    return coef * (2 + (d + 1) * u) * (1 - u) ** ((d + 1) / 2)


def bump_B(t, eps, d):
    """Limit profile of the boundary indicator as a function of distance to the boundary."""
    s1 = sigma1d(t, eps, d)
    if s1 == 0.0:
        return 0.0
    return s1 * s1 / (sigma0(t, eps, d) * sigma2d(t, eps, d))


def boundary_constant(d):
    """Value of :func:`bump_B` on the boundary itself."""
    r = _ratio(d)
    return 4 * d * d * (d + 2) * r * r / ((d + 1) ** 2 * sphere_volume(d - 1) ** 2)


# --------------------------------------------------------------- KNN geometry
def volume_V(t, r, d):
    """Volume of the radius-r ball cut by a hyperplane at distance t from its center."""
    if r < 0 or t < 0:
        raise ValueError("t and r must be non-negative")
    if r == 0:
        return 0.0
    return sigma0(t, r, d) * r**d


def inverse_U(t, s, d):
    """Radius r with ``volume_V(t, r, d) == s``."""
    if s < 0:
        raise ValueError("volume must be non-negative")
    if s == 0:
        return 0.0
    area = sphere_volume(d - 1)
    if s < area * t**d / d:
        return (d * s / area) ** (1.0 / d)
    hi = max(t, (2 * d * s / area) ** (1.0 / d)) + 1.0
    return brentq(lambda r: volume_V(t, r, d) - s, 0.0, hi, xtol=1e-15, rtol=1e-14, maxiter=500)


def r_tilde(t, K, n, P, d):
    """Predicted K-nearest-neighbor radius at distance t from the boundary under density P."""
    if not P > 0:
        raise ValueError("density must be positive")
    return inverse_U(t, (K + 1) / (P * n), d)


def predict_eigs_eps(P, t, eps, d):
    """Leading local covariance eigenvalues divided by n, ball scheme.

    Returns the prediction for the directions tangent to the boundary and
    the one for the normal direction.
    """
    scale = P * eps ** (d + 2)
    return scale * sigma2(t, eps, d), scale * sigma2d(t, eps, d)


def predict_eig_knn_interior(P, K, n, d):
    """Interior local covariance eigenvalue divided by n, KNN scheme."""
    area = sphere_volume(d - 1)
    return (d / (area * P)) ** (2.0 / d) * ((K + 1) / n) ** ((d + 2) / d) / (d + 2)


def kde_value(N_eps, n, eps, t, d):
    """0-1 kernel density estimate with the half-space volume correction."""
    return N_eps / (n * eps**d * sigma0(t, eps, d))
