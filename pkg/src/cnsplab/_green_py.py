"""Pure-numpy evaluation of the linearized Green-symbol building blocks.

For the compressible 2x2 subsystem in the variables (a_hat, V_hat) with
V = (xi.u_hat)/|xi| the generator is

    B(xi) = [[0, -i|xi|], [-i*H/|xi|, -mubar*|xi|^2]],   H = kappa + gamma*|xi|^2,

with eigenvalues lambda_pm = (-mubar*|xi|^2 +- sqrt(mubar^2 |xi|^4 - 4H))/2.
``green_core`` returns the ingredients of exp(t*B) in a form that stays
finite for all arguments, including the coincident-eigenvalue radius:

    p0   = exp(-mu1*|xi|^2 t)                      (solenoidal heat factor)
    p1   = (l+ e^{l- t} - l- e^{l+ t})/(l+ - l-)   (density-density entry)
    beta = (e^{l+ t} - e^{l- t})/(l+ - l-)         (oscillation factor)
    e22  = (l+ e^{l+ t} - l- e^{l- t})/(l+ - l-)   (velocity-velocity entry)

so that exp(tB) = [[p1, -i|xi|*beta], [-i*H*beta/|xi|, e22]].  Near the
discriminant root the divided differences switch to the analytic confluent
limit via a sinh(z)/z series, uniformly accurate to ~1e-13.
"""

from __future__ import annotations

import math

import numpy as np

_SMALL = 1e-3  # |delta| below which the sinhc/cosh series is used

backend_name = "python"


def stable_eigenvalues(xi2, mu1, mu2, kappa, gamma):
    """lambda_pm without subtractive cancellation.

    Real case (disc >= 0): the large root is computed directly and the small
    one through the product identity lambda+ lambda- = H, which keeps the
    slow mode accurate at large |xi| where the naive quadratic formula loses
    ~|lambda-/lambda+| digits.  Complex case: conjugate pair, no issue.
    """
    xi2 = np.asarray(xi2, dtype=float)
    mub = 2.0 * mu1 + mu2
    H = kappa + gamma * xi2
    disc = (mub * xi2) ** 2 - 4.0 * H
    real = disc >= 0
    sqr = np.sqrt(np.where(real, disc, 0.0))
    lm_r = 0.5 * (-mub * xi2 - sqr)
    lp_r = np.where(lm_r != 0, H / np.where(lm_r != 0, lm_r, 1.0), 0.0)
    btilde = 0.5 * np.sqrt(np.where(real, 0.0, -disc))
    lbar = -0.5 * mub * xi2
    lp = np.where(real, lp_r, lbar) + 1j * np.where(real, 0.0, btilde)
    lm = np.where(real, lm_r, lbar) - 1j * np.where(real, 0.0, btilde)
    return lp, lm


def green_core(t, xi2, mu1, mu2, kappa, gamma):
    """Entries (p0, p1, beta, e22) of the compressible propagator.

    ``t`` may be a scalar or an array broadcastable against ``xi2``.
    """
    t = np.asarray(t, dtype=float)
    xi2 = np.asarray(xi2, dtype=float)
    lp, lm = stable_eigenvalues(xi2, mu1, mu2, kappa, gamma)
    den = lp - lm
    delta = 0.5 * den * t
    small = np.abs(delta) < _SMALL

    den_safe = np.where(small, 1.0, den)
    ep = np.exp(lp * t)
    em = np.exp(lm * t)
    p1 = (lp * em - lm * ep) / den_safe
    e22 = (lp * ep - lm * em) / den_safe
    beta = (ep - em) / den_safe

    # series branch through the coincident-eigenvalue radius
    lbar = 0.5 * (lp + lm)
    elb = np.exp(lbar * t)
    d2 = delta * delta
    coshs = 1.0 + d2 * (0.5 + d2 * (1.0 / 24.0 + d2 / 720.0))
    sinhc = 1.0 + d2 * (1.0 / 6.0 + d2 * (1.0 / 120.0 + d2 / 5040.0))
    alpha_s = elb * coshs
    beta_s = elb * t * sinhc
    p1 = np.where(small, alpha_s - beta_s * lbar, p1)
    e22 = np.where(small, alpha_s + beta_s * lbar, e22)
    beta = np.where(small, beta_s, beta)

    p0 = np.exp(-mu1 * xi2 * t)
    return p0, p1, beta, e22


# ----------------------------------------------------------------------
# phi functions for the exponential integrator
# ----------------------------------------------------------------------

def _phi_series(z, shift: int, nterms: int = 14):
    """sum_{k>=0} z^k / (k+shift)!"""
    out = np.zeros_like(z)
    term = np.full_like(z, 1.0 / math.factorial(shift))
    for k in range(nterms):
        out = out + term
        term = term * z / (k + 1 + shift)
    return out


def _phi_deriv_series(z, shift: int, nterms: int = 14):
    """sum_{k>=1} k z^{k-1} / (k+shift)!"""
    out = np.zeros_like(z)
    power = np.ones_like(z)
    for k in range(1, nterms):
        out = out + k * power / math.factorial(k + shift)
        power = power * z
    return out


def phi_scalar(order: int, z):
    """phi_1(z) = (e^z - 1)/z, phi_2(z) = (e^z - 1 - z)/z^2, stably."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 0.1
    zs = np.where(small, 1.0, z)
    if order == 1:
        direct = (np.exp(zs) - 1.0) / zs
    elif order == 2:
        direct = (np.exp(zs) - 1.0 - zs) / zs ** 2
    else:
        raise ValueError("order must be 1 or 2")
    return np.where(small, _phi_series(z, shift=order), direct)


def phi_derivative(order: int, z):
    """d/dz phi_order(z) via phi_k' = (phi_{k-1} - k*phi_k)/z (phi_0 = e^z)."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 0.1
    zs = np.where(small, 1.0, z)
    if order == 1:
        direct = (np.exp(zs) - phi_scalar(1, zs)) / zs
    else:
        direct = (phi_scalar(1, zs) - 2.0 * phi_scalar(2, zs)) / zs
    return np.where(small, _phi_deriv_series(z, shift=order), direct)


def phi_pair_2x2(order: int, wp, wm):
    """(a, b) with phi_order(W) = a*I + b*(W - wbar*I) for 2x2 blocks.

    W has eigenvalues wp, wm (wbar = their mean); a is the eigenvalue mean of
    the scalar phi and b the divided difference, replaced by phi'(wbar) at
    confluence.
    """
    wp = np.asarray(wp, dtype=complex)
    wm = np.asarray(wm, dtype=complex)
    wbar = 0.5 * (wp + wm)
    delta = 0.5 * (wp - wm)
    fp = phi_scalar(order, wp)
    fm = phi_scalar(order, wm)
    a = 0.5 * (fp + fm)
    tiny = np.abs(delta) < 1e-4 * np.maximum(1.0, np.abs(wbar))
    denom = np.where(tiny, 1.0, 2.0 * delta)
    b = np.where(tiny, phi_derivative(order, wbar), (fp - fm) / denom)
    return a, b
