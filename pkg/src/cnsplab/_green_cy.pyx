# cython: boundscheck=False, wraparound=False, cdivision=True
"""Cython twin of _green_py.green_core: one fused pass over the modes.

Same branch structure and the same double-precision formulas as the numpy
implementation, so the two backends agree to a few ulps; the win is the
absence of intermediate arrays on the hot per-mode path.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

cdef extern from "complex.h" nogil:
    double complex cexp(double complex)
    double complex csqrt(double complex)
    double cabs(double complex)

backend_name = "cython"

DEF SMALL = 1e-3


def green_core(object t_in, object xi2_in, double mu1, double mu2,
               double kappa, double gamma):
    """Entries (p0, p1, beta, e22) of the compressible propagator."""
    cdef cnp.ndarray[double, ndim=1] t_arr, xi2_arr
    t_b, xi2_b = np.broadcast_arrays(np.asarray(t_in, dtype=np.float64),
                                     np.asarray(xi2_in, dtype=np.float64))
    shape = t_b.shape
    t_arr = np.ascontiguousarray(t_b.ravel())
    xi2_arr = np.ascontiguousarray(xi2_b.ravel())

    cdef Py_ssize_t n = t_arr.shape[0]
    cdef cnp.ndarray[double, ndim=1] p0 = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[double complex, ndim=1] p1 = np.empty(n, dtype=np.complex128)
    cdef cnp.ndarray[double complex, ndim=1] beta = np.empty(n, dtype=np.complex128)
    cdef cnp.ndarray[double complex, ndim=1] e22 = np.empty(n, dtype=np.complex128)

    cdef double mub = 2.0 * mu1 + mu2
    cdef Py_ssize_t i
    cdef double t, xi2, H, disc, lbar, sqr, lm_r, lp_r, btilde
    cdef double complex lp, lm, den, delta, ep, em, elb, d2, coshs, sinhc
    cdef double complex alpha_s, beta_s

    with nogil:
        for i in range(n):
            t = t_arr[i]
            xi2 = xi2_arr[i]
            H = kappa + gamma * xi2
            disc = (mub * xi2) * (mub * xi2) - 4.0 * H
            lbar = -0.5 * mub * xi2
            if disc >= 0.0:
                # real pair: large root direct, small root via the product
                # identity lambda+ lambda- = H (no subtractive cancellation)
                sqr = (disc) ** 0.5
                lm_r = 0.5 * (-mub * xi2 - sqr)
                lp_r = H / lm_r if lm_r != 0.0 else 0.0
                lp = lp_r + 0j
                lm = lm_r + 0j
            else:
                btilde = 0.5 * (-disc) ** 0.5
                lp = lbar + 1j * btilde
                lm = lbar - 1j * btilde
            den = lp - lm
            delta = 0.5 * den * t
            if cabs(delta) < SMALL:
                elb = cexp(lbar * t + 0j)
                d2 = delta * delta
                coshs = 1.0 + d2 * (0.5 + d2 * (1.0 / 24.0 + d2 / 720.0))
                sinhc = 1.0 + d2 * (1.0 / 6.0 + d2 * (1.0 / 120.0 + d2 / 5040.0))
                alpha_s = elb * coshs
                beta_s = elb * t * sinhc
                p1[i] = alpha_s - beta_s * lbar
                e22[i] = alpha_s + beta_s * lbar
                beta[i] = beta_s
            else:
                ep = cexp(lp * t)
                em = cexp(lm * t)
                p1[i] = (lp * em - lm * ep) / den
                e22[i] = (lp * ep - lm * em) / den
                beta[i] = (ep - em) / den
            p0[i] = cexp(-mu1 * xi2 * t + 0j).real

    return (p0.reshape(shape), p1.reshape(shape),
            beta.reshape(shape), e22.reshape(shape))
