# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: sequential path simulation and per-path
log-likelihood accumulation.

Numerical primitives come from scipy's Cython bindings, so results are
bit-identical to the pure-numpy fallback, which calls the same functions
through scipy.special.
"""

from scipy.special.cython_special cimport erfcx, expit, log_expit, log_ndtr, ndtr

import numpy as np

cdef double ETA_CLAMP = 38.0
cdef double INV_SQRT2 = 0.7071067811865476
cdef double SQRT_2_OVER_PI = 0.7978845608028654


cdef inline double _clamp(double eta):
    if eta > ETA_CLAMP:
        return ETA_CLAMP
    if eta < -ETA_CLAMP:
        return -ETA_CLAMP
    return eta


def simulate_steps(int rule_id, double p1, double p2, double p3, double x1,
                   int link_id, double alpha, double beta,
                   const double[::1] u_out, const double[::1] u_noise):
    """Run one adaptive path of len(u_out) trials; returns (levels, outcomes).

    rule_id: 0 staircase-down, 1 staircase-up (divergent), 2 stochastic
    approximation with gain p1/i toward quantile p2, 3 bisection toward
    stored bounds (p1, p2) with perturbation scale p3.
    u_noise[i] is consumed by the transition out of trial i+1.
    """
    cdef Py_ssize_t n = u_out.shape[0]
    xs_arr = np.empty(n, dtype=np.float64)
    ys_arr = np.empty(n, dtype=np.int8)
    cdef double[::1] xs = xs_arr
    cdef signed char[::1] ys = ys_arr
    cdef Py_ssize_t i
    cdef long k = 0  # lattice index for the staircase rules: x = x1 + k*p1
    cdef double x = x1
    cdef double eta, H
    cdef int y
    for i in range(n):
        eta = _clamp(alpha + beta * x)
        if link_id == 0:
            H = expit(eta)
        else:
            H = ndtr(eta)
        y = 1 if u_out[i] < H else 0
        xs[i] = x
        ys[i] = y
        if i + 1 < n:
            if rule_id == 0:
                k = k - 1 if y == 1 else k + 1
                x = x1 + k * p1
            elif rule_id == 1:
                k = k + 1 if y == 1 else k - 1
                x = x1 + k * p1
            elif rule_id == 2:
                x = x - (p1 / (i + 1)) * (y - p2)
            else:
                if y == 1:
                    x = (p1 + x) / 2.0 + p3 * u_noise[i]
                else:
                    x = (x + p2) / 2.0 - p3 * u_noise[i]
    return xs_arr, ys_arr


def path_loglik(const double[::1] xs, const signed char[::1] ys,
                double alpha, double beta, int link_id):
    """Total log-likelihood of a recorded path at (alpha, beta)."""
    cdef Py_ssize_t n = xs.shape[0]
    cdef Py_ssize_t i
    cdef double ll = 0.0
    cdef double eta
    for i in range(n):
        eta = _clamp(alpha + beta * xs[i])
        if link_id == 0:
            ll += log_expit(eta) if ys[i] == 1 else log_expit(-eta)
        else:
            ll += log_ndtr(eta) if ys[i] == 1 else log_ndtr(-eta)
    return ll


def loglik_grad_hess(const double[::1] xs, const signed char[::1] ys,
                     double alpha, double beta, int link_id):
    """Log-likelihood, gradient, and observed Hessian accumulated over a path.

    Returns (ll, g_a, g_b, h_aa, h_ab, h_bb).  Probit second derivatives
    use Mills ratios through erfcx, stable over the whole clamped range.
    """
    cdef Py_ssize_t n = xs.shape[0]
    cdef Py_ssize_t i
    cdef double ll = 0.0, ga = 0.0, gb = 0.0
    cdef double haa = 0.0, hab = 0.0, hbb = 0.0
    cdef double x, eta, c1, c2, r
    cdef int y
    for i in range(n):
        x = xs[i]
        y = ys[i]
        eta = _clamp(alpha + beta * x)
        if link_id == 0:
            if y == 1:
                ll += log_expit(eta)
                c1 = expit(-eta)
            else:
                ll += log_expit(-eta)
                c1 = -expit(eta)
            c2 = -expit(eta) * expit(-eta)
        else:
            if y == 1:
                ll += log_ndtr(eta)
                r = SQRT_2_OVER_PI / erfcx(-eta * INV_SQRT2)
                c1 = r
                c2 = -r * (eta + r)
            else:
                ll += log_ndtr(-eta)
                r = SQRT_2_OVER_PI / erfcx(eta * INV_SQRT2)
                c1 = -r
                c2 = r * (eta - r)
        ga += c1
        gb += c1 * x
        haa += c2
        hab += c2 * x
        hbb += c2 * x * x
    return ll, ga, gb, haa, hab, hbb
