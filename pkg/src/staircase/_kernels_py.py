"""Pure-Python fallback for the compiled kernels.

Same signatures, same scipy primitives.  Simulated paths are bit-identical
to the compiled backend because the per-step arithmetic is written in the
same order; the likelihood reductions agree only to float rounding because
numpy sums pairwise while the compiled loop sums sequentially.
"""

import numpy as np
from scipy import special as sp

ETA_CLAMP = 38.0
_INV_SQRT2 = 0.7071067811865476
_SQRT_2_OVER_PI = 0.7978845608028654


def simulate_steps(rule_id, p1, p2, p3, x1, link_id, alpha, beta, u_out, u_noise):
    """Run one adaptive path of len(u_out) trials; returns (levels, outcomes).

    See the compiled twin for the rule_id encoding.
    """
    n = len(u_out)
    xs = np.empty(n, dtype=np.float64)
    ys = np.empty(n, dtype=np.int8)
    hfun = sp.expit if link_id == 0 else sp.ndtr
    k = 0
    x = x1
    for i in range(n):
        eta = alpha + beta * x
        if eta > ETA_CLAMP:
            eta = ETA_CLAMP
        elif eta < -ETA_CLAMP:
            eta = -ETA_CLAMP
        H = float(hfun(eta))
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
    return xs, ys


def _clamped_eta(xs, alpha, beta):
    return np.clip(alpha + beta * np.asarray(xs, dtype=np.float64),
                   -ETA_CLAMP, ETA_CLAMP)


def path_loglik(xs, ys, alpha, beta, link_id):
    """Total log-likelihood of a recorded path at (alpha, beta)."""
    eta = _clamped_eta(xs, alpha, beta)
    pos = np.asarray(ys) == 1
    if link_id == 0:
        terms = np.where(pos, sp.log_expit(eta), sp.log_expit(-eta))
    else:
        terms = np.where(pos, sp.log_ndtr(eta), sp.log_ndtr(-eta))
    return float(np.sum(terms))


def loglik_grad_hess(xs, ys, alpha, beta, link_id):
    """Log-likelihood, gradient, and observed Hessian over a path.

    Returns (ll, g_a, g_b, h_aa, h_ab, h_bb).
    """
    x = np.asarray(xs, dtype=np.float64)
    eta = _clamped_eta(x, alpha, beta)
    pos = np.asarray(ys) == 1
    if link_id == 0:
        terms = np.where(pos, sp.log_expit(eta), sp.log_expit(-eta))
        c1 = np.where(pos, sp.expit(-eta), -sp.expit(eta))
        c2 = -sp.expit(eta) * sp.expit(-eta)
    else:
        terms = np.where(pos, sp.log_ndtr(eta), sp.log_ndtr(-eta))
        r1 = _SQRT_2_OVER_PI / sp.erfcx(-eta * _INV_SQRT2)
        r0 = _SQRT_2_OVER_PI / sp.erfcx(eta * _INV_SQRT2)
        c1 = np.where(pos, r1, -r0)
        c2 = np.where(pos, -r1 * (eta + r1), r0 * (eta - r0))
    ll = float(np.sum(terms))
    ga = float(np.sum(c1))
    gb = float(np.sum(c1 * x))
    haa = float(np.sum(c2))
    hab = float(np.sum(c2 * x))
    hbb = float(np.sum(c2 * x * x))
    return ll, ga, gb, haa, hab, hbb
