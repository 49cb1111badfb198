"""Binary-response regression primitives.

Link functions H, their densities H', per-trial scores and Fisher
information for the two-parameter model P(Y=1 | x) = H(alpha + beta*x).
Everything here is a pure function of its arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import special as sp

__all__ = [
    "ETA_CLAMP",
    "Link",
    "LinkEval",
    "ModelSpec",
    "BoundsProfile",
    "link_eval",
    "link_arrays",
    "link_inverse",
    "score",
    "score_coef",
    "fisher_unit",
    "fisher_weight",
    "loglik_term",
    "profile_terms",
    "score_bound_profile",
]

# Linear predictors are clamped to this magnitude before evaluation.  At 38
# the small tail of either link is still a positive double (probit reaches
# ~2.9e-316), while beyond it probit tail probabilities underflow to zero
# and likelihood line searches break down.
ETA_CLAMP = 38.0

# Correctly rounded literals, shared verbatim with the compiled kernels so
# both backends produce identical bits.
_INV_SQRT2 = 0.7071067811865476
_NORM_PDF_C = 0.3989422804014327
_SQRT_2_OVER_PI = 0.7978845608028654
_LOG_SQRT_2PI = 0.9189385332046727


class Link(str, Enum):
    LOGIT = "logit"
    PROBIT = "probit"


@dataclass(frozen=True)
class LinkEval:
    """Link evaluation at one linear predictor.

    H and Hbar are the success and failure probabilities evaluated on
    their own tails, so the smaller side never underflows to zero inside
    the clamp even when the larger side rounds to 1.0 in double precision.
    """

    eta: float
    H: float
    Hbar: float
    Hprime: float
    log_H: float
    log_Hbar: float


@dataclass(frozen=True)
class ModelSpec:
    """Model truth or hypothesis: link plus theta = (alpha, beta)."""

    link: Link
    alpha: float
    beta: float

    def __post_init__(self):
        object.__setattr__(self, "link", Link(self.link))
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise ValueError("alpha and beta must be finite")

    @property
    def theta(self) -> np.ndarray:
        return np.array([self.alpha, self.beta])

    def eta(self, x: float) -> float:
        return self.alpha + self.beta * x


def _clamp(eta):
    return np.clip(eta, -ETA_CLAMP, ETA_CLAMP)


def link_arrays(link: Link, eta: np.ndarray):
    """Vectorized link evaluation.

    Returns (H, Hbar, Hprime, log_H, log_Hbar) with eta clamped to
    [-ETA_CLAMP, ETA_CLAMP].
    """
    link = Link(link)
    e = _clamp(np.asarray(eta, dtype=float))
    if link is Link.LOGIT:
        log_H = sp.log_expit(e)
        log_Hbar = sp.log_expit(-e)
        H = sp.expit(e)
        Hbar = sp.expit(-e)
        Hp = H * Hbar
    else:
        log_H = sp.log_ndtr(e)
        log_Hbar = sp.log_ndtr(-e)
        # exp(log_ndtr) keeps the small tail positive where cephes ndtr
        # already returns exactly 0
        H = np.exp(log_H)
        Hbar = np.exp(log_Hbar)
        Hp = _NORM_PDF_C * np.exp(-0.5 * e * e)
    return H, Hbar, Hp, log_H, log_Hbar


def link_eval(link: Link, eta: float) -> LinkEval:
    """Evaluate H and H' at a single eta (clamped, see ETA_CLAMP)."""
    eta = float(eta)
    if not math.isfinite(eta):
        raise ValueError(f"eta must be finite, got {eta}")
    e = float(_clamp(eta))
    H, Hbar, Hp, log_H, log_Hbar = (
        float(v) for v in link_arrays(link, np.float64(e))
    )
    return LinkEval(eta=e, H=H, Hbar=Hbar, Hprime=Hp, log_H=log_H, log_Hbar=log_Hbar)


def link_inverse(link: Link, p: float) -> float:
    """Quantile function of the link distribution, p strictly inside (0,1)."""
    link = Link(link)
    p = float(p)
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie strictly inside (0,1), got {p}")
    if link is Link.LOGIT:
        return float(sp.logit(p))
    return float(sp.ndtri(p))


def _mills_ratios(eta: np.ndarray):
    """(H'/H, H'/(1-H)) for the probit link, stable over the whole clamp."""
    e = np.asarray(eta, dtype=float)
    r1 = _SQRT_2_OVER_PI / sp.erfcx(-e * _INV_SQRT2)
    r0 = _SQRT_2_OVER_PI / sp.erfcx(e * _INV_SQRT2)
    return r1, r0


def score_coef(link: Link, eta: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Scalar factor c(eta, y) of the score u = c * (1, x).

    c = (y - H) H' / (H (1-H)), evaluated branch-wise so neither tail
    cancels: logit gives y - H exactly, probit gives +-(Mills ratio).
    """
    link = Link(link)
    e = _clamp(np.asarray(eta, dtype=float))
    y = np.asarray(y)
    if link is Link.LOGIT:
        return np.where(y == 1, sp.expit(-e), -sp.expit(e))
    r1, r0 = _mills_ratios(e)
    return np.where(y == 1, r1, -r0)


def score(model: ModelSpec, x: float, y: int) -> np.ndarray:
    """Score contribution u_theta(y | x), a length-2 vector."""
    c = float(score_coef(model.link, model.eta(x), y))
    return np.array([c, c * x])


def fisher_weight(link: Link, eta: np.ndarray) -> np.ndarray:
    """Scalar weight w = H'^2 / (H (1-H)) of the unit information."""
    link = Link(link)
    e = _clamp(np.asarray(eta, dtype=float))
    if link is Link.LOGIT:
        return sp.expit(e) * sp.expit(-e)
    r1, r0 = _mills_ratios(e)
    return r1 * r0


def fisher_unit(model: ModelSpec, x: float) -> np.ndarray:
    """Per-trial information J_theta(x) = w * z z^T with z = (1, x)."""
    w = float(fisher_weight(model.link, model.eta(x)))
    return np.array([[w, w * x], [w * x, w * x * x]])


def loglik_term(model: ModelSpec, x: float, y: int) -> float:
    """Log-likelihood contribution y log H + (1-y) log(1-H)."""
    ev = link_eval(model.link, model.eta(x))
    return ev.log_H if y == 1 else ev.log_Hbar


def profile_terms(link: Link, a: np.ndarray):
    """The three boundedness quantities profiled over linear predictors a.

    Returns (a^4 H'^4/(H(1-H))^3, a^2 H'^2/(H(1-H)), H'^2/(H(1-H))),
    each evaluated in log space so extreme tails give 0 instead of 0/0.
    """
    link = Link(link)
    a = _clamp(np.asarray(a, dtype=float))
    if link is Link.LOGIT:
        log_Hp = sp.log_expit(a) + sp.log_expit(-a)
    else:
        log_Hp = -0.5 * a * a - _LOG_SQRT_2PI
    if link is Link.LOGIT:
        log_HHbar = log_Hp
    else:
        log_HHbar = sp.log_ndtr(a) + sp.log_ndtr(-a)
    with np.errstate(divide="ignore"):
        log_abs_a = np.log(np.abs(a))
    q4 = np.exp(4.0 * log_abs_a + 4.0 * log_Hp - 3.0 * log_HHbar)
    q2 = np.exp(2.0 * log_abs_a + 2.0 * log_Hp - log_HHbar)
    q0 = np.exp(2.0 * log_Hp - log_HHbar)
    return q4, q2, q0


@dataclass(frozen=True)
class BoundsProfile:
    link: Link
    eta_lo: float
    eta_hi: float
    step: float
    sup_quartic: float
    arg_quartic: float
    sup_quadratic: float
    arg_quadratic: float
    sup_weight: float
    arg_weight: float
    all_finite: bool


def score_bound_profile(
    link: Link, eta_lo: float = -40.0, eta_hi: float = 40.0, step: float = 1e-3
) -> BoundsProfile:
    """Numeric suprema of the moment-bound quantities over a wide eta grid."""
    grid = np.arange(eta_lo, eta_hi + 0.5 * step, step)
    q4, q2, q0 = profile_terms(link, grid)
    picks = []
    finite = True
    for q in (q4, q2, q0):
        finite &= bool(np.all(np.isfinite(q)))
        k = int(np.argmax(q))
        picks.append((float(q[k]), float(grid[k])))
    return BoundsProfile(
        link=Link(link),
        eta_lo=eta_lo,
        eta_hi=eta_hi,
        step=step,
        sup_quartic=picks[0][0],
        arg_quartic=picks[0][1],
        sup_quadratic=picks[1][0],
        arg_quadratic=picks[1][1],
        sup_weight=picks[2][0],
        arg_weight=picks[2][1],
        all_finite=finite,
    )
