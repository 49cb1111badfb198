"""Maximum likelihood fitting, score/variation processes, and quantile
confidence intervals for recorded paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from . import backend
from .designs import ExperimentPath, ReverseBruceton
from .models import ETA_CLAMP, Link, _mills_ratios, link_arrays, link_inverse

GRAD_TOL = 1e-8
MAX_ITER = 100
THETA_DIVERGED = 1e3


class FitStatus(str, Enum):
    CONVERGED = "converged"
    SEPARATED = "separated"
    SINGULAR = "singular_information"
    MAX_ITER = "max_iter"


@dataclass(frozen=True)
class EstimateResult:
    """Fit outcome: estimate, plug-in information, covariance, status."""

    theta_hat: Optional[np.ndarray]
    J_hat: Optional[np.ndarray]
    cov_hat: Optional[np.ndarray]
    status: FitStatus
    n: int
    loglik: Optional[float]
    flags: Tuple[str, ...] = ()

    def __post_init__(self):
        for name in ("theta_hat", "J_hat", "cov_hat"):
            v = getattr(self, name)
            if v is not None:
                v = np.array(v, dtype=np.float64)
                v.setflags(write=False)
                object.__setattr__(self, name, v)

    def to_dict(self) -> dict:
        def cell(v):
            return None if v is None else v.tolist()

        return {
            "theta_hat": cell(self.theta_hat),
            "J_hat": cell(self.J_hat),
            "cov_hat": cell(self.cov_hat),
            "status": self.status.value,
            "n": self.n,
            "loglik": self.loglik,
            "flags": list(self.flags),
        }


@dataclass(frozen=True)
class ScoreProcess:
    """Partial-sum score process U and its predictable variation qv.

    Row j holds the value after j trials, so row 0 is zero and row n is
    the endpoint; qv[-1] equals the plug-in information bit-for-bit.
    """

    U: np.ndarray
    qv: np.ndarray


@dataclass(frozen=True)
class LanDiagnostics:
    h: Tuple[float, float]
    A_n: float
    U_nn: np.ndarray
    qv_nn: np.ndarray
    remainder: float


_LINK_IDS = {Link.LOGIT: 0, Link.PROBIT: 1}


def _coerce_link(link) -> Link:
    return link if isinstance(link, Link) else Link(link)


def _clamped_eta(xs: np.ndarray, theta) -> np.ndarray:
    return np.clip(theta[0] + theta[1] * xs, -ETA_CLAMP, ETA_CLAMP)


def _score_coefs(link: Link, eta: np.ndarray, pos: np.ndarray) -> np.ndarray:
    if link is Link.LOGIT:
        H, Hbar, *_ = link_arrays(link, eta)
        return np.where(pos, Hbar, -H)
    r1, r0 = _mills_ratios(eta)
    return np.where(pos, r1, -r0)


def _fisher_weights(link: Link, eta: np.ndarray) -> np.ndarray:
    if link is Link.LOGIT:
        H, Hbar, *_ = link_arrays(link, eta)
        return H * Hbar
    r1, r0 = _mills_ratios(eta)
    return r1 * r0


def _qv_partial(xs: np.ndarray, theta, link: Link) -> np.ndarray:
    """Cumulative unit-information sums, one (2, 2) slice per trial count."""
    eta = _clamped_eta(xs, theta)
    w = _fisher_weights(link, eta)
    n = xs.size
    out = np.zeros((n + 1, 2, 2))
    out[1:, 0, 0] = np.cumsum(w)
    out[1:, 0, 1] = out[1:, 1, 0] = np.cumsum(w * xs)
    out[1:, 1, 1] = np.cumsum(w * xs * xs)
    return out


def plugin_information(path: ExperimentPath, theta, link) -> np.ndarray:
    """Average unit Fisher information over the path at theta."""
    link = _coerce_link(link)
    qv = _qv_partial(path.xs, theta, link)
    return qv[-1] / path.n


def score_process(path: ExperimentPath, theta, link) -> ScoreProcess:
    """Normalized score partial sums and their predictable variation.

    U[j] = n^{-1/2} * sum of the first j per-trial scores; qv[j] is the
    matching variation sum scaled by 1/n.
    """
    link = _coerce_link(link)
    xs, n = path.xs, path.n
    eta = _clamped_eta(xs, theta)
    c = _score_coefs(link, eta, path.ys == 1)
    U = np.zeros((n + 1, 2))
    U[1:, 0] = np.cumsum(c)
    U[1:, 1] = np.cumsum(c * xs)
    U /= math.sqrt(n)
    qv = _qv_partial(xs, theta, link) / n
    U.setflags(write=False)
    qv.setflags(write=False)
    return ScoreProcess(U=U, qv=qv)


def lan_remainder(path: ExperimentPath, theta0, h, link) -> LanDiagnostics:
    """Quadratic-expansion remainder of the log-likelihood ratio at
    theta0 + h/sqrt(n)."""
    link = _coerce_link(link)
    link_id = _LINK_IDS[link]
    n = path.n
    rn = math.sqrt(n)
    a1, b1 = theta0[0] + h[0] / rn, theta0[1] + h[1] / rn
    ll1 = backend.path_loglik(path.xs, path.ys, a1, b1, link_id)
    ll0 = backend.path_loglik(path.xs, path.ys, theta0[0], theta0[1], link_id)
    A_n = ll1 - ll0
    proc = score_process(path, theta0, link)
    U_nn = proc.U[-1]
    qv_nn = proc.qv[-1]
    hv = np.asarray(h, dtype=np.float64)
    remainder = A_n - hv @ U_nn + 0.5 * hv @ qv_nn @ hv
    return LanDiagnostics(h=(float(h[0]), float(h[1])), A_n=A_n,
                          U_nn=U_nn, qv_nn=qv_nn, remainder=float(remainder))


def _solve_2x2(m00, m01, m11, r0, r1):
    det = m00 * m11 - m01 * m01
    scale = max(abs(m00), abs(m01), abs(m11))
    if not np.isfinite(det) or scale == 0.0 or abs(det) <= 1e-14 * scale * scale:
        return None
    return ((m11 * r0 - m01 * r1) / det, (m00 * r1 - m01 * r0) / det)


def fit_mle(path: ExperimentPath, link) -> EstimateResult:
    """Newton fit of (alpha, beta) with step-halving on the concave
    log-likelihood.

    Complete separation is detected geometrically up front; divergence of
    the iterates (|theta| > 1e3) reports quasi-separation.  A singular
    Newton system or singular plug-in information reports
    singular_information.
    """
    link = _coerce_link(link)
    link_id = _LINK_IDS[link]
    xs, ys = path.xs, path.ys
    n = path.n
    if n < 2:
        raise ValueError("need at least two trials to fit")
    if not np.all(np.isfinite(xs)):
        raise ValueError("levels must be finite")
    flags = ("divergent_design",) if isinstance(path.rule, ReverseBruceton) else ()

    def result(status, theta=None, J=None, cov=None, ll=None):
        return EstimateResult(theta_hat=theta, J_hat=J, cov_hat=cov,
                              status=status, n=n, loglik=ll, flags=flags)

    pos = ys == 1
    if pos.all() or (~pos).all():
        return result(FitStatus.SEPARATED)
    if np.unique(xs).size == 1:
        # mixed outcomes at a single level: a ridge of maximizers
        return result(FitStatus.SINGULAR)
    x1s, x0s = xs[pos], xs[~pos]
    # ties count: a shared boundary level still sends the slope to infinity
    if x1s.min() >= x0s.max() or x1s.max() <= x0s.min():
        return result(FitStatus.SEPARATED)

    a, b = 0.0, 0.0
    ll, ga, gb, haa, hab, hbb = backend.loglik_grad_hess(xs, ys, a, b, link_id)
    for _ in range(MAX_ITER):
        if max(abs(ga), abs(gb)) < GRAD_TOL:
            theta = np.array([a, b])
            J = plugin_information(path, theta, link)
            cov = _invert_information(J, n)
            if cov is None:
                return result(FitStatus.SINGULAR, theta=theta, J=J, ll=ll)
            return result(FitStatus.CONVERGED, theta=theta, J=J, cov=cov, ll=ll)
        step = _solve_2x2(-haa, -hab, -hbb, ga, gb)
        if step is None:
            return result(FitStatus.SINGULAR)
        t = 1.0
        while True:
            a2, b2 = a + t * step[0], b + t * step[1]
            cand = backend.loglik_grad_hess(xs, ys, a2, b2, link_id)
            if cand[0] >= ll:
                break
            t /= 2.0
            if t < 2.0 ** -60:
                return result(FitStatus.MAX_ITER, theta=np.array([a, b]), ll=ll)
        a, b = a2, b2
        ll, ga, gb, haa, hab, hbb = cand
        if math.hypot(a, b) > THETA_DIVERGED:
            return result(FitStatus.SEPARATED)
    return result(FitStatus.MAX_ITER, theta=np.array([a, b]), ll=ll)


def _invert_information(J: np.ndarray, n: int) -> Optional[np.ndarray]:
    det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
    scale = float(np.abs(J).max())
    if not np.isfinite(det) or scale == 0.0 or det <= 1e-14 * scale * scale:
        return None
    inv = np.array([[J[1, 1], -J[0, 1]], [-J[0, 1], J[0, 0]]]) / det
    return inv / n


def quantile_point(theta, link, q: float) -> float:
    """Stimulus level whose response probability is q under theta."""
    link = _coerce_link(link)
    alpha, beta = float(theta[0]), float(theta[1])
    if beta == 0.0:
        raise ValueError("quantile undefined for zero slope")
    return (link_inverse(link, q) - alpha) / beta


def _z_quantile(level: float) -> float:
    if not 0.0 < level < 1.0:
        raise ValueError("confidence level must lie in (0, 1)")
    return link_inverse(Link.PROBIT, (1.0 + level) / 2.0)


@dataclass(frozen=True)
class WaldInterval:
    lower: float
    upper: float
    gamma_hat: float
    half_width: float
    q: float
    level: float

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper

    @property
    def width(self) -> float:
        return self.upper - self.lower


@dataclass(frozen=True)
class FiellerSet:
    """Fieller confidence set for the q-quantile.

    kind "interval" is the bounded case [lower, upper].  For kind
    "exclusive" the set is everything OUTSIDE the open gap
    (lower, upper); "half_line" keeps one side; "whole_line" is all
    reals.  Unbounded kinds have width inf.
    """

    kind: str
    lower: float
    upper: float
    gamma_hat: Optional[float]
    q: float
    level: float

    def contains(self, value: float) -> bool:
        if self.kind == "interval":
            return self.lower <= value <= self.upper
        if self.kind == "exclusive":
            return value <= self.lower or value >= self.upper
        if self.kind == "half_line":
            if math.isinf(self.lower):
                return value <= self.upper
            return value >= self.lower
        return True

    @property
    def bounded(self) -> bool:
        return self.kind == "interval"

    @property
    def width(self) -> float:
        if self.kind == "interval":
            return self.upper - self.lower
        return math.inf

    def to_dict(self) -> dict:
        return {"kind": self.kind, "lower": self.lower, "upper": self.upper,
                "gamma_hat": self.gamma_hat, "q": self.q, "level": self.level}


def _require_converged(est: EstimateResult):
    if est.status is not FitStatus.CONVERGED:
        raise ValueError(f"interval needs a converged fit, got {est.status.value}")
    if est.cov_hat is None:
        raise ValueError("interval needs a covariance estimate")


def ci_wald(est: EstimateResult, link, q: float, level: float) -> WaldInterval:
    """Delta-method interval for the q-quantile."""
    _require_converged(est)
    link = _coerce_link(link)
    z = _z_quantile(level)
    alpha, beta = est.theta_hat
    if beta == 0.0:
        raise ValueError("quantile undefined for zero slope")
    gamma = quantile_point(est.theta_hat, link, q)
    g = np.array([-1.0 / beta, -gamma / beta])
    var = float(g @ est.cov_hat @ g)
    if not np.isfinite(var) or var < 0.0:
        raise ValueError("covariance is not usable for a Wald interval")
    hw = z * math.sqrt(var)
    return WaldInterval(lower=gamma - hw, upper=gamma + hw, gamma_hat=gamma,
                        half_width=hw, q=q, level=level)


def ci_fieller(est: EstimateResult, link, q: float, level: float) -> FiellerSet:
    """Fieller confidence set for the q-quantile.

    Solves (L - alpha - beta*g)^2 <= z^2 * var(alpha + beta*g) for g.
    The set always contains the point estimate; when the leading
    coefficient is not positive the unbounded pathology is reported
    rather than raised.
    """
    _require_converged(est)
    link = _coerce_link(link)
    z = _z_quantile(level)
    alpha, beta = (float(v) for v in est.theta_hat)
    v_aa = float(est.cov_hat[0, 0])
    v_ab = float(est.cov_hat[0, 1])
    v_bb = float(est.cov_hat[1, 1])
    L = link_inverse(link, q)
    t = L - alpha
    z2 = z * z
    A = beta * beta - z2 * v_bb
    B = -2.0 * (t * beta + z2 * v_ab)
    C = t * t - z2 * v_aa
    gamma = None if beta == 0.0 else (L - alpha) / beta

    def build(kind, lo, hi):
        return FiellerSet(kind=kind, lower=lo, upper=hi, gamma_hat=gamma,
                          q=q, level=level)

    disc = B * B - 4.0 * A * C
    if A > 0.0:
        # nonempty by PSD covariance; clip tiny negative discriminants
        root = math.sqrt(max(disc, 0.0))
        return build("interval", (-B - root) / (2 * A), (-B + root) / (2 * A))
    if A < 0.0:
        if disc > 0.0:
            root = math.sqrt(disc)
            lo = (-B + root) / (2 * A)
            hi = (-B - root) / (2 * A)
            return build("exclusive", lo, hi)
        return build("whole_line", -math.inf, math.inf)
    if B > 0.0:
        return build("half_line", -math.inf, -C / B)
    if B < 0.0:
        return build("half_line", -C / B, math.inf)
    return build("whole_line", -math.inf, math.inf)
