"""Analysis of the perturbed bisection rule as a Markov kernel on [0,1].

From level x the next level is uniform on [x/2, x/2+eps] after a response
(mass H(eta(x))) and uniform on [(x+1)/2-eps, (x+1)/2] otherwise.  General
bounds (a, b) are affinely normalized to (0, 1) first, which rescales eps by
1/(b-a) and maps the model to (alpha + beta a, beta (b-a)).

Three analyses live here: an exactly discretized invariant measure (the
kernel is a mixture of two uniforms, so cell masses are interval overlaps,
with no quadrature error), a Lyapunov drift check around the upper bound
x = 1, and the generation-by-generation interval union that witnesses how
the perturbation spreads bisection iterates across the whole interval.
"""

import json
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.special as sp

from .chain import stationary
from .designs import MarkovLanglie
from .models import Link, ModelSpec, link_arrays

__all__ = [
    "LanglieKernel",
    "InvariantMeasure",
    "LanglieDriftReport",
    "IntervalUnion",
    "make_kernel",
    "kernel_density",
    "transition_matrix",
    "invariant_measure",
    "drift_check",
    "interval_union",
    "occupation_histogram",
]

DRIFT_SCAN_STEP = 1e-4
DOUBLING_TV_TOL = 1e-3


@dataclass(frozen=True)
class LanglieKernel:
    """Normalized perturbed-bisection kernel on the unit interval."""

    a: float
    b: float
    eps: float
    model: ModelSpec
    grid_m: int

    def __post_init__(self):
        if self.a != 0.0 or self.b != 1.0:
            raise ValueError("kernel bounds must be normalized to (0, 1); "
                             "use make_kernel for general bounds")
        if not (0.0 < self.eps < 0.5):
            raise ValueError("eps must lie strictly between 0 and 1/2")
        if int(self.grid_m) < 10:
            raise ValueError("grid_m must be at least 10")
        object.__setattr__(self, "grid_m", int(self.grid_m))


def make_kernel(rule: MarkovLanglie, model: ModelSpec,
                grid_m: int = 1000) -> LanglieKernel:
    """Normalize a rule on (a, b) to the canonical kernel on (0, 1)."""
    width = rule.b - rule.a
    return LanglieKernel(
        a=0.0,
        b=1.0,
        eps=rule.eps / width,
        model=ModelSpec(model.link, model.alpha + model.beta * rule.a,
                        model.beta * width),
        grid_m=grid_m,
    )


def _h_of(kernel: LanglieKernel, x):
    big, _, _, _, _ = link_arrays(kernel.model.link,
                                  kernel.model.alpha + kernel.model.beta
                                  * np.asarray(x, dtype=float))
    return big


def kernel_density(kernel: LanglieKernel, x: float, xp: float) -> float:
    """Transition density k(x, xp): two uniform blocks of width eps."""
    x, xp = float(x), float(xp)
    if not (0.0 <= x <= 1.0 and 0.0 <= xp <= 1.0):
        raise ValueError("x and xp must lie in [0, 1]")
    eps = kernel.eps
    big = float(_h_of(kernel, x))
    val = 0.0
    if x / 2 <= xp <= x / 2 + eps:
        val += big / eps
    if (x + 1) / 2 - eps <= xp <= (x + 1) / 2:
        val += (1.0 - big) / eps
    return val


def transition_matrix(kernel: LanglieKernel) -> np.ndarray:
    """Cell transition masses from midpoint sources, exact in the target.

    Row i spreads H_i over the cells overlapping [x_i/2, x_i/2+eps] and the
    complement over the upper block; overlaps are plain interval lengths.
    """
    m = kernel.grid_m
    eps = kernel.eps
    mid = (np.arange(m) + 0.5) / m
    big = _h_of(kernel, mid)
    edges = np.arange(m + 1) / m
    P = np.zeros((m, m))
    for i in range(m):
        for mass, lo in ((big[i], mid[i] / 2),
                         (1.0 - big[i], (mid[i] + 1) / 2 - eps)):
            hi = lo + eps
            j0 = max(0, int(math.floor(lo * m)))
            j1 = min(m - 1, int(math.ceil(hi * m)) - 1)
            js = np.arange(j0, j1 + 1)
            overlap = (np.minimum(hi, edges[js + 1])
                       - np.maximum(lo, edges[js]))
            P[i, js] += mass * np.clip(overlap, 0.0, None) / eps
    return P


def _reachable_hull(eps: float):
    lo, hi = 0.0, 1.0
    for _ in range(200):
        nlo = min(lo / 2, (lo + 1) / 2 - eps)
        nhi = max(hi / 2 + eps, (hi + 1) / 2)
        if nlo == lo and nhi == hi:
            break
        lo, hi = nlo, nhi
    return lo, hi


@dataclass(frozen=True)
class InvariantMeasure:
    """Cell masses of the discretized invariant law."""

    grid_m: int
    pi: tuple
    residual: float
    tv_doubling: float
    reachable: tuple

    @property
    def midpoints(self) -> tuple:
        return tuple((j + 0.5) / self.grid_m for j in range(self.grid_m))

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    def to_csv(self, dest) -> None:
        lines = ["cell_midpoint,mass"]
        lines += [f"{mu!r},{float(p)!r}"
                  for mu, p in zip(self.midpoints, self.pi)]
        text = "\n".join(lines) + "\n"
        if hasattr(dest, "write"):
            dest.write(text)
        else:
            Path(dest).write_text(text)


def invariant_measure(kernel: LanglieKernel) -> InvariantMeasure:
    """Solve pi P = pi on the cell grid and vet it against a doubled grid.

    The doubled-resolution law, aggregated back onto the coarse cells, must
    sit within 1e-3 total variation of the coarse solution or the result is
    rejected outright.
    """
    P = transition_matrix(kernel)
    pi, residual = stationary(P)
    fine = transition_matrix(replace(kernel, grid_m=2 * kernel.grid_m))
    pi_fine, _ = stationary(fine)
    agg = pi_fine.reshape(kernel.grid_m, 2).sum(axis=1)
    tv = 0.5 * float(np.abs(pi - agg).sum())
    if tv >= DOUBLING_TV_TOL:
        raise ValueError(
            f"grid doubling moved the invariant measure by TV {tv:.2e}; "
            "refine grid_m")
    return InvariantMeasure(
        grid_m=kernel.grid_m,
        pi=tuple(float(v) for v in pi),
        residual=residual,
        tv_doubling=tv,
        reachable=_reachable_hull(kernel.eps),
    )


@dataclass(frozen=True)
class LanglieDriftReport:
    """Lyapunov drift of V(t) = 1 + m (t - 1) near the upper bound.

    The closed form at x = 1 is m [eps (H1 - 1/2) - H1/2] + 1; it is
    negative exactly when eps < eps_max and m > m_min.  eta is the largest
    scanned level at which the drift is still nonnegative, so the drift is
    strictly negative on (eta, 1].
    """

    ok: bool
    reason: Optional[str]
    h1: float
    eps: float
    eps_max: Optional[float]
    eps_ok: Optional[bool]
    binding: Optional[str]
    m_min: Optional[float]
    m: Optional[float]
    drift_at_1: Optional[float]
    scan_drift_at_1: Optional[float]
    eta: Optional[float]
    passed: bool

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def drift_check(kernel: LanglieKernel, m: Optional[float] = None
                ) -> LanglieDriftReport:
    """Drift margins at the upper bound, plus a downward scan for eta.

    Uses the unclamped link: these are infinite-precision proof diagnostics
    (same policy as the staircase drift scan).  A right-uncovered median
    (H1 <= 1/2) yields a violation report rather than an exception.
    """
    model = kernel.model
    eta1 = model.alpha + model.beta
    if model.link is Link.LOGIT:
        h1 = float(sp.expit(eta1))
    else:
        h1 = float(sp.ndtr(eta1))

    if h1 <= 0.5:
        return LanglieDriftReport(
            ok=False, reason="median_not_covered", h1=h1, eps=kernel.eps,
            eps_max=None, eps_ok=None, binding=None, m_min=None, m=None,
            drift_at_1=None, scan_drift_at_1=None, eta=None, passed=False)

    eps = kernel.eps
    eps_max = h1 / (2 * (h1 - 0.5))
    eps_ok = eps < min(eps_max, 0.5)
    binding = "one_half" if 0.5 <= eps_max else "eps_max"
    m_min = 1.0 / (h1 / 2 - eps * (h1 - 0.5))
    if m is None:
        m = 2.0 * m_min
    m = float(m)
    drift_at_1 = m * (eps * (h1 - 0.5) - h1 / 2) + 1.0

    xs = np.arange(int(round(1.0 / DRIFT_SCAN_STEP)) + 1) * DRIFT_SCAN_STEP
    if model.link is Link.LOGIT:
        big = sp.expit(model.alpha + model.beta * xs)
    else:
        big = sp.ndtr(model.alpha + model.beta * xs)
    drift = m * (-xs / 2 + (1 - big) / 2 + eps * (big - 0.5)) + 1.0
    nonneg = xs[drift >= 0.0]
    eta = float(nonneg.max()) if nonneg.size else 0.0

    return LanglieDriftReport(
        ok=True,
        reason=None,
        h1=h1,
        eps=eps,
        eps_max=eps_max,
        eps_ok=eps_ok,
        binding=binding,
        m_min=m_min,
        m=m,
        drift_at_1=drift_at_1,
        scan_drift_at_1=float(drift[-1]),
        eta=eta,
        passed=bool(eps_ok and drift_at_1 < 0.0 and eta < 1.0),
    )


@dataclass(frozen=True)
class IntervalUnion:
    """Merged image of the start point under i-1 rounds of both maps."""

    i: int
    intervals: tuple
    raw_length: float
    is_full: bool

    def __post_init__(self):
        if self.i < 1:
            raise ValueError("generation index starts at 1")
        for lo, hi in self.intervals:
            if hi < lo:
                raise ValueError("intervals must satisfy lo <= hi")
        for (_, hi1), (lo2, _) in zip(self.intervals, self.intervals[1:]):
            if lo2 <= hi1:
                raise ValueError("intervals must be sorted and disjoint")

    def to_json(self) -> str:
        return json.dumps({
            "i": self.i,
            "intervals": [[lo, hi] for lo, hi in self.intervals],
            "raw_length": self.raw_length,
            "is_full": self.is_full,
        })


def interval_union(i: int, eps: float, x1: float = 0.5) -> IntervalUnion:
    """Generation i of the two-map interval construction.

    Each round sends [lo, hi] to [lo/2, hi/2 + eps] and
    [(lo+1)/2 - eps, (hi+1)/2]; overlapping pieces are merged every round,
    which leaves the union unchanged.  The raw (unmerged) common length
    follows L_i = L_{i-1}/2 + eps and is tracked alongside.
    """
    i = int(i)
    if i < 1:
        raise ValueError("generation index starts at 1")
    if not (0.0 < eps < 0.5):
        raise ValueError("eps must lie strictly between 0 and 1/2")
    if not (0.0 <= x1 <= 1.0):
        raise ValueError("x1 must lie in [0, 1]")

    intervals = [(float(x1), float(x1))]
    raw_length = 0.0
    for _ in range(i - 1):
        raw = []
        for lo, hi in intervals:
            raw.append((lo / 2, hi / 2 + eps))
            raw.append(((lo + 1) / 2 - eps, (hi + 1) / 2))
        raw.sort()
        merged = [raw[0]]
        for lo, hi in raw[1:]:
            mlo, mhi = merged[-1]
            if lo <= mhi:
                merged[-1] = (mlo, max(mhi, hi))
            else:
                merged.append((lo, hi))
        intervals = merged
        raw_length = raw_length / 2 + eps

    shrink = 0.5 ** (i - 1)
    lo_bound = x1 * shrink
    hi_bound = 1.0 - (1.0 - x1) * shrink
    is_full = (len(intervals) == 1
               and abs(intervals[0][0] - lo_bound) <= 1e-12
               and abs(intervals[0][1] - hi_bound) <= 1e-12)
    return IntervalUnion(i=i, intervals=tuple(intervals),
                         raw_length=raw_length, is_full=is_full)


def occupation_histogram(xs, grid_m: int) -> np.ndarray:
    """Fraction of path time spent in each of grid_m equal cells of [0,1]."""
    xs = np.asarray(xs, dtype=float)
    counts, _ = np.histogram(xs, bins=int(grid_m), range=(0.0, 1.0))
    return counts / xs.size
