"""Covariate chain of the up-and-down staircase on a truncated lattice.

The level sequence is a Markov chain on x1 + d*{-K..K}: from an interior
level the next trial moves down with probability H(eta) and up with the
complement.  Truncation reflects the escaping move back onto the boundary
state itself, which keeps rows stochastic; K is exposed and results are
required to be stable under doubling it rather than pretending the infinite
chain is solved.

The untruncated walk has period 2 (levels alternate lattice parity), so the
stationary law is found by a direct linear solve instead of power iteration;
the lazy operator (P+I)/2 gives an independent iterative route and the two
must agree.  Boundary self-loops make the truncated operator technically
aperiodic, but the loop mass is tiny, so plain power iteration would still
mix far too slowly to be acceptable.
"""

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.special as sp

from .models import Link, ModelSpec, fisher_weight, link_arrays

__all__ = [
    "LatticeChain",
    "FosterReport",
    "ChainReport",
    "build_transition",
    "stationary",
    "stationary_lazy",
    "limiting_information",
    "foster_check",
    "analyze_chain",
]

RESIDUAL_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class LatticeChain:
    """Row-stochastic transition operator over a centered level lattice."""

    model: ModelSpec
    d: float
    x1: float
    K: int
    grid: np.ndarray
    P: np.ndarray

    @property
    def n_states(self) -> int:
        return 2 * self.K + 1


def build_transition(model: ModelSpec, d: float, x1: float,
                     K: int) -> LatticeChain:
    """Transition matrix of the staircase level chain, truncated at +-K steps.

    Uses the clamped link evaluation, which floors every probability away
    from 0 and 1 and thereby keeps the truncated chain irreducible however
    wide the grid.
    """
    if not model.beta > 0:
        raise ValueError("the level chain needs a positive slope")
    d = float(d)
    if not (math.isfinite(d) and d > 0):
        raise ValueError("step d must be positive")
    K = int(K)
    if K < 2:
        raise ValueError("truncation K must be at least 2")
    x1 = float(x1)

    grid = x1 + d * np.arange(-K, K + 1, dtype=float)
    big, _, _, _, _ = link_arrays(model.link, model.alpha + model.beta * grid)
    m = 2 * K + 1
    P = np.zeros((m, m))
    idx = np.arange(1, m - 1)
    P[idx, idx - 1] = big[1:-1]
    P[idx, idx + 1] = 1.0 - big[1:-1]
    P[0, 1] = 1.0 - big[0]
    P[0, 0] = big[0]
    P[m - 1, m - 2] = big[m - 1]
    P[m - 1, m - 1] = 1.0 - big[m - 1]
    grid.setflags(write=False)
    P.setflags(write=False)
    return LatticeChain(model=model, d=d, x1=x1, K=K, grid=grid, P=P)


def _as_matrix(chain_or_P) -> np.ndarray:
    if isinstance(chain_or_P, LatticeChain):
        return chain_or_P.P
    P = np.asarray(chain_or_P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError("expected a square transition matrix")
    return P


def _finish(pi: np.ndarray, P: np.ndarray, tol: float):
    if pi.min() < -1e-12:
        raise ValueError(f"stationary solve left negative mass {pi.min():.3e}")
    pi = np.clip(pi, 0.0, None)
    pi = pi / pi.sum()
    residual = float(np.abs(pi @ P - pi).sum())
    if residual >= tol:
        raise ValueError(f"stationary residual {residual:.3e} exceeds {tol:.1e}")
    return pi, residual


def stationary(chain_or_P):
    """Stationary distribution via the direct singular solve.

    Replaces the last balance equation with the normalization sum(pi) = 1
    and solves; returns (pi, residual) with residual = |pi P - pi|_1.
    """
    P = _as_matrix(chain_or_P)
    m = P.shape[0]
    A = P.T - np.eye(m)
    A[-1, :] = 1.0
    b = np.zeros(m)
    b[-1] = 1.0
    try:
        pi = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"stationary system is singular: {exc}") from exc
    return _finish(pi, P, RESIDUAL_TOL)


def stationary_lazy(chain_or_P, tol: float = 1e-13, max_doublings: int = 60):
    """Iterative cross-check through the aperiodic lazy operator (P+I)/2.

    Squares the lazy matrix until its rows coincide, which sidesteps the
    period-2 oscillation that defeats plain power iteration on P.
    """
    P = _as_matrix(chain_or_P)
    Q = 0.5 * (P + np.eye(P.shape[0]))
    for _ in range(max_doublings):
        Q = Q @ Q
        if np.ptp(Q, axis=0).max() < tol:
            break
    pi = Q.mean(axis=0)
    return _finish(pi, P, 1e-8)


def limiting_information(chain: LatticeChain, pi):
    """Stationary-weighted unit information and its smallest eigenvalue.

    J = sum_x pi(x) J_theta(x); invertible exactly when pi spreads over at
    least two lattice points, since each term is rank one in z = (1, x).
    """
    pi = np.asarray(pi, dtype=float)
    if pi.shape != chain.grid.shape:
        raise ValueError("pi must live on the chain grid")
    if not np.all(np.isfinite(pi)) or pi.min() < -1e-12:
        raise ValueError("pi must be a nonnegative distribution")
    model = chain.model
    w = fisher_weight(model.link, model.alpha + model.beta * chain.grid)
    t = pi * w
    j01 = float((t * chain.grid).sum())
    J = np.array([
        [float(t.sum()), j01],
        [j01, float((t * chain.grid * chain.grid).sum())],
    ])
    eig_min = float(np.linalg.eigvalsh(J)[0])
    return J, eig_min


@dataclass(frozen=True)
class FosterReport:
    """Drift scan of V(x) = |x| along the level lattice.

    passed means some finite center {-n0..n0} leaves a strictly negative
    drift margin eps everywhere outside it, up to the scanned horizon.
    eps_curve lists (n0, margin) for the first few candidate centers; tail
    holds the up-move mass times V at the landing point for x = d, 2d, ...
    """

    link: str
    theta: tuple
    d: float
    x_max: int
    reverse: bool
    passed: bool
    n0: Optional[int]
    eps: Optional[float]
    xs: tuple
    delta: tuple
    eps_curve: tuple
    tail: tuple
    finite_on_f: Optional[bool]


def foster_check(model: ModelSpec, d: float = 1.0, x_max: int = 200,
                 reverse: bool = False) -> FosterReport:
    """Scan the mean one-step change of |x| for a negative margin off-center.

    Works on the proof's normalized lattice centered at zero and evaluates
    the link without clamping: the quantities here are infinite-chain
    diagnostics, and the far tail must be allowed to reach exact zero.
    A scan that finds no margin reports FAIL rather than raising; that is
    the expected outcome for a nonpositive slope or a diverging rule.
    """
    d = float(d)
    if not (math.isfinite(d) and d > 0):
        raise ValueError("step d must be positive")
    x_max = int(x_max)
    if x_max < 2:
        raise ValueError("x_max must be at least 2")

    j = np.arange(-x_max, x_max + 1)
    x = d * j
    eta = model.alpha + model.beta * x
    if model.link is Link.LOGIT:
        big = sp.expit(eta)
    else:
        big = sp.ndtr(eta)
    if reverse:
        p_down, p_up = 1.0 - big, big
    else:
        p_down, p_up = big, 1.0 - big

    ev = p_down * np.abs(x - d) + p_up * np.abs(x + d)
    delta = ev - np.abs(x)

    pos = delta[x_max + 1:]
    neg = delta[:x_max][::-1]
    two_sided = np.maximum(pos, neg)
    # worst[k] = max drift over |j| >= k+1
    worst = np.maximum.accumulate(two_sided[::-1])[::-1]

    hits = np.flatnonzero(worst < 0.0)
    n0 = int(hits[0]) if hits.size else None
    eps = float(-worst[n0]) if n0 is not None else None
    eps_curve = tuple((k, float(-worst[k])) for k in range(min(21, x_max)))
    tail = tuple(float(v) for v in p_up[x_max + 1:] * (x[x_max + 1:] + d))
    finite_on_f = None
    if n0 is not None:
        finite_on_f = bool(np.isfinite(ev[x_max - n0:x_max + n0 + 1]).all())

    return FosterReport(
        link=model.link.value,
        theta=(model.alpha, model.beta),
        d=d,
        x_max=x_max,
        reverse=reverse,
        passed=n0 is not None,
        n0=n0,
        eps=eps,
        xs=tuple(float(v) for v in x),
        delta=tuple(float(v) for v in delta),
        eps_curve=eps_curve,
        tail=tail,
        finite_on_f=finite_on_f,
    )


@dataclass(frozen=True)
class ChainReport:
    """Stationary analysis bundle: law, limiting information, drift."""

    grid: tuple
    pi: tuple
    J: tuple
    residual: float
    eig_min: float
    period: int
    drift: FosterReport

    def __post_init__(self):
        pi = np.asarray(self.pi)
        if pi.min() < 0.0:
            raise ValueError("pi must be nonnegative")
        if abs(pi.sum() - 1.0) > 1e-12:
            raise ValueError("pi must sum to 1")
        if len(self.pi) != len(self.grid):
            raise ValueError("pi and grid lengths differ")
        J = np.asarray(self.J, dtype=float)
        if J.shape != (2, 2) or abs(J[0, 1] - J[1, 0]) > 1e-12:
            raise ValueError("J must be a symmetric 2x2 matrix")
        if np.linalg.eigvalsh(J)[0] < -1e-12:
            raise ValueError("J must be positive semidefinite")

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    def pi_to_csv(self, dest) -> None:
        lines = ["x,pi"]
        lines += [f"{float(x)!r},{float(p)!r}"
                  for x, p in zip(self.grid, self.pi)]
        text = "\n".join(lines) + "\n"
        if hasattr(dest, "write"):
            dest.write(text)
        else:
            Path(dest).write_text(text)


def analyze_chain(model: ModelSpec, d: float, x1: float, K: int,
                  x_max: int = 200) -> ChainReport:
    """Build the truncated chain and assemble the full report.

    The drift scan always runs on the proof's zero-centered lattice, so x1
    only shifts the stationary solve, not the Foster margins.
    """
    chain = build_transition(model, d, x1, K)
    pi, residual = stationary(chain)
    J, eig_min = limiting_information(chain, pi)
    drift = foster_check(model, d=d, x_max=x_max)
    return ChainReport(
        grid=tuple(float(v) for v in chain.grid),
        pi=tuple(float(v) for v in pi),
        J=((float(J[0, 0]), float(J[0, 1])),
           (float(J[1, 0]), float(J[1, 1]))),
        residual=residual,
        eig_min=eig_min,
        period=2,
        drift=drift,
    )
