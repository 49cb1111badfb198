"""Monte Carlo audit of fitted estimates against each design's limit.

Replication r of a configuration simulates one path with stream id r,
fits it, and aggregates the surviving estimates.  The stream id one past
the last replication is reserved for the reference path, so reruns with
the same master seed reproduce every draw.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
import scipy.special as sp

from .chain import build_transition, limiting_information, stationary
from .designs import (
    Bruceton,
    DesignRule,
    RobbinsMonro,
    SimSeed,
    next_level,
    rule_to_dict,
    simulate_path,
)
from .inference import (
    FitStatus,
    ci_fieller,
    ci_wald,
    fit_mle,
    plugin_information,
    quantile_point,
    score_process,
)
from .models import Link, ModelSpec

__all__ = [
    "COVERAGE_LEVEL",
    "McConfig",
    "McReport",
    "coverage",
    "fieller_covers",
    "normality_stats",
    "run_mc",
]

COVERAGE_LEVEL = 0.95
MIN_REPS = 100
MIN_N = 50
REFERENCE_PATH_N = 100_000
CHAIN_HALF_WIDTH = 30
COND_CHECKPOINTS = 8


@dataclass(frozen=True)
class McConfig:
    """Replicated-simulation setting.

    link_for_fit defaults to the generating link; passing the other one
    audits misspecified fitting.
    """

    rule: DesignRule
    model: ModelSpec
    n: int
    reps: int
    master_seed: int
    link_for_fit: Optional[Link] = None

    def __post_init__(self):
        if self.n < MIN_N:
            raise ValueError(f"need at least {MIN_N} trials per replication")
        if self.reps < MIN_REPS:
            raise ValueError(f"need at least {MIN_REPS} replications")
        if self.master_seed < 0:
            raise ValueError("master_seed must be nonnegative")
        link = self.link_for_fit
        link = self.model.link if link is None else Link(link)
        object.__setattr__(self, "link_for_fit", link)


def _ks_distance(sample) -> float:
    # one-sample Kolmogorov distance against the standard normal cdf
    s = np.sort(np.asarray(sample, dtype=np.float64))
    m = s.size
    if m == 0:
        raise ValueError("need a nonempty sample")
    F = sp.ndtr(s)
    i = np.arange(1, m + 1, dtype=np.float64)
    return float(np.maximum(i / m - F, F - (i - 1.0) / m).max())


def normality_stats(estimates, theta0, J, n: int = 1) -> Tuple[float, float]:
    """Per-coordinate KS distances of sqrt(n)*J^{1/2}(est - theta0) from N(0,1)."""
    est = np.asarray(estimates, dtype=np.float64)
    if est.ndim != 2 or est.shape[1] != 2:
        raise ValueError("estimates must be an (m, 2) array")
    J = np.asarray(J, dtype=np.float64)
    w, V = np.linalg.eigh(J)
    if w[0] <= 0.0 or w[0] < 1e-12 * w[-1]:
        raise ValueError("information matrix is singular; cannot standardize")
    root = (V * np.sqrt(w)) @ V.T
    dev = math.sqrt(n) * (est - np.asarray(theta0, dtype=np.float64))
    z = dev @ root.T
    return (_ks_distance(z[:, 0]), _ks_distance(z[:, 1]))


def fieller_covers(fs, value) -> bool:
    """Coverage counting rule: unbounded-set outcomes count as covering."""
    if fs.kind != "interval":
        return True
    return fs.contains(value)


def _replicate(cfg: McConfig, order):
    """Fit every replication, visiting streams in the given order."""
    idx = list(range(cfg.reps)) if order is None else [int(r) for r in order]
    if sorted(idx) != list(range(cfg.reps)):
        raise ValueError("_order must be a permutation of range(reps)")
    is_rm = isinstance(cfg.rule, RobbinsMonro)
    gamma_rm = None
    if is_rm and cfg.model.beta != 0.0:
        gamma_rm = quantile_point(cfg.model.theta, cfg.model.link, cfg.rule.q)
    out = {}
    for r in idx:
        path = simulate_path(cfg.rule, cfg.model, cfg.n,
                             SimSeed(cfg.master_seed, r))
        est = fit_mle(path, cfg.link_for_fit)
        gap = None
        if gamma_rm is not None:
            gap = abs(next_level(cfg.rule, path) - gamma_rm)
        out[r] = (est, gap)
    return [out[r] for r in range(cfg.reps)]


def _coverage_counts(cfg: McConfig, recs, q: float, level: float):
    if cfg.model.beta == 0.0:
        return None, None
    gamma_true = quantile_point(cfg.model.theta, cfg.model.link, q)
    kept = wald_hits = fieller_hits = 0
    for est, _ in recs:
        if est.status is not FitStatus.CONVERGED:
            continue
        kept += 1
        if ci_wald(est, cfg.link_for_fit, q, level).contains(gamma_true):
            wald_hits += 1
        if fieller_covers(ci_fieller(est, cfg.link_for_fit, q, level),
                          gamma_true):
            fieller_hits += 1
    if kept == 0:
        return None, None
    return wald_hits / kept, fieller_hits / kept


def _reference(cfg: McConfig):
    """Limiting information for the design, routed by rule kind.

    Bruceton gets the random-walk stationary prediction; the bisection
    rule gets a long-path plug-in at the truth; the stochastic
    approximation rule has a singular limit, reported as a conditioning
    trajectory instead of a matrix.
    """
    if isinstance(cfg.rule, RobbinsMonro):
        ref_path = simulate_path(cfg.rule, cfg.model, cfg.n,
                                 SimSeed(cfg.master_seed, cfg.reps))
        proc = score_process(ref_path, cfg.model.theta, cfg.model.link)
        ks = np.unique(np.geomspace(10, cfg.n, COND_CHECKPOINTS).astype(int))
        traj = tuple((int(k), float(np.linalg.cond(proc.qv[k]))) for k in ks)
        return "none_singular", None, None, traj
    if isinstance(cfg.rule, Bruceton):
        chain = build_transition(cfg.model, d=cfg.rule.d, x1=cfg.rule.x1,
                                 K=CHAIN_HALF_WIDTH)
        pi, _ = stationary(chain)
        J, _ = limiting_information(chain, pi)
        return "chain", J, np.linalg.inv(J), None
    ref_path = simulate_path(cfg.rule, cfg.model, REFERENCE_PATH_N,
                             SimSeed(cfg.master_seed, cfg.reps))
    J = plugin_information(ref_path, cfg.model.theta, cfg.model.link)
    return "long_path", J, np.linalg.inv(J), None


@dataclass(frozen=True)
class McReport:
    """Aggregated replication results with the design's reference limit."""

    config: McConfig
    q: float
    level: float
    kept_reps: int
    dropped: int
    unreliable: bool
    mean: Optional[np.ndarray]
    cov: Optional[np.ndarray]
    ks: Optional[Tuple[float, float]]
    coverage_wald: Optional[float]
    coverage_fieller: Optional[float]
    reference_source: str
    reference_j: Optional[np.ndarray]
    reference_j_inv: Optional[np.ndarray]
    cond_trajectory: Optional[Tuple[Tuple[int, float], ...]]
    rm_gamma_gap: Optional[float]
    per_rep: Tuple[Tuple[int, Optional[float], Optional[float], str], ...]

    def __post_init__(self):
        if self.kept_reps + self.dropped != self.config.reps:
            raise ValueError("kept and dropped replications must sum to reps")
        if len(self.per_rep) != self.config.reps:
            raise ValueError("need one per_rep row per replication")
        for name in ("mean", "cov", "reference_j", "reference_j_inv"):
            v = getattr(self, name)
            if v is not None:
                v = np.array(v, dtype=np.float64)
                v.setflags(write=False)
                object.__setattr__(self, name, v)

    def to_dict(self) -> dict:
        cfg = self.config

        def cell(v):
            return None if v is None else np.asarray(v).tolist()

        return {
            "rule": rule_to_dict(cfg.rule),
            "model": {"link": cfg.model.link.value, "alpha": cfg.model.alpha,
                      "beta": cfg.model.beta},
            "n": cfg.n,
            "reps": cfg.reps,
            "master_seed": cfg.master_seed,
            "link_for_fit": cfg.link_for_fit.value,
            "q": self.q,
            "level": self.level,
            "kept_reps": self.kept_reps,
            "dropped": self.dropped,
            "unreliable": self.unreliable,
            "mean": cell(self.mean),
            "cov": cell(self.cov),
            "ks": None if self.ks is None else list(self.ks),
            "coverage_wald": self.coverage_wald,
            "coverage_fieller": self.coverage_fieller,
            "reference_source": self.reference_source,
            "reference_j": cell(self.reference_j),
            "reference_j_inv": cell(self.reference_j_inv),
            "cond_trajectory": None if self.cond_trajectory is None else
                [[k, c] for k, c in self.cond_trajectory],
            "rm_gamma_gap": self.rm_gamma_gap,
            "per_rep": [[r, a, b, s] for r, a, b, s in self.per_rep],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    def to_csv(self, dest) -> None:
        lines = ["rep,alpha_hat,beta_hat,status"]
        for r, a, b, status in self.per_rep:
            cols = ["" if v is None else f"{float(v)!r}" for v in (a, b)]
            lines.append(f"{r},{cols[0]},{cols[1]},{status}")
        text = "\n".join(lines) + "\n"
        if hasattr(dest, "write"):
            dest.write(text)
        else:
            Path(dest).write_text(text)


def run_mc(cfg: McConfig, q: float = 0.5, _order=None) -> McReport:
    """Replicate, fit, and compare against the design's limiting information.

    Non-converged fits are dropped (and counted); more than half dropped
    marks the whole report unreliable.  Coverage is evaluated at the
    fixed 95% level for the true q-quantile.
    """
    recs = _replicate(cfg, _order)
    per_rep = []
    kept_rows = []
    gaps = []
    for r, (est, gap) in enumerate(recs):
        if est.status is FitStatus.CONVERGED:
            a, b = (float(v) for v in est.theta_hat)
            per_rep.append((r, a, b, est.status.value))
            kept_rows.append((a, b))
        else:
            per_rep.append((r, None, None, est.status.value))
        if gap is not None:
            gaps.append(gap)

    kept = len(kept_rows)
    dropped = cfg.reps - kept
    source, J_ref, J_inv, traj = _reference(cfg)

    mean = cov = ks = None
    if kept >= 1:
        thetas = np.array(kept_rows, dtype=np.float64)
        # moments of sqrt(n)*(theta_hat - theta0), the scale on which
        # the inverse information is the predicted covariance
        mean = math.sqrt(cfg.n) * (thetas.mean(axis=0) - cfg.model.theta)
        if kept >= 2:
            cov = cfg.n * np.cov(thetas, rowvar=False, ddof=1)
            if J_ref is not None:
                ks = normality_stats(thetas, cfg.model.theta, J_ref, n=cfg.n)

    cov_w, cov_f = _coverage_counts(cfg, recs, q, COVERAGE_LEVEL)
    gap_med = float(np.median(gaps)) if gaps else None

    return McReport(config=cfg, q=q, level=COVERAGE_LEVEL, kept_reps=kept,
                    dropped=dropped, unreliable=dropped * 2 > cfg.reps,
                    mean=mean, cov=cov, ks=ks, coverage_wald=cov_w,
                    coverage_fieller=cov_f, reference_source=source,
                    reference_j=J_ref, reference_j_inv=J_inv,
                    cond_trajectory=traj, rm_gamma_gap=gap_med,
                    per_rep=tuple(per_rep))


def coverage(cfg: McConfig, q: float, level: float,
             _order=None) -> Tuple[float, float]:
    """Empirical (Wald, Fieller) coverage of the true q-quantile."""
    recs = _replicate(cfg, _order)
    cov_w, cov_f = _coverage_counts(cfg, recs, q, level)
    if cov_w is None:
        raise ValueError("no converged replications to evaluate coverage on")
    return cov_w, cov_f
