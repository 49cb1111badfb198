"""Adaptive design rules: level-update formulas, path simulation, and
path serialization.

All transition arithmetic here mirrors the kernel expressions exactly so
that a recorded path replays bit-for-bit through next_level.
"""

from __future__ import annotations

import dataclasses
import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import ClassVar, Optional, Sequence, Union

import numpy as np

from . import backend
from .models import Link, ModelSpec


@dataclass(frozen=True)
class Bruceton:
    """Fixed-step staircase: down by d on response, up by d otherwise."""

    x1: float
    d: float
    kind: ClassVar[str] = "bruceton"

    def __post_init__(self):
        if not self.d > 0:
            raise ValueError("step d must be positive")


@dataclass(frozen=True)
class ReverseBruceton:
    """Staircase with the moves swapped; transient, kept as a foil."""

    x1: float
    d: float
    kind: ClassVar[str] = "reverse_bruceton"

    def __post_init__(self):
        if not self.d > 0:
            raise ValueError("step d must be positive")


@dataclass(frozen=True)
class RobbinsMonro:
    """Stochastic approximation toward the q-quantile with gain c/i."""

    x1: float
    c: float
    q: float
    kind: ClassVar[str] = "robbins_monro"

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("gain constant c must be positive")
        if not 0.0 < self.q < 1.0:
            raise ValueError("target quantile q must lie in (0, 1)")


@dataclass(frozen=True)
class MarkovLanglie:
    """Randomized bisection toward the bounds (a, b) with perturbation eps."""

    a: float
    b: float
    eps: float
    kind: ClassVar[str] = "langlie"

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError("bounds must satisfy a < b")
        if not 0.0 < self.eps < (self.b - self.a) / 2.0:
            raise ValueError("eps must lie strictly in (0, (b - a) / 2)")

    @property
    def x1(self) -> float:
        return (self.a + self.b) / 2.0


DesignRule = Union[Bruceton, ReverseBruceton, RobbinsMonro, MarkovLanglie]

_RULE_CLASSES = {
    "bruceton": Bruceton,
    "reverse_bruceton": ReverseBruceton,
    "robbins_monro": RobbinsMonro,
    "langlie": MarkovLanglie,
}


@dataclass(frozen=True)
class Trial:
    index: int
    x: float
    y: int

    def __post_init__(self):
        if self.index < 1:
            raise ValueError("trial index starts at 1")
        if self.y not in (0, 1):
            raise ValueError("outcome must be 0 or 1")


@dataclass(frozen=True)
class SimSeed:
    """Seed for one simulated path.

    Noise and outcome draws come from two child streams of the same
    SeedSequence, so extending a path keeps its prefix intact.
    """

    master: int
    stream: int = 0

    def __post_init__(self):
        if self.master < 0 or self.stream < 0:
            raise ValueError("seed components must be nonnegative")

    def noise_rng(self) -> np.random.Generator:
        return np.random.default_rng(
            np.random.SeedSequence(self.master, spawn_key=(self.stream, 0)))

    def outcome_rng(self) -> np.random.Generator:
        return np.random.default_rng(
            np.random.SeedSequence(self.master, spawn_key=(self.stream, 1)))

    def to_dict(self) -> dict:
        return {"master": self.master, "stream": self.stream}

    @classmethod
    def from_dict(cls, d: dict) -> "SimSeed":
        return cls(master=int(d["master"]), stream=int(d.get("stream", 0)))


def rule_to_dict(rule: DesignRule) -> dict:
    d = {"kind": rule.kind}
    for f in dataclasses.fields(rule):
        d[f.name] = getattr(rule, f.name)
    return d


def rule_from_dict(d: dict) -> DesignRule:
    d = dict(d)
    kind = d.pop("kind", None)
    cls = _RULE_CLASSES.get(kind)
    if cls is None:
        raise ValueError(f"unknown design kind: {kind!r}")
    expected = {f.name for f in dataclasses.fields(cls)}
    if set(d) != expected:
        raise ValueError(f"design {kind!r} needs fields {sorted(expected)}")
    return cls(**{k: float(v) for k, v in d.items()})


def start_level(rule: DesignRule) -> float:
    return rule.x1


def _scalar_next(rule: DesignRule, index: int, x: float, y: int,
                 noise: Optional[float]) -> float:
    if isinstance(rule, Bruceton):
        k = int(round((x - rule.x1) / rule.d))
        k = k - 1 if y == 1 else k + 1
        return rule.x1 + k * rule.d
    if isinstance(rule, ReverseBruceton):
        k = int(round((x - rule.x1) / rule.d))
        k = k + 1 if y == 1 else k - 1
        return rule.x1 + k * rule.d
    if isinstance(rule, RobbinsMonro):
        return x - (rule.c / index) * (y - rule.q)
    if y == 1:
        return (rule.a + x) / 2.0 + rule.eps * noise
    return (x + rule.b) / 2.0 - rule.eps * noise


def next_level(rule: DesignRule,
               history: Union["ExperimentPath", Sequence[Trial]],
               noise: Optional[float] = None) -> float:
    """Level for the next trial given the recorded history.

    Levels of the staircase rules are snapped to the x1 + d*Z lattice, so
    replaying a stored path reproduces the kernel arithmetic exactly.
    The bisection rule consumes one uniform noise value per transition;
    the other rules must not be given one.
    """
    is_langlie = isinstance(rule, MarkovLanglie)
    if not is_langlie and noise is not None:
        raise ValueError("noise is only consumed by the randomized bisection rule")
    if isinstance(history, ExperimentPath):
        n = history.n
        last = Trial(n, float(history.xs[-1]), int(history.ys[-1])) if n else None
    else:
        n = len(history)
        last = history[-1] if n else None
    if n == 0:
        return start_level(rule)
    if is_langlie:
        if noise is None:
            raise ValueError("the randomized bisection rule requires a noise value")
        if not 0.0 <= noise <= 1.0:
            raise ValueError("noise must be a uniform draw in [0, 1]")
    return _scalar_next(rule, last.index, last.x, last.y, noise)


def rm_gain(c: float, i: int) -> float:
    """Gain c/i of the stochastic-approximation rule at trial index i."""
    if not c > 0:
        raise ValueError("gain constant c must be positive")
    if i < 1:
        raise ValueError("trial index starts at 1")
    return c / i


_RULE_IDS = {Bruceton: 0, ReverseBruceton: 1, RobbinsMonro: 2, MarkovLanglie: 3}


def _kernel_args(rule: DesignRule):
    rid = _RULE_IDS[type(rule)]
    if isinstance(rule, (Bruceton, ReverseBruceton)):
        return rid, rule.d, 0.0, 0.0, rule.x1
    if isinstance(rule, RobbinsMonro):
        return rid, rule.c, rule.q, 0.0, rule.x1
    return rid, rule.a, rule.b, rule.eps, rule.x1


@dataclass(frozen=True, eq=False)
class ExperimentPath:
    """One realized experiment: a rule plus the level/outcome arrays.

    Arrays are read-only.  noise holds the uniform draws consumed by the
    bisection transitions (entry i feeds the step out of trial i+1); it
    is None for the other rules.
    """

    rule: DesignRule
    xs: np.ndarray
    ys: np.ndarray
    seed: Optional[SimSeed] = None
    noise: Optional[np.ndarray] = None

    def __post_init__(self):
        xs = np.array(self.xs, dtype=np.float64)
        ys = np.array(self.ys, dtype=np.int8)
        if xs.ndim != 1 or xs.shape != ys.shape:
            raise ValueError("levels and outcomes must be 1-d arrays of equal length")
        if xs.size == 0:
            raise ValueError("a path holds at least one trial")
        if not np.all((ys == 0) | (ys == 1)):
            raise ValueError("outcomes must be 0 or 1")
        noise = self.noise
        if noise is not None:
            noise = np.array(noise, dtype=np.float64)
            if noise.ndim != 1 or not xs.size - 1 <= noise.size <= xs.size:
                raise ValueError("noise length must be n-1 or n")
            noise.setflags(write=False)
        xs.setflags(write=False)
        ys.setflags(write=False)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)
        object.__setattr__(self, "noise", noise)

    @property
    def n(self) -> int:
        return int(self.xs.size)

    @property
    def trials(self) -> list:
        return [Trial(i + 1, float(self.xs[i]), int(self.ys[i]))
                for i in range(self.n)]

    @classmethod
    def from_trials(cls, rule: DesignRule, trials: Sequence[Trial],
                    seed: Optional[SimSeed] = None,
                    noise: Optional[np.ndarray] = None) -> "ExperimentPath":
        for pos, t in enumerate(trials):
            if t.index != pos + 1:
                raise ValueError("trial indices must run 1, 2, ... without gaps")
        xs = np.array([t.x for t in trials], dtype=np.float64)
        ys = np.array([t.y for t in trials], dtype=np.int8)
        return cls(rule=rule, xs=xs, ys=ys, seed=seed, noise=noise)

    def to_csv(self, dest) -> None:
        """Write index,x,y rows behind a JSON comment header."""
        header = {"rule": rule_to_dict(self.rule)}
        if self.seed is not None:
            header["seed"] = self.seed.to_dict()
        elif self.noise is not None:
            header["noise"] = [float(v) for v in self.noise]
        lines = ["# " + json.dumps(header), "index,x,y"]
        lines += [f"{i + 1},{float(self.xs[i])!r},{int(self.ys[i])}"
                  for i in range(self.n)]
        text = "\n".join(lines) + "\n"
        if hasattr(dest, "write"):
            dest.write(text)
        else:
            Path(dest).write_text(text)

    @classmethod
    def from_csv(cls, src) -> "ExperimentPath":
        text = src.read() if hasattr(src, "read") else Path(src).read_text()
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("# "):
            raise ValueError("missing JSON header line")
        header = json.loads(lines[0][2:])
        if len(lines) < 2 or lines[1] != "index,x,y":
            raise ValueError("expected an index,x,y column header")
        xs, ys = [], []
        for pos, ln in enumerate(lines[2:]):
            idx, x, y = ln.split(",")
            if int(idx) != pos + 1:
                raise ValueError("trial indices must run 1, 2, ... without gaps")
            xs.append(float(x))
            ys.append(int(y))
        seed = SimSeed.from_dict(header["seed"]) if "seed" in header else None
        noise = np.array(header["noise"]) if "noise" in header else None
        return cls(rule=rule_from_dict(header["rule"]),
                   xs=np.array(xs), ys=np.array(ys, dtype=np.int8),
                   seed=seed, noise=noise)


def simulate_path(rule: DesignRule, model: ModelSpec, n: int,
                  seed: SimSeed) -> ExperimentPath:
    """Simulate n trials of the rule under the model, deterministically.

    A run with larger n extends a smaller one: the first n trials agree
    bit-for-bit (noise and outcomes come from separate streams).
    """
    if n < 1:
        raise ValueError("need at least one trial")
    if isinstance(rule, MarkovLanglie) and model.beta != 0.0:
        med = -model.alpha / model.beta
        if not rule.a < med < rule.b:
            warnings.warn(
                "model median lies outside the bisection bounds; "
                "the path cannot bracket it", RuntimeWarning, stacklevel=2)
    rid, p1, p2, p3, x1 = _kernel_args(rule)
    link_id = 0 if model.link is Link.LOGIT else 1
    if isinstance(rule, MarkovLanglie):
        u_noise = seed.noise_rng().random(n)
    else:
        u_noise = np.zeros(n)
    u_out = seed.outcome_rng().random(n)
    xs, ys = backend.simulate_steps(rid, p1, p2, p3, x1, link_id,
                                    model.alpha, model.beta, u_out, u_noise)
    noise = u_noise if isinstance(rule, MarkovLanglie) else None
    return ExperimentPath(rule=rule, xs=xs, ys=ys, seed=seed, noise=noise)


def verify_transitions(path: ExperimentPath,
                       noise: Optional[np.ndarray] = None) -> None:
    """Raise if any recorded transition fails to replay bit-for-bit.

    Bisection noise is taken from the argument, then the stored array,
    then regenerated from the stored seed.
    """
    n = path.n
    if n < 2:
        return None
    needs_noise = isinstance(path.rule, MarkovLanglie)
    if needs_noise:
        if noise is None:
            noise = path.noise
        if noise is None and path.seed is not None:
            noise = path.seed.noise_rng().random(n)
        if noise is None:
            raise ValueError("cannot replay a bisection path without noise or seed")
    for i in range(n - 1):
        u = float(noise[i]) if needs_noise else None
        expected = _scalar_next(path.rule, i + 1, float(path.xs[i]),
                                int(path.ys[i]), u)
        if expected != path.xs[i + 1]:
            raise ValueError(
                f"transition {i + 1} -> {i + 2} does not replay: "
                f"expected {expected!r}, recorded {float(path.xs[i + 1])!r}")
    return None
