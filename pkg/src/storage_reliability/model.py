"""Domain model: shock distributions, stage costs, system parameters, grids.

Storage holds energy in [0, s_bar], recharges at ramp rate r, and is drained
at shock arrivals of a compound Poisson process (rate q_rate, jump sizes on
[0, B]). Blackout penalties are given by a stage cost g with g(0) = 0.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class DriftSign(enum.Enum):
    """Sign of the long-run storage drift r - q_rate * E[W]."""

    POSITIVE_OR_ZERO = "positive_or_zero"
    NEGATIVE = "negative"


# ---------------------------------------------------------------------------
# Shock distribution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ShockDistribution:
    """Jump-size distribution of the energy-deficit process, supported on [0, B].

    Construct through :meth:`deterministic`, :meth:`uniform` or
    :meth:`discrete`; the raw constructor is not meant to be called directly.
    """

    kind: str
    values: tuple[float, ...] = ()
    probs: tuple[float, ...] = ()
    low: float = 0.0
    high: float = 0.0

    @classmethod
    def deterministic(cls, w0: float) -> "ShockDistribution":
        if w0 < 0:
            raise ValueError("jump size must be nonnegative")
        return cls(kind="deterministic", values=(float(w0),), probs=(1.0,))

    @classmethod
    def uniform(cls, low: float, high: float) -> "ShockDistribution":
        if not 0 <= low < high:
            raise ValueError("uniform support requires 0 <= low < high")
        return cls(kind="uniform", low=float(low), high=float(high))

    @classmethod
    def discrete(cls, points: Sequence[tuple[float, float]]) -> "ShockDistribution":
        pts = sorted((float(v), float(p)) for v, p in points)
        values = tuple(v for v, _ in pts)
        probs = tuple(p for _, p in pts)
        if not values or values[0] < 0:
            raise ValueError("discrete support must be nonnegative and nonempty")
        if any(p < 0 for p in probs) or abs(sum(probs) - 1.0) > 1e-12:
            raise ValueError("probabilities must be nonnegative and sum to 1")
        return cls(kind="discrete", values=values, probs=probs)

    @property
    def upper(self) -> float:
        """Supremum B of the support (exact, never estimated)."""
        if self.kind == "uniform":
            return self.high
        return self.values[-1]

    @property
    def mean(self) -> float:
        if self.kind == "uniform":
            return 0.5 * (self.low + self.high)
        return float(np.dot(self.probs, self.values))

    @property
    def second_moment(self) -> float:
        if self.kind == "uniform":
            a, b = self.low, self.high
            return (a * a + a * b + b * b) / 3.0
        v = np.asarray(self.values)
        return float(np.dot(self.probs, v * v))

    def expectation(self, f: Callable, n_nodes: int = 1025) -> float:
        """E[f(W)].

        Exact for deterministic/discrete kinds; composite Simpson with at
        least ``n_nodes`` nodes for the uniform kind.
        """
        if self.kind in ("deterministic", "discrete"):
            fx = np.array([float(f(v)) for v in self.values])
            return float(np.dot(self.probs, fx))
        n = max(int(n_nodes), 3)
        if n % 2 == 0:
            n += 1
        x = np.linspace(self.low, self.high, n)
        try:
            fx = np.asarray(f(x), dtype=float)
            if fx.shape != x.shape:
                raise TypeError
        except TypeError:
            fx = np.array([float(f(xi)) for xi in x])
        h = (self.high - self.low) / (n - 1)
        coef = np.ones(n)
        coef[1:-1:2] = 4.0
        coef[2:-1:2] = 2.0
        return float((h / 3.0) * np.dot(coef, fx) / (self.high - self.low))

    def quadrature(self, n_w: int) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and weights reproducing E[.] on the support.

        Deterministic/discrete kinds return their atoms (exact); the uniform
        kind returns an ``n_w``-node composite trapezoid rule, which is exact
        for the mean and O(dw^2) for smooth integrands.
        """
        if self.kind in ("deterministic", "discrete"):
            return np.asarray(self.values, dtype=float), np.asarray(self.probs, dtype=float)
        n = max(int(n_w), 2)
        pts = np.linspace(self.low, self.high, n)
        wts = np.full(n, 1.0 / (n - 1))
        wts[0] *= 0.5
        wts[-1] *= 0.5
        return pts, wts

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "deterministic":
            return np.full(size, self.values[0])
        if self.kind == "uniform":
            return rng.uniform(self.low, self.high, size)
        return rng.choice(np.asarray(self.values), size=size, p=np.asarray(self.probs))


def shock_expectation(dist: ShockDistribution, f: Callable, n_nodes: int = 1025) -> float:
    """E[f(W)] under the given jump-size distribution."""
    return dist.expectation(f, n_nodes=n_nodes)


# ---------------------------------------------------------------------------
# Stage cost
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StageCost:
    """Blackout penalty g: bounded, strictly increasing, g(0) = 0.

    Kinds:
      * ``linear``:  g(x) = beta * x
      * ``power``:   g(x) = scale * x ** exponent, exponent >= 1
      * ``table``:   monotone piecewise-linear samples with explicit
        derivative samples (the derivative is carried, not re-estimated,
        so that its inverse stays monotone by construction)
    """

    kind: str
    beta: float = 1.0
    exponent: float = 2.0
    scale: float = 1.0
    x: tuple[float, ...] = ()
    g: tuple[float, ...] = ()
    dg: tuple[float, ...] = ()

    @classmethod
    def linear(cls, beta: float = 1.0) -> "StageCost":
        if beta <= 0:
            raise ValueError("beta must be positive")
        return cls(kind="linear", beta=float(beta))

    @classmethod
    def power(cls, exponent: float, scale: float = 1.0) -> "StageCost":
        if exponent < 1:
            raise ValueError("exponent must be >= 1")
        if scale <= 0:
            raise ValueError("scale must be positive")
        return cls(kind="power", exponent=float(exponent), scale=float(scale))

    @classmethod
    def quadratic(cls, scale: float = 1.0) -> "StageCost":
        return cls.power(2.0, scale)

    @classmethod
    def cubic(cls, scale: float = 1.0) -> "StageCost":
        return cls.power(3.0, scale)

    @classmethod
    def table(
        cls,
        x: Sequence[float],
        g: Sequence[float],
        dg: Sequence[float],
    ) -> "StageCost":
        x = tuple(float(v) for v in x)
        g = tuple(float(v) for v in g)
        dg = tuple(float(v) for v in dg)
        if len(x) < 2 or len(x) != len(g) or len(x) != len(dg):
            raise ValueError("table cost needs matching x/g/dg samples, >= 2 points")
        if x[0] != 0.0 or g[0] != 0.0:
            raise ValueError("table cost must start at g(0) = 0")
        if any(b <= a for a, b in zip(x, x[1:])):
            raise ValueError("table x samples must be strictly increasing")
        if any(b <= a for a, b in zip(g, g[1:])):
            raise ValueError("table cost must be strictly increasing")
        if any(d < 0 for d in dg):
            raise ValueError("table derivative samples must be nonnegative")
        return cls(kind="table", x=x, g=g, dg=dg)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "linear":
            out = self.beta * x
        elif self.kind == "power":
            out = self.scale * np.power(x, self.exponent)
        else:
            out = np.interp(x, self.x, self.g)
        return out if out.ndim else float(out)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "linear":
            out = np.full_like(x, self.beta)
        elif self.kind == "power":
            if self.exponent == 1.0:
                out = np.full_like(x, self.scale)
            else:
                out = self.scale * self.exponent * np.power(x, self.exponent - 1.0)
        else:
            out = np.interp(x, self.x, self.dg)
        return out if out.ndim else float(out)

    @property
    def strictly_convex(self) -> bool:
        if self.kind == "power":
            return self.exponent > 1.0
        if self.kind == "table":
            return bool(np.all(np.diff(self.dg) > 0))
        return False

    def inverse_derivative(self, y: float) -> float:
        """Leftmost x with g'(x) = y, clamped into the sampled/positive domain.

        Only meaningful for strictly convex costs (g' strictly increasing).
        """
        if not self.strictly_convex:
            raise ValueError("inverse derivative requires a strictly convex stage cost")
        if self.kind == "power":
            c = self.scale * self.exponent
            if y <= 0:
                return 0.0
            return float((y / c) ** (1.0 / (self.exponent - 1.0)))
        dg = np.asarray(self.dg)
        if y <= dg[0]:
            return float(self.x[0])
        if y >= dg[-1]:
            return float(self.x[-1])
        return float(np.interp(y, dg, self.x))


# ---------------------------------------------------------------------------
# System parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SystemParams:
    """Discount rate, charging ramp, Poisson shock rate, capacity, shocks."""

    theta: float
    r: float
    q_rate: float
    s_bar: float
    shock: ShockDistribution

    def __post_init__(self):
        if self.theta <= 0:
            raise ValueError("discount rate theta must be positive")
        if self.r <= 0:
            raise ValueError("charging ramp r must be positive")
        if self.q_rate <= 0:
            raise ValueError("Poisson rate q_rate must be positive")
        if self.s_bar < 0:
            raise ValueError("storage capacity s_bar must be nonnegative")


def power_to_energy_imbalance(p_imbalance: float, zeta: float) -> float:
    """Energy a ramp-zeta generator cannot track for a power imbalance step.

    W = P^2 / (2 * zeta): the triangle of unserved power while the generator
    ramps up to cover a step of size P.
    """
    if zeta <= 0:
        raise ValueError("generator ramp zeta must be positive")
    return p_imbalance * p_imbalance / (2.0 * zeta)


def volatility(params: SystemParams) -> float:
    """Energy rate of the shock process, q_rate * E[W^2]."""
    return params.q_rate * params.shock.second_moment


def drift_sign(params: SystemParams) -> DriftSign:
    """POSITIVE_OR_ZERO iff the mean deficit inflow q_rate*E[W] never exceeds the ramp r."""
    if params.q_rate * params.shock.mean <= params.r:
        return DriftSign.POSITIVE_OR_ZERO
    return DriftSign.NEGATIVE


# ---------------------------------------------------------------------------
# Discretization grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Grid:
    """Uniform storage grid plus support-adapted shock quadrature nodes."""

    s_points: np.ndarray
    w_points: np.ndarray
    w_weights: np.ndarray

    @classmethod
    def for_params(cls, params: SystemParams, n_s: int, n_w: int) -> "Grid":
        if params.s_bar == 0.0:
            s_points = np.zeros(1)
        else:
            if n_s < 2:
                raise ValueError("n_s must be >= 2 for positive capacity")
            s_points = np.linspace(0.0, params.s_bar, int(n_s))
        w_points, w_weights = params.shock.quadrature(n_w)
        return cls(s_points=s_points, w_points=w_points, w_weights=w_weights)

    @property
    def n_s(self) -> int:
        return len(self.s_points)

    @property
    def n_w(self) -> int:
        return len(self.w_points)

    @property
    def ds(self) -> float:
        if len(self.s_points) < 2:
            return 0.0
        return float(self.s_points[1] - self.s_points[0])

    @property
    def dw(self) -> float:
        if len(self.w_points) < 2:
            return 0.0
        return float(self.w_points[1] - self.w_points[0])
