"""
Terminal Price Distributions

Distributions Q of the ratio Z = S_T / S_t used by the Samuelson-Merton call
price e^{-r tau} * integral over {z S_t >= K} of (z S_t - K) dQ(z).
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict

import numpy as np
from scipy.integrate import quad, trapezoid
from scipy.stats import norm

from .black_scholes import ClosedFormParams

logger = logging.getLogger(__name__)

MEAN_TOLERANCE = 1e-6
KINDS = ("lognormal", "normal", "tabulated", "atoms")


@dataclass(frozen=True)
class DistributionSpec:
    """
    One-dimensional law of Z = S_T / S_t.

    Args:
        kind: 'lognormal', 'normal', 'tabulated' or 'atoms'
        params: Kind-specific parameters (see the constructors)
        grid: Support points for 'tabulated' and 'atoms'
        weights: Density values ('tabulated') or point masses ('atoms')
    """
    kind: str
    params: Dict[str, float] = field(default_factory=dict)
    grid: np.ndarray = field(default_factory=lambda: np.zeros(0))
    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"Unknown distribution kind '{self.kind}' (expected one of {KINDS})")

    @classmethod
    def lognormal(cls, log_variance: float, rate_tau: float = 0.0) -> "DistributionSpec":
        """log Z ~ N(r tau - v/2, v) with v = sigma^2 tau, so E(Z) = e^{r tau}."""
        if log_variance < 0:
            raise ValueError("log_variance must be non-negative")
        return cls("lognormal", {"mean": rate_tau - 0.5 * log_variance, "variance": log_variance})

    @classmethod
    def for_black_scholes(cls, params: ClosedFormParams) -> "DistributionSpec":
        return cls.lognormal(params.volatility ** 2 * params.tau, params.rate * params.tau)

    @classmethod
    def normal(cls, mean: float, sd: float) -> "DistributionSpec":
        """Z ~ N(mean, sd^2); with mean 1 and r = 0 this is Bachelier's model."""
        if sd <= 0:
            raise ValueError("sd must be positive")
        return cls("normal", {"mean": mean, "sd": sd})

    @classmethod
    def tabulated(cls, grid, density) -> "DistributionSpec":
        """Density values on an increasing grid; normalized by the trapezoid rule."""
        grid = np.asarray(grid, dtype=float)
        density = np.asarray(density, dtype=float)
        if grid.shape != density.shape or grid.ndim != 1 or grid.size < 2:
            raise ValueError("grid and density must be matching 1-D arrays of length >= 2")
        if np.any(np.diff(grid) <= 0) or np.any(density < 0):
            raise ValueError("grid must be increasing and density non-negative")
        mass = trapezoid(density, grid)
        if mass <= 0:
            raise ValueError("density integrates to zero")
        return cls("tabulated", {}, grid, density / mass)

    @classmethod
    def atoms(cls, points, weights) -> "DistributionSpec":
        points = np.asarray(points, dtype=float)
        weights = np.asarray(weights, dtype=float)
        if points.shape != weights.shape or np.any(weights < 0):
            raise ValueError("atoms need matching points and non-negative weights")
        return cls("atoms", {}, points, weights / weights.sum())

    def mean(self) -> float:
        """E(Z)."""
        if self.kind == "lognormal":
            return math.exp(self.params["mean"] + 0.5 * self.params["variance"])
        if self.kind == "normal":
            return self.params["mean"]
        if self.kind == "tabulated":
            return float(trapezoid(self.grid * self.weights, self.grid))
        return float(self.weights @ self.grid)

    def call_integral(self, spot: float, strike: float) -> float:
        """Undiscounted integral of (z spot - strike) over {z spot >= strike}."""
        threshold = strike / spot
        if self.kind == "atoms":
            return float(self.weights @ np.maximum(self.grid * spot - strike, 0.0))
        if self.kind == "tabulated":
            return float(trapezoid(np.maximum(self.grid * spot - strike, 0.0) * self.weights,
                                   self.grid))
        if self.kind == "normal":
            m, s = self.params["mean"], self.params["sd"]
            lower = max(threshold, m - 12 * s)
            if lower >= m + 12 * s:
                return 0.0

            def integrand(u):
                return (u * spot - strike) * norm.pdf(u, m, s)
            value, _ = quad(integrand, lower, m + 12 * s, epsabs=1e-13, epsrel=1e-13, limit=200)
            return float(value)

        # lognormal: integrate in y = log z
        m, v = self.params["mean"], self.params["variance"]
        if v == 0:
            return max(math.exp(m) * spot - strike, 0.0)
        s = math.sqrt(v)
        lower = max(math.log(threshold), m - 12 * s)
        upper = m + 12 * s
        if lower >= upper:
            return 0.0

        def integrand(y):
            return (math.exp(y) * spot - strike) * norm.pdf(y, m, s)
        value, _ = quad(integrand, lower, upper, epsabs=1e-13, epsrel=1e-13, limit=200,
                        points=[m] if lower < m < upper else None)
        return float(value)


def samuelson_merton_price(params: ClosedFormParams, dist: DistributionSpec) -> float:
    """
    e^{-r tau} * integral over {z >= K / S} of (z S - K) dQ(z).

    Args:
        params: ClosedFormParams (volatility is unused; Q carries the law)
        dist: Law of S_T / S_t under the pricing measure

    Returns:
        Call price in currency

    Raises:
        ValueError: E(Z) differs from e^{r tau} by more than 1e-6 (relative)
    """
    target = math.exp(params.rate * params.tau)
    mean = dist.mean()
    if abs(mean - target) > MEAN_TOLERANCE * target:
        raise ValueError(f"distribution mean {mean:.10g} violates E(Z) = e^(r tau) = {target:.10g}")
    return params.discount * dist.call_integral(params.spot, params.strike)
