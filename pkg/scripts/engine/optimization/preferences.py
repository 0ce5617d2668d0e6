"""
Preferences

Convex divergences V for measure selection and concave utilities U for wealth
maximization, with the numeric shape checks and the negative Legendre
transform U(x) = inf_y (V(y) + x y) linking the two.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

logger = logging.getLogger(__name__)

ArrayFn = Callable[[np.ndarray], np.ndarray]

DIVERGENCES = ("entropy", "quadratic")
UTILITIES = ("exp", "log", "quadratic")


@dataclass(frozen=True)
class DivergenceSpec:
    """
    Strictly convex V applied to the density dQ/dP.

    Args:
        name: 'entropy', 'quadratic' or a label for a user function
        value: V
        derivative: V'
        second: V'' (optional; numeric when absent)
        positive_domain: True when V lives on [0, inf), False for all reals
    """
    name: str
    value: ArrayFn
    derivative: ArrayFn
    second: Optional[ArrayFn] = None
    positive_domain: bool = True

    @classmethod
    def entropy(cls) -> "DivergenceSpec":
        def value(y):
            y = np.asarray(y, dtype=float)
            safe = np.where(y > 0, y, 1.0)
            return np.where(y > 0, y * np.log(safe), 0.0)
        return cls("entropy", value, lambda y: np.log(y) + 1.0, lambda y: 1.0 / np.asarray(y))

    @classmethod
    def quadratic(cls) -> "DivergenceSpec":
        return cls("quadratic", lambda y: 0.5 * np.asarray(y, dtype=float) ** 2,
                   lambda y: np.asarray(y, dtype=float),
                   lambda y: np.ones_like(np.asarray(y, dtype=float)),
                   positive_domain=False)

    @classmethod
    def from_name(cls, name: str) -> "DivergenceSpec":
        if name == "entropy":
            return cls.entropy()
        if name == "quadratic":
            return cls.quadratic()
        raise ValueError(f"Unknown divergence '{name}' (expected one of {DIVERGENCES})")

    @classmethod
    def custom(cls, name: str, value: ArrayFn, derivative: ArrayFn,
               positive_domain: bool = True) -> "DivergenceSpec":
        """User-supplied V; rejected unless the convexity check passes."""
        spec = cls(name, value, derivative, None, positive_domain)
        if not spec.is_strictly_convex():
            raise ValueError(f"divergence '{name}' is not strictly convex on the shape grid")
        return spec

    def hessian(self, y: np.ndarray) -> np.ndarray:
        if self.second is not None:
            return self.second(y)
        step = 1e-6 * np.maximum(1.0, np.abs(y))
        return (self.derivative(y + step) - self.derivative(y - step)) / (2 * step)

    def shape_grid(self) -> np.ndarray:
        if self.positive_domain:
            return np.geomspace(1e-3, 1e3, 121)
        return np.linspace(-10.0, 10.0, 121)

    def is_strictly_convex(self) -> bool:
        """Second differences of V positive on the shape grid."""
        grid = self.shape_grid()
        values = self.value(grid)
        # nonuniform grid: compare slopes of consecutive chords
        slopes = np.diff(values) / np.diff(grid)
        return bool(np.all(np.diff(slopes) > 0))


@dataclass(frozen=True)
class UtilitySpec:
    """
    Strictly concave, strictly increasing utility of wealth.

    Args:
        name: 'exp', 'log', 'quadratic' or a label
        value: U
        marginal: U'
        curvature: U'' (optional; numeric when absent)
        lower: Infimum of the wealth domain (U = -inf at or below when barrier)
        upper: Wealth above which U stops increasing (quadratic bliss point)
        barrier: True when wealth must stay strictly above `lower`
    """
    name: str
    value: ArrayFn
    marginal: ArrayFn
    curvature: Optional[ArrayFn] = None
    lower: float = -math.inf
    upper: float = math.inf
    barrier: bool = False

    @classmethod
    def exponential(cls, risk_aversion: float = 1.0) -> "UtilitySpec":
        a = float(risk_aversion)
        if a <= 0:
            raise ValueError("risk_aversion must be positive")
        return cls("exp",
                   lambda w: -np.exp(-a * np.asarray(w, dtype=float)) / a,
                   lambda w: np.exp(-a * np.asarray(w, dtype=float)),
                   lambda w: -a * np.exp(-a * np.asarray(w, dtype=float)))

    @classmethod
    def logarithmic(cls) -> "UtilitySpec":
        return cls("log",
                   lambda w: np.log(np.asarray(w, dtype=float)),
                   lambda w: 1.0 / np.asarray(w, dtype=float),
                   lambda w: -1.0 / np.asarray(w, dtype=float) ** 2,
                   lower=0.0, barrier=True)

    @classmethod
    def quadratic(cls, bliss: float = 0.0) -> "UtilitySpec":
        """U(w) = -(w - b)^2 / 2, increasing for w < b; b = 0 is the dual of y^2/2."""
        b = float(bliss)
        return cls("quadratic",
                   lambda w: -0.5 * (np.asarray(w, dtype=float) - b) ** 2,
                   lambda w: b - np.asarray(w, dtype=float),
                   lambda w: -np.ones_like(np.asarray(w, dtype=float)),
                   upper=b)

    @classmethod
    def from_name(cls, name: str, risk_aversion: float = 1.0,
                  bliss: float = 0.0) -> "UtilitySpec":
        if name == "exp":
            return cls.exponential(risk_aversion)
        if name == "log":
            return cls.logarithmic()
        if name == "quadratic":
            return cls.quadratic(bliss)
        raise ValueError(f"Unknown utility '{name}' (expected one of {UTILITIES})")

    def second(self, w: np.ndarray) -> np.ndarray:
        if self.curvature is not None:
            return self.curvature(w)
        step = 1e-6 * np.maximum(1.0, np.abs(w))
        return (self.marginal(w + step) - self.marginal(w - step)) / (2 * step)

    def in_domain(self, w: np.ndarray) -> bool:
        w = np.asarray(w, dtype=float)
        return bool(np.all(w > self.lower)) if self.barrier else bool(np.all(np.isfinite(w)))

    def shape_grid(self, n: int = 101) -> np.ndarray:
        lo = self.lower + 1e-2 if math.isfinite(self.lower) else -10.0
        hi = self.upper - 1e-2 if math.isfinite(self.upper) else lo + 20.0
        return np.linspace(lo, hi, n)

    def is_increasing(self, grid: Optional[np.ndarray] = None) -> bool:
        grid = self.shape_grid() if grid is None else np.asarray(grid)
        return bool(np.all(np.diff(self.value(grid)) > 0))

    def is_concave(self, grid: Optional[np.ndarray] = None) -> bool:
        grid = self.shape_grid() if grid is None else np.asarray(grid)
        slopes = np.diff(self.value(grid)) / np.diff(grid)
        return bool(np.all(np.diff(slopes) < 0))


def _conjugate_point(spec: DivergenceSpec, x: float) -> float:
    """y* solving V'(y) + x = 0, or the domain boundary when the infimum sits there."""
    def stationarity(y):
        return float(spec.derivative(np.asarray(y))) + x

    if spec.positive_domain:
        lo, hi = 1e-12, 1.0
        if stationarity(lo) >= 0:
            return 0.0
    else:
        lo, hi = -1.0, 1.0
        while stationarity(lo) > 0:
            lo *= 2.0
            if lo < -1e12:
                raise ValueError(f"Legendre transform of '{spec.name}' unbounded below at x={x}")
    while stationarity(hi) < 0:
        hi *= 2.0
        if hi > 1e12:
            raise ValueError(f"Legendre transform of '{spec.name}' unbounded below at x={x}")
    return brentq(stationarity, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def legendre_dual(spec: DivergenceSpec) -> UtilitySpec:
    """
    U(x) = inf_y (V(y) + x y).

    Closed forms: V = y^2/2 gives U = -x^2/2 and V = y log y gives
    U = -exp(-1 - x). Other divergences are conjugated numerically with
    U'(x) = y*(x).

    Raises:
        ValueError: The infimum is unbounded below (raised on evaluation)
    """
    if spec.name == "quadratic":
        return UtilitySpec("quadratic-dual",
                           lambda x: -0.5 * np.asarray(x, dtype=float) ** 2,
                           lambda x: -np.asarray(x, dtype=float),
                           lambda x: -np.ones_like(np.asarray(x, dtype=float)),
                           upper=0.0)
    if spec.name == "entropy":
        return UtilitySpec("entropy-dual",
                           lambda x: -np.exp(-1.0 - np.asarray(x, dtype=float)),
                           lambda x: np.exp(-1.0 - np.asarray(x, dtype=float)),
                           lambda x: -np.exp(-1.0 - np.asarray(x, dtype=float)))

    def value(x):
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty_like(xs)
        for k, xk in enumerate(xs):
            y = _conjugate_point(spec, xk)
            out[k] = float(spec.value(np.asarray(y))) + xk * y
        return out if np.ndim(x) else out[0]

    def marginal(x):
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.array([_conjugate_point(spec, xk) for xk in xs])
        return out if np.ndim(x) else out[0]

    logger.debug(f"Numeric Legendre transform for divergence '{spec.name}'")
    return UtilitySpec(f"{spec.name}-dual", value, marginal)
