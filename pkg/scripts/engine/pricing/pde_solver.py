"""
Black-Scholes PDE Solver

Implicit Euler in time with central differences in space for
f_t + r x f_x + sigma^2 x^2 f_xx / 2 = r f, terminal condition (x - K)^+,
Dirichlet boundaries f(t, 0) = 0 and f(t, x_max) = x_max - K e^{-r (T - t)}.
The tridiagonal system of each step is solved with scipy's banded solver;
optional Richardson extrapolation in time removes the first-order error.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Mapping, Optional

import numpy as np
from scipy.linalg import solve_banded

from .black_scholes import ClosedFormParams

logger = logging.getLogger(__name__)

MIN_DOMAIN_MULTIPLE = 4.0


@dataclass(frozen=True)
class GridSpec:
    """
    Finite-difference grid.

    Args:
        n_space: Target number of space intervals on [0, x_max]
        n_time: Number of time steps
        x_max: Upper space boundary (default 4 max(S, K) e^{r tau})
        richardson: Combine n_time and 2 n_time solutions
    """
    n_space: int = 2000
    n_time: int = 1000
    x_max: Optional[float] = None
    richardson: bool = True

    @classmethod
    def from_config(cls, section: Mapping[str, Any]) -> "GridSpec":
        return cls(int(section.get("n_space", 2000)), int(section.get("n_time", 1000)),
                   section.get("x_max"), bool(section.get("richardson", True)))


@dataclass
class PdeSolution:
    """
    Price surface f(t, x).

    Args:
        times: Calendar times from 0 (valuation) to tau (maturity)
        space: Spot grid; the valuation spot is the node at spot_index
        values: Surface of shape (len(times), len(space))
        price: f(0, S), Richardson-extrapolated when enabled
        spot_index: Index of S in `space`
    """
    times: np.ndarray
    space: np.ndarray
    values: np.ndarray
    price: float
    spot_index: int

    def to_dict(self) -> Dict[str, Any]:
        return {"price": self.price, "n_space": len(self.space) - 1,
                "n_time": len(self.times) - 1, "x_max": float(self.space[-1])}


def _space_grid(params: ClosedFormParams, grid: GridSpec):
    floor = MIN_DOMAIN_MULTIPLE * max(params.spot, params.strike) * math.exp(
        max(params.rate, 0.0) * params.tau)
    x_max = floor if grid.x_max is None else float(grid.x_max)
    if x_max < floor * (1 - 1e-12):
        raise ValueError(f"x_max = {x_max:.6g} does not cover 4 max(S, K) e^(r tau) = {floor:.6g}")
    if grid.n_space < 4 or grid.n_time < 1:
        raise ValueError("grid needs at least 4 space intervals and 1 time step")

    # spot sits exactly on a node
    spot_index = max(1, int(round(grid.n_space * params.spot / x_max)))
    dx = params.spot / spot_index
    n_space = int(math.ceil(x_max / dx - 1e-9))
    return np.arange(n_space + 1) * dx, spot_index


def _march(params: ClosedFormParams, space: np.ndarray, n_time: int) -> np.ndarray:
    """Surface on n_time steps; row 0 is t = 0, row n_time is maturity."""
    tau, r, sigma, strike = params.tau, params.rate, params.volatility, params.strike
    dt = tau / n_time
    n = len(space) - 1
    i = np.arange(1, n)
    diffusion = 0.5 * sigma ** 2 * i ** 2
    drift = 0.5 * r * i
    lower = dt * (drift - diffusion)
    diag = 1.0 + dt * (2.0 * diffusion + r)
    upper = -dt * (diffusion + drift)

    banded = np.zeros((3, n - 1))
    banded[0, 1:] = upper[:-1]
    banded[1] = diag
    banded[2, :-1] = lower[1:]

    surface = np.empty((n_time + 1, n + 1))
    surface[n_time] = np.maximum(space - strike, 0.0)
    for step in range(n_time - 1, -1, -1):
        remaining = tau - step * dt
        top = space[-1] - strike * math.exp(-r * remaining)
        rhs = surface[step + 1, 1:-1].copy()
        rhs[-1] -= upper[-1] * top
        # f(t, 0) = 0, so the lower boundary adds nothing
        surface[step, 1:-1] = solve_banded((1, 1), banded, rhs, check_finite=False)
        surface[step, 0] = 0.0
        surface[step, -1] = top
    return surface


def bs_pde_solve(params: ClosedFormParams, grid: Optional[GridSpec] = None) -> PdeSolution:
    """
    Solve the Black-Scholes PDE for a European call.

    Args:
        params: ClosedFormParams
        grid: GridSpec (defaults to the reference grid)

    Returns:
        PdeSolution with the surface of the finest run

    Raises:
        ValueError: Domain too small or degenerate grid
    """
    grid = grid or GridSpec()
    space, spot_index = _space_grid(params, grid)
    times = np.linspace(0.0, params.tau, grid.n_time + 1)
    if params.tau == 0:
        payoff = np.maximum(space - params.strike, 0.0)[None, :]
        return PdeSolution(np.zeros(1), space, payoff, float(payoff[0, spot_index]), spot_index)

    coarse = _march(params, space, grid.n_time)
    price = float(coarse[0, spot_index])
    surface = coarse
    if grid.richardson:
        fine = _march(params, space, 2 * grid.n_time)
        price = 2.0 * float(fine[0, spot_index]) - price
        surface = fine
        times = np.linspace(0.0, params.tau, 2 * grid.n_time + 1)
    logger.debug(f"PDE price {price:.10g} on {len(space) - 1} x {len(times) - 1} grid")
    return PdeSolution(times, space, surface, price, spot_index)
