"""
Black-Scholes and Bachelier Closed Forms

European call and put under geometric Brownian motion, the model-free
no-arbitrage bounds, and Bachelier's arithmetic (forward-value) call both in
closed Gaussian form and by direct quadrature.
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, Mapping, Tuple

import numpy as np
from scipy.integrate import quad
from scipy.stats import norm

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClosedFormParams:
    """
    Inputs of the continuous-time pricers. The physical drift is not an input.

    Args:
        spot: S_t > 0 in currency
        strike: K > 0 in currency
        rate: Continuously compounded r per year
        volatility: sigma > 0 per sqrt(year)
        tau: Time to maturity T - t in years (0 means the payoff itself)
    """
    spot: float
    strike: float
    rate: float
    volatility: float
    tau: float

    def __post_init__(self):
        for name in ("spot", "strike", "volatility"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite; got {value}")
        if not math.isfinite(self.rate):
            raise ValueError(f"rate must be finite; got {self.rate}")
        if not (math.isfinite(self.tau) and self.tau >= 0):
            raise ValueError(f"tau must be non-negative; got {self.tau}")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ClosedFormParams":
        return cls(float(data["spot"]), float(data["strike"]), float(data["rate"]),
                   float(data["vol"] if "vol" in data else data["volatility"]), float(data["tau"]))

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)

    @property
    def discount(self) -> float:
        return math.exp(-self.rate * self.tau)

    @property
    def forward(self) -> float:
        return self.spot * math.exp(self.rate * self.tau)


def d_plus_minus(params: ClosedFormParams) -> Tuple[float, float]:
    """d+/- = [log(S/K) + (r +/- sigma^2/2) tau] / (sigma sqrt(tau))."""
    s = params.volatility * math.sqrt(params.tau)
    centre = math.log(params.spot / params.strike) + params.rate * params.tau
    return (centre + 0.5 * s * s) / s, (centre - 0.5 * s * s) / s


def bs_call(params: ClosedFormParams) -> float:
    """
    Black-Scholes call price C = S Phi(d+) - K e^{-r tau} Phi(d-).

    Args:
        params: ClosedFormParams

    Returns:
        Call price in currency
    """
    if params.tau == 0:
        return max(params.spot - params.strike, 0.0)
    d_plus, d_minus = d_plus_minus(params)
    return float(params.spot * norm.cdf(d_plus)
                 - params.strike * params.discount * norm.cdf(d_minus))


def bs_put(params: ClosedFormParams) -> float:
    """Put price from put-call parity P = C - S + K e^{-r tau}."""
    if params.tau == 0:
        return max(params.strike - params.spot, 0.0)
    return bs_call(params) - params.spot + params.strike * params.discount


def no_arbitrage_bounds(params: ClosedFormParams) -> Tuple[float, float]:
    """Model-free call bounds (S - K e^{-r tau})^+ <= C <= S."""
    return max(params.spot - params.strike * params.discount, 0.0), params.spot


def _check_bachelier(s0: float, strike: float, sigma_abs: float, maturity: float) -> None:
    if not (math.isfinite(s0) and math.isfinite(strike)):
        raise ValueError("s0 and strike must be finite")
    if not sigma_abs > 0:
        raise ValueError(f"sigma_abs must be positive; got {sigma_abs}")
    if not maturity > 0:
        raise ValueError(f"maturity must be positive; got {maturity}")


def bachelier_call(s0: float, strike: float, sigma_abs: float, maturity: float) -> float:
    """
    Bachelier forward call value (S0 - K) Phi(m) + sigma sqrt(T) phi(m).

    m = (S0 - K) / (sigma sqrt(T)); sigma is absolute (currency per sqrt(year))
    and the value is undiscounted.
    """
    _check_bachelier(s0, strike, sigma_abs, maturity)
    scale = sigma_abs * math.sqrt(maturity)
    moneyness = s0 - strike
    m = moneyness / scale
    return float(moneyness * norm.cdf(m) + scale * norm.pdf(m))


def bachelier_call_quadrature(s0: float, strike: float, sigma_abs: float,
                              maturity: float) -> float:
    """
    Integral of (z + S0 - K) over z ~ N(0, sigma^2 T) on the exercise region z >= K - S0.

    The exercise region is where the integrand is non-negative; integrating
    from S0 - K instead gives a different number whenever S0 != K.
    """
    _check_bachelier(s0, strike, sigma_abs, maturity)
    scale = sigma_abs * math.sqrt(maturity)
    lower = (strike - s0) / scale

    # z = scale * u with u standard normal
    def integrand(u):
        return (scale * u + s0 - strike) * norm.pdf(u)

    value, error = quad(integrand, lower, np.inf, epsabs=1e-13, epsrel=1e-13, limit=200)
    logger.debug(f"Bachelier quadrature error estimate {error:.1e}")
    return float(value)
