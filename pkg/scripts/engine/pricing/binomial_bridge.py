"""
Binomial Bridge

Connects the continuous-time pricers to the tree engine. An N-step geometric
tree with u = e^{sigma sqrt(tau/N)}, d = 1/u and numeraire growth
e^{r tau / N} is priced under its unique EMM, found by the EMM search on the
one-period building block. Small N materializes the full scenario tree, puts
that conditional measure on every node and prices through the arbitrage
pricing formula; larger N applies it on the recombined lattice.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Optional

import numpy as np

from ..core.contingent_claims import make_claim
from ..core.exceptions import ArbitrageMarketError
from ..core.measures import Measure
from ..core.scenario_tree import ScenarioTree
from ..data.tree_factory import binomial_tree
from ..optimization.arbitrage_engine import find_emm, is_martingale_measure
from ..optimization.completeness import price
from .black_scholes import ClosedFormParams

logger = logging.getLogger(__name__)

MAX_TREE_STEPS = 12


@dataclass
class BridgeResult:
    """
    Price of the N-step binomial approximation.

    Args:
        price: Root price in currency
        n_steps: N
        q_up: Risk-neutral up probability of one period
        up: Up factor u
        down: Down factor d
        tree: The materialized ScenarioTree (None on the lattice path)
    """
    price: float
    n_steps: int
    q_up: float
    up: float
    down: float
    tree: Optional[ScenarioTree] = None

    def to_dict(self) -> Dict[str, Any]:
        return {"price": self.price, "n_steps": self.n_steps, "q_up": self.q_up,
                "up": self.up, "down": self.down, "materialized": self.tree is not None}


def one_period_q(params: ClosedFormParams, n_steps: int, phys_up: float = 0.5) -> float:
    """Risk-neutral up probability found by the EMM search on the one-period building block."""
    dt = params.tau / n_steps
    up = math.exp(params.volatility * math.sqrt(dt))
    block = binomial_tree(1.0, up, 1.0 / up, 1, math.exp(params.rate * dt), phys_up)
    emm = find_emm(block)
    if emm is None:
        raise ArbitrageMarketError(
            f"no EMM for u={up:.6g}, d={1 / up:.6g}, growth={math.exp(params.rate * dt):.6g}")
    return float(emm.leaf_prob[0])


def tree_emm(tree: ScenarioTree, q_up: float) -> Measure:
    """
    Product measure putting q_up on every 'u' edge of a binomial tree.

    Raises:
        ArbitrageMarketError: q_up outside (0, 1) or the result is not a martingale measure
    """
    if not 0.0 < q_up < 1.0:
        raise ArbitrageMarketError(f"one-period EMM q_up={q_up:.6g} is not strictly inside (0, 1)")
    cond = np.ones(tree.n_nodes)
    for node in tree.internal_nodes:
        up_child, down_child = tree.children[node]
        cond[up_child] = q_up
        cond[down_child] = 1.0 - q_up
    emm = Measure.from_conditional(tree, cond)
    check = is_martingale_measure(tree, emm)
    if not check:
        raise ArbitrageMarketError(
            f"binomial tree measure misses the martingale property at {check.worst_node} "
            f"(residual {check.worst_residual:.3e})")
    return emm


def binomial_bridge(params: ClosedFormParams, n_steps: int, phys_up: float = 0.5,
                    max_tree_steps: int = MAX_TREE_STEPS, kind: str = "call") -> BridgeResult:
    """
    Price a European option on the N-step geometric binomial tree.

    Args:
        params: ClosedFormParams
        n_steps: N >= 1
        phys_up: Physical up probability (prices do not depend on it)
        max_tree_steps: Largest N for which the full tree is built
        kind: 'call' or 'put'

    Returns:
        BridgeResult

    Raises:
        ValueError: N < 1 or d < e^{r tau/N} < u fails
    """
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    if params.tau == 0:
        raise ValueError("tau must be positive for the binomial bridge")
    dt = params.tau / n_steps
    up = math.exp(params.volatility * math.sqrt(dt))
    down = 1.0 / up
    growth = math.exp(params.rate * dt)
    if not down < growth < up:
        raise ValueError(f"d={down:.6g} < e^(r dt)={growth:.6g} < u={up:.6g} fails: no EMM")

    q_up = one_period_q(params, n_steps, phys_up)
    if n_steps <= max_tree_steps:
        tree = binomial_tree(params.spot, up, down, n_steps, growth, phys_up)
        emm = tree_emm(tree, q_up)
        claim = make_claim(tree, kind, params.strike)
        root_price = float(price(tree, claim, emm).value[tree.root])
        logger.debug(f"Bridge N={n_steps}: full tree with {tree.n_nodes} nodes")
        return BridgeResult(root_price, n_steps, q_up, up, down, tree)

    j = np.arange(n_steps + 1)
    terminal = params.spot * up ** (n_steps - j) * down ** j
    if kind == "call":
        values = np.maximum(terminal - params.strike, 0.0)
    else:
        values = np.maximum(params.strike - terminal, 0.0)
    for _ in range(n_steps):
        values = (q_up * values[:-1] + (1.0 - q_up) * values[1:]) / growth
    logger.debug(f"Bridge N={n_steps}: lattice with q_up={q_up:.12g}")
    return BridgeResult(float(values[0]), n_steps, q_up, up, down)
