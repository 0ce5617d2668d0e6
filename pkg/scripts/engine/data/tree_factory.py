"""
Tree Factory

Builders for the scenario trees used by the pricing bridge, the fuzz harness
and the tests: product trees (binomial, trinomial, multi-asset), random trees
drawn from a price grid or built martingale-first, and dip-then-recover
arbitrage instances for the admissibility surgery.
"""

import itertools
import logging
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core.portfolio_manager import Strategy, strategy_from_risky
from ..core.scenario_tree import ScenarioTree

logger = logging.getLogger(__name__)

DEFAULT_PRICE_GRID = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 8.0)
NUMERAIRE_GROWTH = (1.0, 1.0, 1.05, 1.1)
MARTINGALE_MOVES = (0.5, 0.75, 1.0, 1.25, 1.5, 2.0)
MARTINGALE_REDRAWS = 20
MIN_LAST_MOVE = 0.05


def product_tree(spot: Sequence[float], factors: Sequence[Sequence[float]],
                 probs: Sequence[float], n_steps: int, growth: float = 1.0,
                 labels: Optional[Sequence[str]] = None,
                 asset_names: Optional[Sequence[str]] = None) -> ScenarioTree:
    """
    Non-recombining tree where every node branches the same way.

    Child k multiplies each risky price by factors[k] and the numeraire by
    `growth`. Node ids spell the path ('0' for the root, then one label per
    period, e.g. 'ud').

    Args:
        spot: Risky prices at the root (numeraire starts at 1)
        factors: Per-child multiplicative moves, one row per child
        probs: Physical probability of each child
        n_steps: Number of periods
        growth: Numeraire growth per period
        labels: One-character labels per child (default 'a', 'b', ...)
        asset_names: Optional asset names, numeraire first

    Returns:
        ScenarioTree
    """
    factors = np.atleast_2d(np.asarray(factors, dtype=float))
    if factors.shape[0] == 1 and len(probs) > 1:
        factors = factors.T
    spot = np.atleast_1d(np.asarray(spot, dtype=float))
    if factors.shape != (len(probs), len(spot)):
        raise ValueError(f"factors must have shape ({len(probs)}, {len(spot)}); got {factors.shape}")
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    labels = list(labels or "abcdefghijklmnopqrstuvwxyz"[:len(probs)])

    records: List[Dict[str, Any]] = [
        {"id": "0", "parent": None, "prob": 1.0, "prices": [1.0, *spot.tolist()]}]
    frontier: List[Tuple[str, float, np.ndarray]] = [("0", 1.0, spot)]
    for _ in range(n_steps):
        next_frontier = []
        for node_id, numeraire, risky in frontier:
            for label, factor, prob in zip(labels, factors, probs):
                child_id = label if node_id == "0" else node_id + label
                child_numeraire = numeraire * growth
                child_risky = risky * factor
                records.append({"id": child_id, "parent": node_id, "prob": float(prob),
                                "prices": [child_numeraire, *child_risky.tolist()]})
                next_frontier.append((child_id, child_numeraire, child_risky))
        frontier = next_frontier
    return ScenarioTree.from_records(records, asset_names)


def binomial_tree(spot: float = 4.0, up: float = 2.0, down: float = 0.5, n_steps: int = 1,
                  growth: float = 1.0, phys_up: float = 0.5) -> ScenarioTree:
    """Single-stock binomial tree with child labels 'u' and 'd'."""
    return product_tree([spot], [[up], [down]], [phys_up, 1.0 - phys_up], n_steps, growth,
                        labels="ud", asset_names=("bond", "stock"))


def trinomial_tree(spot: float = 4.0, moves: Sequence[float] = (2.0, 1.0, 0.5),
                   probs: Sequence[float] = (1 / 3, 1 / 3, 1 / 3), n_steps: int = 1,
                   growth: float = 1.0) -> ScenarioTree:
    """Single-stock trinomial tree with child labels 'u', 'm' and 'd'."""
    return product_tree([spot], [[m] for m in moves], probs, n_steps, growth,
                        labels="umd", asset_names=("bond", "stock"))


def two_asset_tree(spot: Sequence[float] = (4.0, 4.0),
                   moves: Sequence[Sequence[float]] = ((1.5, 0.5), (0.5, 1.5), (1.25, 1.25), (0.75, 0.75)),
                   probs: Sequence[float] = (0.25, 0.25, 0.25, 0.25),
                   growth: float = 1.0) -> ScenarioTree:
    """One-period tree with two risky assets; the default has three independent constraints on four leaves."""
    return product_tree(spot, moves, probs, 1, growth, labels="abcd",
                        asset_names=("bond", "x", "y"))


def constant_tree(spot: float = 4.0, n_children: int = 2, n_steps: int = 1) -> ScenarioTree:
    """Tree whose risky price never moves."""
    probs = [1.0 / n_children] * n_children
    return product_tree([spot], [[1.0]] * n_children, probs, n_steps,
                        asset_names=("bond", "stock"))


def _martingale_children(rng: np.random.Generator, parent: np.ndarray,
                         q: np.ndarray) -> np.ndarray:
    """Discounted child prices whose q-mean is `parent`, one asset at a time."""
    children = np.empty((len(q), len(parent)))
    for i, level in enumerate(parent):
        for _ in range(MARTINGALE_REDRAWS):
            head = level * rng.choice(MARTINGALE_MOVES, size=len(q) - 1)
            last = (level - q[:-1] @ head) / q[-1]
            if last >= MIN_LAST_MOVE * level:
                children[:-1, i] = head
                children[-1, i] = last
                break
        else:
            children[:, i] = level
    return children


def random_tree(rng: np.random.Generator, max_horizon: int = 3, max_assets: int = 2,
                max_children: int = 3,
                price_grid: Sequence[float] = DEFAULT_PRICE_GRID,
                viable_share: float = 0.5) -> ScenarioTree:
    """
    Random valid tree within size bounds.

    With probability `viable_share` the tree is built martingale-first: every
    node draws a strictly positive conditional measure and its children's
    discounted prices are drawn so that measure makes them fair, so the tree
    has an EMM by construction. Otherwise discounted prices are drawn from
    `price_grid`, so ties and arbitrage are common. The numeraire grows by a
    factor shared by all children of a node, which keeps it predictable.

    Args:
        rng: Generator (one per task for reproducibility)
        max_horizon: Largest T drawn
        max_assets: Largest d drawn
        max_children: Largest branching drawn (at least 2)
        price_grid: Discounted price levels
        viable_share: Probability of a martingale-first tree

    Returns:
        ScenarioTree that passes validate_tree
    """
    horizon = int(rng.integers(1, max_horizon + 1))
    d = int(rng.integers(1, max_assets + 1))
    grid = np.asarray(price_grid, dtype=float)
    viable = bool(rng.random() < viable_share)

    root = rng.choice(grid, size=d)
    records: List[Dict[str, Any]] = [{
        "id": "n0", "parent": None, "prob": 1.0, "prices": [1.0, *root.tolist()]}]
    frontier = [("n0", 1.0, root)]
    counter = itertools.count(1)
    for _ in range(horizon):
        next_frontier = []
        for node_id, numeraire, discounted in frontier:
            n_children = int(rng.integers(2, max(2, max_children) + 1))
            weights = rng.integers(1, 5, size=n_children).astype(float)
            probs = weights / weights.sum()
            probs[-1] = 1.0 - probs[:-1].sum()
            child_numeraire = numeraire * float(rng.choice(NUMERAIRE_GROWTH))
            if viable:
                q = rng.integers(1, 5, size=n_children).astype(float)
                moves = _martingale_children(rng, discounted, q / q.sum())
            else:
                moves = rng.choice(grid, size=(n_children, d))
            for prob, child in zip(probs, moves):
                child_id = f"n{next(counter)}"
                records.append({"id": child_id, "parent": node_id, "prob": float(prob),
                                "prices": [child_numeraire, *(child * child_numeraire).tolist()]})
                next_frontier.append((child_id, child_numeraire, child))
        frontier = next_frontier
    return ScenarioTree.from_records(records)


def dip_arbitrage_instance(rng: np.random.Generator) -> Tuple[ScenarioTree, Strategy]:
    """
    Two-period tree with a self-financing arbitrage that goes negative at t = 1.

    The strategy buys the stock with borrowed numeraire at the root. On the up
    node it sells out at a profit; on the down node its value is negative and
    it buys more stock, which then rises on both branches and ends above zero.
    The up node's children straddle it, so the only arbitrage in the market
    sits at the down node.

    Returns:
        (tree, strategy) with V_0 = 0, V_T >= 0, V_T > 0 somewhere and a
        negative value at the down node
    """
    s0 = float(rng.uniform(2.0, 6.0))
    up = s0 * float(rng.uniform(1.1, 1.6))
    down = s0 * float(rng.uniform(0.4, 0.9))
    spread = float(rng.uniform(0.05, 0.3))
    gains = np.sort(rng.uniform(0.05, 0.5, size=2))
    growth = rng.choice(NUMERAIRE_GROWTH, size=2)
    g1, g2 = float(growth[0]), float(growth[0] * growth[1])

    # discounted prices, scaled by the numeraire below
    disc = {
        "0": s0, "u": up, "d": down,
        "uu": up * (1 + spread), "ud": up * (1 - spread),
        "du": down * (1 + gains[1]), "dd": down * (1 + gains[0]),
    }
    numeraire = {"0": 1.0, "u": g1, "d": g1, "uu": g2, "ud": g2, "du": g2, "dd": g2}
    parents = {"0": None, "u": "0", "d": "0", "uu": "u", "ud": "u", "du": "d", "dd": "d"}
    p_up = float(rng.uniform(0.2, 0.8))
    probs = {"0": 1.0, "u": p_up, "d": 1 - p_up, "uu": 0.5, "ud": 0.5, "du": 0.5, "dd": 0.5}
    records = [{"id": k, "parent": parents[k], "prob": probs[k],
                "prices": [numeraire[k], disc[k] * numeraire[k]]} for k in disc]
    tree = ScenarioTree.from_records(records, ("bond", "stock"))

    deficit = s0 - down
    units = 2.0 * deficit / (down * gains[0])
    risky = np.zeros((tree.n_nodes, 1))
    risky[tree.index("0")] = 1.0
    risky[tree.index("d")] = units
    return tree, strategy_from_risky(tree, risky, initial_value=0.0)
