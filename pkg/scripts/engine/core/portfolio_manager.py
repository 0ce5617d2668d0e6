"""
Portfolio Manager

Trading strategies on a scenario tree, their value and gains processes, and
the self-financing check. Maintains the accounting identity:
    V~_t = V~_0 + sum_{u<=t} phi_u . dS~_u   (for every self-financing phi)
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional

import numpy as np

from .exceptions import AccountingIdentityError, DimensionMismatchError
from .scenario_tree import ScenarioTree

logger = logging.getLogger(__name__)

VALUE_TOLERANCE = 1e-10


@dataclass(frozen=True, eq=False)
class Strategy:
    """
    Predictable portfolio allocation.

    Row k of `positions` is the (d+1)-vector held over the period that starts
    at node k, so all children of k share it. Leaf rows carry no position and
    are stored as zeros.

    Args:
        positions: Array of shape (n_nodes, d+1), numeraire units in column 0
    """
    positions: np.ndarray

    def __post_init__(self):
        positions = np.array(self.positions, dtype=float)
        if positions.ndim != 2:
            raise DimensionMismatchError("strategy positions must be a 2-d array")
        if not np.all(np.isfinite(positions)):
            raise ValueError("strategy positions must be finite")
        positions.flags.writeable = False
        object.__setattr__(self, "positions", positions)

    @classmethod
    def zeros(cls, tree: ScenarioTree) -> "Strategy":
        return cls(np.zeros((tree.n_nodes, tree.num_assets)))

    @classmethod
    def buy_and_hold(cls, tree: ScenarioTree, holding: np.ndarray) -> "Strategy":
        """The same holding at every decision node."""
        positions = np.zeros((tree.n_nodes, tree.num_assets))
        positions[tree.internal_nodes] = np.asarray(holding, dtype=float)
        return cls(positions)

    @property
    def numeraire(self) -> np.ndarray:
        return self.positions[:, 0]

    @property
    def risky(self) -> np.ndarray:
        return self.positions[:, 1:]

    def check_tree(self, tree: ScenarioTree) -> None:
        if self.positions.shape != (tree.n_nodes, tree.num_assets):
            raise DimensionMismatchError(
                f"strategy has shape {self.positions.shape}, tree needs "
                f"({tree.n_nodes}, {tree.num_assets})")

    def combine(self, alpha: float, other: "Strategy", beta: float) -> "Strategy":
        """alpha * self + beta * other."""
        if other.positions.shape != self.positions.shape:
            raise DimensionMismatchError("cannot combine strategies of different shapes")
        return Strategy(alpha * self.positions + beta * other.positions)

    def active_nodes(self, tree: ScenarioTree) -> List[str]:
        """Decision nodes holding a nonzero risky position."""
        active = np.flatnonzero(np.any(np.abs(self.risky) > 0.0, axis=1))
        return [tree.node_ids[i] for i in active]

    def to_records(self, tree: ScenarioTree) -> List[Dict[str, Any]]:
        """One record per decision node: {node, depth, <asset>: units}."""
        self.check_tree(tree)
        records = []
        for node in tree.internal_nodes:
            record = {"node": tree.node_ids[node], "depth": int(tree.depth[node])}
            for name, units in zip(tree.asset_names, self.positions[node]):
                record[name] = float(units)
            records.append(record)
        return records


@dataclass(frozen=True, eq=False)
class ValueProcess:
    """
    Portfolio value at every node, in currency and in numeraire units.

    Args:
        value: V at each node
        discounted: V~ = V / S^0 at each node
    """
    value: np.ndarray
    discounted: np.ndarray

    def initial(self, tree: ScenarioTree) -> float:
        return float(self.value[tree.root])

    def terminal(self, tree: ScenarioTree) -> np.ndarray:
        return self.value[tree.leaves]

    def terminal_discounted(self, tree: ScenarioTree) -> np.ndarray:
        return self.discounted[tree.leaves]

    def to_dict(self, tree: ScenarioTree) -> Dict[str, Dict[str, float]]:
        return {
            node_id: {"value": float(v), "discounted": float(dv)}
            for node_id, v, dv in zip(tree.node_ids, self.value, self.discounted)
        }


@dataclass
class SelfFinancingCheck:
    """Outcome of is_self_financing; truthy when the strategy is self-financing."""
    ok: bool
    first_violation: Optional[str] = None
    max_defect: float = 0.0
    identity_residual: Optional[float] = None

    def __bool__(self) -> bool:
        return self.ok


def _holding_into(tree: ScenarioTree, strategy: Strategy) -> np.ndarray:
    """Position carried into each node: the parent's row, or the node's own row at the root."""
    strategy.check_tree(tree)
    held = np.empty_like(strategy.positions)
    has_parent = tree.parent >= 0
    held[has_parent] = strategy.positions[tree.parent[has_parent]]
    held[~has_parent] = strategy.positions[~has_parent]
    return held


def value_process(tree: ScenarioTree, strategy: Strategy) -> ValueProcess:
    """
    V_t = phi_t . S_t at every node, with V_0 = phi_1 . S_0 at the root.

    Args:
        tree: Scenario tree
        strategy: Strategy matching the tree's shape

    Returns:
        ValueProcess
    """
    held = _holding_into(tree, strategy)
    value = np.einsum("ij,ij->i", held, tree.prices)
    discounted = np.einsum("ij,ij->i", held, tree.discounted_prices)
    return ValueProcess(value, discounted)


def gains_process(tree: ScenarioTree, strategy: Strategy) -> np.ndarray:
    """Discounted gains sum_{u<=t} phi_u . dS~_u accumulated from the root."""
    strategy.check_tree(tree)
    disc = tree.discounted_prices
    gains = np.zeros(tree.n_nodes)
    for node in tree.internal_nodes:
        kids = list(tree.children[node])
        step = (disc[kids, 1:] - disc[node, 1:]) @ strategy.positions[node, 1:]
        gains[kids] = gains[node] + step
    return gains


def strategy_from_risky(tree: ScenarioTree, risky: np.ndarray,
                        initial_value: float = 0.0) -> Strategy:
    """
    Complete a risky allocation with the numeraire leg.

    The numeraire units at each decision node are set so the position costs
    exactly the value carried into the node, which makes the result
    self-financing with V_0 = initial_value.

    Args:
        tree: Scenario tree
        risky: Risky units per node, shape (n_nodes, d); leaf rows are ignored
        initial_value: V_0 in currency

    Returns:
        Strategy
    """
    risky = np.asarray(risky, dtype=float)
    if risky.shape != (tree.n_nodes, tree.num_risky):
        raise DimensionMismatchError(
            f"risky positions have shape {risky.shape}, expected ({tree.n_nodes}, {tree.num_risky})")
    disc = tree.discounted_prices
    positions = np.zeros((tree.n_nodes, tree.num_assets))
    carried = np.zeros(tree.n_nodes)
    carried[tree.root] = initial_value / tree.numeraire[tree.root]
    for node in tree.internal_nodes:
        positions[node, 1:] = risky[node]
        positions[node, 0] = carried[node] - risky[node] @ disc[node, 1:]
        kids = list(tree.children[node])
        carried[kids] = positions[node] @ disc[kids].T
    return Strategy(positions)


def is_self_financing(tree: ScenarioTree, strategy: Strategy,
                      tol: float = VALUE_TOLERANCE) -> SelfFinancingCheck:
    """
    Check V_t(phi) = phi_{t+1} . S_t at every decision node of depth 1..T-1.

    Compared in discounted units. When the nodewise check passes, the gains
    identity V~_t = V~_0 + G_t is asserted as well.

    Args:
        tree: Scenario tree
        strategy: Strategy to check
        tol: Absolute tolerance on discounted values

    Returns:
        SelfFinancingCheck with the first violating node in breadth-first order

    Raises:
        AccountingIdentityError: Nodewise check passes but the gains identity fails
    """
    values = value_process(tree, strategy)
    disc = tree.discounted_prices
    worst = 0.0
    first: Optional[str] = None
    for node in tree.internal_nodes:
        if tree.depth[node] == 0:
            continue
        rebalanced = strategy.positions[node] @ disc[node]
        defect = abs(values.discounted[node] - rebalanced)
        worst = max(worst, defect)
        if defect > tol and first is None:
            first = tree.node_ids[node]
    if first is not None:
        logger.debug(f"Self-financing violated first at {first} (max defect {worst:.3e})")
        return SelfFinancingCheck(False, first, worst)

    gains = gains_process(tree, strategy)
    residual = float(np.max(np.abs(values.discounted - values.discounted[tree.root] - gains)))
    # tolerance grows with position size
    scale = max(1.0, float(np.max(np.abs(strategy.positions))) if strategy.positions.size else 1.0)
    if residual > tol * scale:
        raise AccountingIdentityError(
            f"discounted gains identity off by {residual:.3e} although rebalancing balances")
    return SelfFinancingCheck(True, None, worst, residual)
