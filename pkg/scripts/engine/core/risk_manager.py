"""
Risk Manager

Admissibility and arbitrage checks on self-financing strategies, and the
promotion of an inadmissible arbitrage into an admissible one by switching the
strategy on only where its discounted value was last negative.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from .exceptions import FTAPViolationError, StrategyError
from .portfolio_manager import (
    VALUE_TOLERANCE,
    Strategy,
    ValueProcess,
    is_self_financing,
    value_process,
)
from .scenario_tree import ScenarioTree

logger = logging.getLogger(__name__)


@dataclass
class PromotionResult:
    """
    Admissible arbitrage built from an inadmissible one.

    Args:
        strategy: The admissible arbitrage theta
        switch_time: Last depth t at which the input's discounted value is negative
            (None when the input was already admissible)
        trigger_nodes: Node ids of A = {V~_t(phi) < 0}
        identity_residual: max |V~_u(theta) - 1_A (V~_u(phi) - V~_t(phi))| over depths >= t
    """
    strategy: Strategy
    switch_time: Optional[int] = None
    trigger_nodes: List[str] = field(default_factory=list)
    identity_residual: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "switch_time": self.switch_time,
            "trigger_nodes": list(self.trigger_nodes),
            "identity_residual": self.identity_residual,
        }


def _require_self_financing(tree: ScenarioTree, strategy: Strategy) -> None:
    check = is_self_financing(tree, strategy)
    if not check:
        raise StrategyError(
            f"strategy is not self-financing (first violation at node {check.first_violation})")


def is_admissible(tree: ScenarioTree, strategy: Strategy, tol: float = VALUE_TOLERANCE) -> bool:
    """
    True iff the self-financing strategy never has negative value.

    Raises:
        StrategyError: If the strategy is not self-financing
    """
    _require_self_financing(tree, strategy)
    values = value_process(tree, strategy)
    return bool(np.all(values.discounted >= -tol))


def _arbitrage_profile(tree: ScenarioTree, values: ValueProcess, tol: float) -> bool:
    terminal = values.terminal_discounted(tree)
    return (abs(values.discounted[tree.root]) <= tol
            and bool(np.all(terminal >= -tol))
            and bool(np.any(terminal > tol)))


def is_arbitrage(tree: ScenarioTree, strategy: Strategy, tol: float = VALUE_TOLERANCE) -> bool:
    """
    True iff V_0 = 0, V_T >= 0 on every leaf and V_T > 0 on some leaf.

    Every edge has positive physical probability, so one positive leaf is an
    event of positive probability. A strategy that is not self-financing is
    never an arbitrage.
    """
    if not is_self_financing(tree, strategy, tol):
        logger.debug("is_arbitrage: strategy is not self-financing")
        return False
    return _arbitrage_profile(tree, value_process(tree, strategy), tol)


def _descendant_anchor(tree: ScenarioTree, switch_time: int, trigger: np.ndarray) -> np.ndarray:
    """For every node of depth >= t, its ancestor at depth t when that ancestor is in A; else -1."""
    anchor = np.full(tree.n_nodes, -1, dtype=int)
    in_a = set(int(n) for n in trigger)
    order = sorted(range(tree.n_nodes), key=lambda k: tree.depth[k])
    for node in order:
        depth = tree.depth[node]
        if depth == switch_time and node in in_a:
            anchor[node] = node
        elif depth > switch_time:
            anchor[node] = anchor[tree.parent[node]]
    return anchor


def promote_to_admissible_detailed(tree: ScenarioTree, strategy: Strategy,
                                   tol: float = VALUE_TOLERANCE) -> PromotionResult:
    """
    Turn a self-financing arbitrage into an admissible one.

    With t the last depth where V~(phi) is negative and A the nodes of depth t
    where it is, theta holds nothing up to t and, below each a in A, the risky
    part of phi together with phi's numeraire leg reduced by V~_t(phi)(a).
    Then V~_u(theta) = V~_u(phi) - V~_t(phi)(a) > 0 below A and 0 elsewhere.

    Args:
        tree: Scenario tree
        strategy: Self-financing arbitrage, possibly inadmissible
        tol: Value tolerance

    Returns:
        PromotionResult

    Raises:
        StrategyError: Input is not a self-financing arbitrage
        FTAPViolationError: Output fails its own admissibility or arbitrage check
    """
    _require_self_financing(tree, strategy)
    values = value_process(tree, strategy)
    if not _arbitrage_profile(tree, values, tol):
        raise StrategyError("strategy is not an arbitrage")

    negative = values.discounted < -tol
    if not np.any(negative):
        return PromotionResult(strategy)

    switch_time = int(tree.depth[negative].max())
    trigger = np.flatnonzero(negative & (tree.depth == switch_time))
    anchor = _descendant_anchor(tree, switch_time, trigger)

    positions = np.zeros_like(strategy.positions)
    for node in tree.internal_nodes:
        a = anchor[node]
        if a < 0:
            continue
        positions[node] = strategy.positions[node]
        positions[node, 0] -= values.discounted[a]
    promoted = Strategy(positions)

    new_values = value_process(tree, promoted)
    expected = np.zeros(tree.n_nodes)
    below = anchor >= 0
    expected[below] = values.discounted[below] - values.discounted[anchor[below]]
    at_or_after = tree.depth >= switch_time
    residual = float(np.max(np.abs(new_values.discounted[at_or_after] - expected[at_or_after])))

    if not (is_admissible(tree, promoted, tol) and is_arbitrage(tree, promoted, tol)):
        raise FTAPViolationError(
            f"promoted strategy is not an admissible arbitrage (switch time {switch_time})")
    if residual > tol:
        raise FTAPViolationError(f"promotion value identity off by {residual:.3e}")

    trigger_ids = [tree.node_ids[n] for n in trigger]
    logger.info(f"Promoted arbitrage: switch at t={switch_time} on {len(trigger_ids)} node(s)")
    return PromotionResult(promoted, switch_time, trigger_ids, residual)


def promote_to_admissible(tree: ScenarioTree, strategy: Strategy,
                          tol: float = VALUE_TOLERANCE) -> Strategy:
    """Admissible arbitrage from a self-financing arbitrage; see promote_to_admissible_detailed."""
    return promote_to_admissible_detailed(tree, strategy, tol).strategy
