"""
Tree Validators

Structural checks for scenario trees. Violations are collected as readable
diagnostics rather than raised, so one pass reports every problem in a file.
"""

import logging
from typing import List

import numpy as np

from ..core.exceptions import InvalidTreeError
from ..core.scenario_tree import ScenarioTree

PROBABILITY_TOLERANCE = 1e-12


class TreeValidator:
    """
    Scenario tree validation.

    Checks single root, uniform leaf depth, T >= 1, d >= 1, edge probabilities,
    numeraire positivity and predictability, and nonnegative prices.
    """

    def __init__(self, probability_tolerance: float = PROBABILITY_TOLERANCE):
        self.probability_tolerance = probability_tolerance
        self.logger = logging.getLogger(__name__)

    def validate_tree(self, tree: ScenarioTree) -> List[str]:
        """
        Validate a scenario tree.

        Args:
            tree: Tree to check

        Returns:
            List of violated invariants (empty if valid)
        """
        errors = []
        errors.extend(self._check_shape(tree))
        errors.extend(self._check_probabilities(tree))
        errors.extend(self._check_prices(tree))
        if errors:
            self.logger.debug(f"Tree has {len(errors)} violation(s): {errors[0]}")
        return errors

    def require_valid(self, tree: ScenarioTree) -> ScenarioTree:
        """Return the tree unchanged, or raise InvalidTreeError with every diagnostic."""
        errors = self.validate_tree(tree)
        if errors:
            raise InvalidTreeError(errors)
        return tree

    def _check_shape(self, tree: ScenarioTree) -> List[str]:
        errors = []
        roots = [tree.node_ids[r] for r in tree.roots]
        if len(roots) != 1:
            errors.append(f"expected a single root, found {len(roots)}: {roots[:5]}")
        if tree.num_risky < 1:
            errors.append("no risky asset: d must be at least 1")
        horizon = tree.horizon
        if horizon < 1:
            errors.append("horizon T = 0: no trading period")
        for leaf in tree.leaves:
            if tree.depth[leaf] != horizon:
                errors.append(
                    f"non-uniform depth: leaf {tree.node_ids[leaf]} at depth "
                    f"{tree.depth[leaf]}, expected {horizon}")
        return errors

    def _check_probabilities(self, tree: ScenarioTree) -> List[str]:
        errors = []
        for i in range(tree.n_nodes):
            if tree.parent[i] >= 0 and not (np.isfinite(tree.edge_prob[i]) and tree.edge_prob[i] > 0.0):
                errors.append(f"edge probability not strictly positive at node {tree.node_ids[i]}")
        for node in tree.internal_nodes:
            total = float(tree.edge_prob[list(tree.children[node])].sum())
            if abs(total - 1.0) > self.probability_tolerance:
                errors.append(
                    f"edge probabilities sum ≠ 1 below node {tree.node_ids[node]} (sum = {total:.15g})")
        return errors

    def _check_prices(self, tree: ScenarioTree) -> List[str]:
        errors = []
        prices = tree.prices
        for i in np.flatnonzero(~np.all(np.isfinite(prices), axis=1)):
            errors.append(f"non-finite price at node {tree.node_ids[i]}")
        for i in np.flatnonzero(np.any(prices < 0.0, axis=1)):
            errors.append(f"negative price at node {tree.node_ids[i]}")
        for i in np.flatnonzero(~(prices[:, 0] > 0.0)):
            errors.append(f"numeraire not strictly positive at node {tree.node_ids[i]}")
        for node in tree.internal_nodes:
            kids = list(tree.children[node])
            numeraire = prices[kids, 0]
            if np.ptp(numeraire) > 0.0:
                errors.append(
                    f"numeraire not predictable: children of {tree.node_ids[node]} carry "
                    f"S0 values {sorted(set(numeraire.tolist()))}")
        return errors


def validate_tree(tree: ScenarioTree) -> List[str]:
    """Diagnostics for a tree with the default tolerances (empty = valid)."""
    return TreeValidator().validate_tree(tree)
