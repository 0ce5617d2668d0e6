"""
Probability Measures on Scenario Trees

A measure is a strictly positive distribution over leaves (paths). Node and
conditional probabilities are induced by summing over the leaves below a node.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Mapping

import numpy as np

from .exceptions import DimensionMismatchError
from .scenario_tree import ScenarioTree

logger = logging.getLogger(__name__)

PROBABILITY_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class Measure:
    """
    Strictly positive leaf distribution.

    Args:
        leaf_prob: Probability per leaf, in the tree's leaf order
    """
    leaf_prob: np.ndarray

    def __post_init__(self):
        prob = np.array(self.leaf_prob, dtype=float).reshape(-1)
        if prob.size == 0:
            raise ValueError("Measure needs at least one leaf")
        if not np.all(np.isfinite(prob)) or np.any(prob <= 0.0):
            raise ValueError("Measure must be strictly positive on every leaf")
        if abs(prob.sum() - 1.0) > PROBABILITY_TOLERANCE:
            raise ValueError(f"Measure sums to {prob.sum():.17g}, expected 1")
        prob.flags.writeable = False
        object.__setattr__(self, "leaf_prob", prob)

    @classmethod
    def from_weights(cls, weights: np.ndarray) -> "Measure":
        """Normalize nonnegative weights into a measure."""
        weights = np.asarray(weights, dtype=float)
        return cls(weights / weights.sum())

    @classmethod
    def physical(cls, tree: ScenarioTree) -> "Measure":
        return cls.from_weights(tree.phys_leaf_prob)

    @classmethod
    def from_mapping(cls, tree: ScenarioTree, probabilities: Mapping[str, float]) -> "Measure":
        """Build from a {leaf_id: probability} map covering every leaf."""
        missing = [leaf for leaf in tree.leaf_ids if leaf not in probabilities]
        extra = [key for key in probabilities if key not in set(tree.leaf_ids)]
        if missing or extra:
            raise DimensionMismatchError(
                f"measure leaves do not match tree (missing={missing[:3]}, unknown={extra[:3]})")
        return cls(np.array([float(probabilities[leaf]) for leaf in tree.leaf_ids]))

    @classmethod
    def from_conditional(cls, tree: ScenarioTree, cond_prob: np.ndarray) -> "Measure":
        """Leaf probabilities as products of conditional edge probabilities along each path."""
        cond_prob = np.asarray(cond_prob, dtype=float)
        if cond_prob.shape[0] != tree.n_nodes:
            raise DimensionMismatchError("conditional probabilities need one entry per node")
        paths = tree.path_matrix
        leaf_prob = np.prod(cond_prob[paths[:, 1:]], axis=1)
        return cls.from_weights(leaf_prob)

    def check_tree(self, tree: ScenarioTree) -> None:
        if self.leaf_prob.shape[0] != tree.n_leaves:
            raise DimensionMismatchError(
                f"measure has {self.leaf_prob.shape[0]} leaves, tree has {tree.n_leaves}")

    def node_prob(self, tree: ScenarioTree) -> np.ndarray:
        """Probability of reaching each node."""
        self.check_tree(tree)
        return tree.membership @ self.leaf_prob

    def conditional_prob(self, tree: ScenarioTree) -> np.ndarray:
        """Probability of the edge parent -> node given the parent (1 at the root)."""
        node_prob = self.node_prob(tree)
        cond = np.ones(tree.n_nodes)
        has_parent = tree.parent >= 0
        cond[has_parent] = node_prob[has_parent] / node_prob[tree.parent[has_parent]]
        return cond

    def density(self, tree: ScenarioTree) -> np.ndarray:
        """Radon-Nikodym derivative against the physical measure, per leaf."""
        self.check_tree(tree)
        return self.leaf_prob / tree.phys_leaf_prob

    def expectation(self, leaf_values: np.ndarray) -> float:
        return float(np.dot(self.leaf_prob, leaf_values))

    def conditional_expectation(self, tree: ScenarioTree, leaf_values: np.ndarray) -> np.ndarray:
        """E(X | node) at every node for a leaf-indexed X."""
        leaf_values = np.asarray(leaf_values, dtype=float)
        if leaf_values.shape[0] != tree.n_leaves:
            raise DimensionMismatchError("leaf values do not match the tree's leaves")
        weighted = tree.membership @ (self.leaf_prob * leaf_values)
        return weighted / self.node_prob(tree)

    def total_variation(self, other: "Measure") -> float:
        return 0.5 * float(np.abs(self.leaf_prob - other.leaf_prob).sum())

    def to_mapping(self, tree: ScenarioTree) -> Dict[str, float]:
        self.check_tree(tree)
        return {leaf: float(p) for leaf, p in zip(tree.leaf_ids, self.leaf_prob)}
