"""
Contingent Claims

Nonnegative terminal payoffs, one value per leaf.
"""

from dataclasses import dataclass
from typing import Dict, Mapping

import numpy as np

from .exceptions import DimensionMismatchError
from .scenario_tree import ScenarioTree

PAYOFF_TYPES = ("call", "put", "digital")


@dataclass(frozen=True, eq=False)
class Claim:
    """
    Claim X >= 0, measurable at the horizon.

    Args:
        payoff: Payoff per leaf, in the tree's leaf order (currency at T)
    """
    payoff: np.ndarray

    def __post_init__(self):
        payoff = np.array(self.payoff, dtype=float).reshape(-1)
        if not np.all(np.isfinite(payoff)):
            raise ValueError("Claim payoff must be finite")
        if np.any(payoff < 0.0):
            raise ValueError("Claim payoff must be nonnegative on every leaf")
        payoff.flags.writeable = False
        object.__setattr__(self, "payoff", payoff)

    @classmethod
    def from_mapping(cls, tree: ScenarioTree, payoffs: Mapping[str, float]) -> "Claim":
        """Build from a {leaf_id: payoff} map covering every leaf."""
        missing = [leaf for leaf in tree.leaf_ids if leaf not in payoffs]
        extra = [key for key in payoffs if key not in set(tree.leaf_ids)]
        if missing or extra:
            raise DimensionMismatchError(
                f"claim leaves do not match tree (missing={missing[:3]}, unknown={extra[:3]})")
        return cls(np.array([float(payoffs[leaf]) for leaf in tree.leaf_ids]))

    def check_tree(self, tree: ScenarioTree) -> None:
        if self.payoff.shape[0] != tree.n_leaves:
            raise DimensionMismatchError(
                f"claim has {self.payoff.shape[0]} leaves, tree has {tree.n_leaves}")

    def discounted(self, tree: ScenarioTree) -> np.ndarray:
        """X~ = X / S^0_T per leaf."""
        self.check_tree(tree)
        return self.payoff / tree.leaf_numeraire

    def to_mapping(self, tree: ScenarioTree) -> Dict[str, float]:
        self.check_tree(tree)
        return {leaf: float(x) for leaf, x in zip(tree.leaf_ids, self.payoff)}


def make_claim(tree: ScenarioTree, kind: str, strike: float, asset: int = 1) -> Claim:
    """
    Standard payoff on a risky asset's terminal price.

    Args:
        tree: Scenario tree
        kind: 'call', 'put' or 'digital' (pays 1 when S^asset_T > strike)
        strike: Strike in currency
        asset: Risky asset column (1..d)

    Returns:
        Claim
    """
    if kind not in PAYOFF_TYPES:
        raise ValueError(f"Unknown payoff type '{kind}' (expected one of {PAYOFF_TYPES})")
    if not 1 <= asset <= tree.num_risky:
        raise DimensionMismatchError(f"asset {asset} outside 1..{tree.num_risky}")
    terminal = tree.prices[tree.leaves, asset]
    if kind == "call":
        payoff = np.maximum(terminal - strike, 0.0)
    elif kind == "put":
        payoff = np.maximum(strike - terminal, 0.0)
    else:
        payoff = (terminal > strike).astype(float)
    return Claim(payoff)


def numeraire_claim(tree: ScenarioTree, units: float = 1.0) -> Claim:
    """Claim paying `units` of the numeraire at T."""
    return Claim(units * tree.leaf_numeraire)
