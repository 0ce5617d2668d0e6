"""
Completeness

Second-theorem machinery on finite trees: the affine set of martingale
measures around a base EMM, completeness, replication by backward induction,
arbitrage pricing, the explicit second EMM of an incomplete market and the
no-arbitrage price interval.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Optional, Tuple

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import linprog

from ..core.contingent_claims import Claim
from ..core.exceptions import (
    ArbitrageMarketError,
    FTAPViolationError,
    NotAnEMMError,
    SolverError,
)
from ..core.measures import Measure
from ..core.portfolio_manager import (
    Strategy,
    ValueProcess,
    strategy_from_risky,
    value_process,
)
from ..core.scenario_tree import ScenarioTree
from .arbitrage_engine import (
    HIGHS_OPTIONS,
    find_emm,
    is_martingale_measure,
    martingale_system,
)

logger = logging.getLogger(__name__)

REPLICATION_TOLERANCE = 1e-9
RANK_TOLERANCE = 1e-10
DISTINCTNESS = 1e-8


@dataclass
class EmmPolytope:
    """
    Martingale measures near a base EMM: base + directions @ theta.

    Args:
        base: The verified EMM the polytope is built around
        orthogonal: Columns X spanning the E_base-orthogonal complement of the gains space H
        directions: base * X, leaf-probability directions (each column sums to 0)
        dimension: Number of independent directions (0 iff the EMM is unique)
    """
    base: Measure
    orthogonal: np.ndarray
    directions: np.ndarray
    dimension: int

    def point(self, theta: np.ndarray) -> np.ndarray:
        """Leaf probabilities at parameter theta (not necessarily positive)."""
        return self.base.leaf_prob + self.directions @ np.asarray(theta, dtype=float)

    def contains(self, theta: np.ndarray, floor: float = 0.0) -> bool:
        return bool(np.all(self.point(theta) > floor))


@dataclass
class ReplicationResult:
    """
    Outcome of replicate.

    Args:
        strategy: Self-financing strategy started from initial_price
        initial_price: V_0 in currency
        residual: max over leaves of |V_T(strategy) - payoff|
        values: Value process of the strategy
    """
    strategy: Strategy
    initial_price: float
    residual: float
    values: ValueProcess

    @property
    def attainable(self) -> bool:
        return self.residual <= REPLICATION_TOLERANCE

    def to_dict(self, tree: ScenarioTree) -> Dict[str, Any]:
        return {
            "initial_price": self.initial_price,
            "residual": self.residual,
            "attainable": self.attainable,
            "strategy": self.strategy.to_records(tree),
        }


@dataclass
class CompletenessReport:
    complete: bool
    dimension: int
    max_children: int
    n_leaves: int
    atom_bound: int
    emm: Measure

    def to_dict(self) -> Dict[str, Any]:
        return {
            "complete": self.complete,
            "dimension": self.dimension,
            "max_children": self.max_children,
            "n_leaves": self.n_leaves,
            "atom_bound": self.atom_bound,
        }


@dataclass
class PriceInterval:
    """No-arbitrage price range of a claim over the closure of the EMM set."""
    low: float
    high: float
    low_measure: np.ndarray
    high_measure: np.ndarray

    @property
    def width(self) -> float:
        return self.high - self.low


def gains_basis(tree: ScenarioTree) -> np.ndarray:
    """
    Leaf vectors spanning H: the constant 1 and every one-period discounted gain.

    Column (n, i) is 1_{leaf below n} * (S~^i(child of n on the leaf) - S~^i(n)).
    """
    paths = tree.path_matrix
    disc = tree.discounted_prices
    columns = [np.ones(tree.n_leaves)]
    for node in tree.internal_nodes:
        members = tree.leaf_members(node)
        step = disc[paths[members, tree.depth[node] + 1], 1:] - disc[node, 1:]
        for i in range(tree.num_risky):
            column = np.zeros(tree.n_leaves)
            column[members] = step[:, i]
            columns.append(column)
    return np.column_stack(columns)


def _require_emm(tree: ScenarioTree, measure: Measure) -> None:
    check = is_martingale_measure(tree, measure)
    if not check:
        raise NotAnEMMError(
            f"measure is not a martingale measure (residual {check.worst_residual:.3e} "
            f"at node {check.worst_node}, asset {check.worst_asset})")


def _require_base(tree: ScenarioTree, base: Optional[Measure]) -> Measure:
    if base is not None:
        _require_emm(tree, base)
        return base
    emm = find_emm(tree)
    if emm is None:
        raise ArbitrageMarketError("market admits arbitrage: no equivalent martingale measure")
    return emm


def emm_polytope(tree: ScenarioTree, base: Measure) -> EmmPolytope:
    """
    Directions of the martingale-measure set around `base`.

    X is orthogonal to H under <X, Y> = E_base(XY) iff G^T diag(q) X = 0; the
    corresponding probability perturbations are q * X.

    Raises:
        NotAnEMMError: base fails the martingale check
    """
    _require_emm(tree, base)
    weighted = gains_basis(tree).T * base.leaf_prob
    orthogonal = null_space(weighted, rcond=RANK_TOLERANCE)
    directions = orthogonal * base.leaf_prob[:, None]
    dimension = orthogonal.shape[1]
    logger.debug(f"EMM polytope dimension {dimension} on {tree.n_leaves} leaves")
    return EmmPolytope(base, orthogonal, directions, dimension)


def completeness_report(tree: ScenarioTree, base: Optional[Measure] = None) -> CompletenessReport:
    """
    Dimension of the EMM set, branching and the (d+1)^T atom bound.

    Raises:
        ArbitrageMarketError: Tree admits arbitrage
        FTAPViolationError: A complete tree exceeds the branching bound
    """
    emm = _require_base(tree, base)
    polytope = emm_polytope(tree, emm)
    max_children = max(len(tree.children[n]) for n in tree.internal_nodes)
    atom_bound = (tree.num_risky + 1) ** tree.horizon
    complete = polytope.dimension == 0
    if complete and (max_children > tree.num_risky + 1 or tree.n_leaves > atom_bound):
        raise FTAPViolationError(
            f"complete market with {max_children} children at a node and {tree.n_leaves} "
            f"leaves exceeds the bound for d={tree.num_risky}")
    if not complete:
        logger.info(f"Market incomplete: EMM set has dimension {polytope.dimension}")
    return CompletenessReport(complete, polytope.dimension, max_children, tree.n_leaves,
                              atom_bound, emm)


def is_complete(tree: ScenarioTree, base: Optional[Measure] = None) -> bool:
    """True iff the EMM is unique. Raises ArbitrageMarketError on an arbitrage market."""
    return completeness_report(tree, base).complete


def replicate(tree: ScenarioTree, claim: Claim) -> ReplicationResult:
    """
    Replicate a claim by backward induction.

    At each decision node the least-squares position phi with
    phi . S~(child) = V~(child) for every child is found; the risky parts are
    then replayed forward from the root value so the returned strategy is
    self-financing. Unattainable claims show up as a positive residual.

    Args:
        tree: No-arbitrage scenario tree
        claim: Claim to replicate

    Returns:
        ReplicationResult
    """
    target = np.zeros(tree.n_nodes)
    target[tree.leaves] = claim.discounted(tree)
    disc = tree.discounted_prices
    risky = np.zeros((tree.n_nodes, tree.num_risky))
    for node in tree.internal_nodes[::-1]:
        kids = list(tree.children[node])
        position = np.linalg.lstsq(disc[kids], target[kids], rcond=None)[0]
        risky[node] = position[1:]
        target[node] = position @ disc[node]

    initial_price = float(target[tree.root] * tree.numeraire[tree.root])
    strategy = strategy_from_risky(tree, risky, initial_price)
    values = value_process(tree, strategy)
    residual = float(np.max(np.abs(values.terminal(tree) - claim.payoff)))
    logger.debug(f"Replication residual {residual:.3e}, price {initial_price:.10g}")
    return ReplicationResult(strategy, initial_price, residual, values)


def price(tree: ScenarioTree, claim: Claim, measure: Measure) -> ValueProcess:
    """
    Arbitrage price process V_t = S^0_t E*(X~ | node).

    Raises:
        NotAnEMMError: measure fails the martingale check
    """
    _require_emm(tree, measure)
    discounted = measure.conditional_expectation(tree, claim.discounted(tree))
    return ValueProcess(discounted * tree.numeraire, discounted)


def _pick_orthogonal(polytope: EmmPolytope) -> np.ndarray:
    q = polytope.base.leaf_prob
    columns = polytope.orthogonal
    norms = np.sqrt((columns ** 2 * q[:, None]).sum(axis=0))
    best = norms.max()
    tied = [k for k in range(columns.shape[1]) if norms[k] >= best * (1 - 1e-12)]
    # among ties, the column whose largest entry sits at the lowest leaf
    choice = min(tied, key=lambda k: int(np.argmax(np.abs(columns[:, k]))))
    x = columns[:, choice] / norms[choice]
    lead = np.flatnonzero(np.abs(x) > 1e-12)[0]
    return x if x[lead] > 0 else -x


def second_measure(tree: ScenarioTree, base: Measure, sign: int = 1) -> Optional[Measure]:
    """
    A second EMM of an incomplete market, P** = (1 + X / (2 |X|_inf)) P*.

    X is orthogonal to H under E_{P*}, so P** sums to one and keeps S~ a
    martingale; the factor lies in [1/2, 3/2], so P** stays strictly positive.

    Args:
        tree: Scenario tree
        base: Verified EMM P*
        sign: +1 or -1; the two choices straddle the base

    Returns:
        Measure distinct from base, or None when the market is complete
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    polytope = emm_polytope(tree, base)
    if polytope.dimension == 0:
        return None
    x = sign * _pick_orthogonal(polytope)
    factor = 1.0 + x / (2.0 * np.abs(x).max())
    measure = Measure.from_weights(factor * base.leaf_prob)

    check = is_martingale_measure(tree, measure)
    if not check:
        raise FTAPViolationError(f"second measure fails the martingale check "
                                 f"(residual {check.worst_residual:.3e})")
    if measure.total_variation(base) < DISTINCTNESS:
        raise FTAPViolationError("second measure coincides with the base measure")
    return measure


def _linear_extreme(tree: ScenarioTree, cost: np.ndarray) -> np.ndarray:
    """Minimize cost . q over nonnegative martingale measures."""
    matrix, rhs = martingale_system(tree)
    result = linprog(cost, A_eq=matrix, b_eq=rhs, bounds=[(0.0, None)] * tree.n_leaves,
                     method="highs", options=HIGHS_OPTIONS)
    if result.status == 2:
        raise ArbitrageMarketError("no martingale measure exists")
    if result.status != 0:
        raise SolverError(f"price interval LP failed: {result.message}", status=result.status)
    return np.clip(result.x, 0.0, None)


def price_interval(tree: ScenarioTree, claim: Claim) -> PriceInterval:
    """
    Lowest and highest root price of a claim over the closure of the EMM set.

    Raises:
        ArbitrageMarketError: Tree has no strictly positive EMM
    """
    if find_emm(tree) is None:
        raise ArbitrageMarketError("market admits arbitrage: price interval undefined")
    discounted = claim.discounted(tree)
    scale = float(tree.numeraire[tree.root])
    low_q = _linear_extreme(tree, discounted)
    high_q = _linear_extreme(tree, -discounted)
    return PriceInterval(scale * float(low_q @ discounted), scale * float(high_q @ discounted),
                         low_q, high_q)


def extreme_measures(tree: ScenarioTree, objectives: Iterable[np.ndarray]) -> List[np.ndarray]:
    """Vertices of the closed martingale-measure set reached by minimizing each objective."""
    vertices: List[np.ndarray] = []
    for cost in objectives:
        q = _linear_extreme(tree, np.asarray(cost, dtype=float))
        if not any(np.allclose(q, v, atol=1e-10) for v in vertices):
            vertices.append(q)
    return vertices


def supermartingale_shortfall(tree: ScenarioTree, strategy: Strategy, claim: Claim,
                              measure: Measure) -> Tuple[float, Optional[str]]:
    """
    Worst excess of the arbitrage price over a strategy's discounted value.

    For an admissible strategy whose terminal value covers the claim this is
    at most the value tolerance at every node.

    Returns:
        (max over nodes of E*(X~ | node) - V~_t(psi), node where it is attained)
    """
    priced = price(tree, claim, measure)
    held = value_process(tree, strategy)
    gap = priced.discounted - held.discounted
    worst = int(np.argmax(gap))
    return float(gap[worst]), tree.node_ids[worst]
