"""
Arbitrage Engine

Finds an equivalent martingale measure or an explicit arbitrage on a scenario
tree; on every valid tree exactly one of the two exists.

The martingale system is block-diagonal by node, so both questions are
settled one period at a time. At each node a max-min LP over the children
asks for a conditional distribution with smallest entry s* under which the
discounted prices do not drift; a strictly positive EMM exists iff s* > 0 at
every node. Where it fails a separating functional is found by the dual
one-period LP and turned into a trading rule active only at that node. The
measure reported is the one maximizing the smallest leaf probability.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from ..core.exceptions import FTAPViolationError, SolverError
from ..core.measures import Measure
from ..core.portfolio_manager import Strategy, strategy_from_risky, value_process
from ..core.risk_manager import is_admissible, is_arbitrage, promote_to_admissible
from ..core.scenario_tree import ScenarioTree

logger = logging.getLogger(__name__)

MARTINGALE_TOLERANCE = 1e-9
POSITIVITY_FLOOR = 1e-9
INCREMENT_TOLERANCE = 1e-12

HIGHS_OPTIONS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}


@dataclass
class MartingaleCheck:
    """Worst conditional-mean residual of S~ under a measure; truthy when within tolerance."""
    ok: bool
    worst_residual: float
    worst_node: Optional[str] = None
    worst_asset: Optional[str] = None

    def __bool__(self) -> bool:
        return self.ok


@dataclass
class ArbitrageCertificate:
    """
    Outcome of the FFTAP dichotomy: an EMM or an admissible arbitrage, never both.

    Args:
        emm: Verified equivalent martingale measure
        arbitrage: Verified admissible arbitrage
        max_residual: Martingale residual of the EMM
        min_leaf_prob: Smallest leaf probability of the EMM
        arbitrage_node: Node where the arbitrage trades
    """
    emm: Optional[Measure] = None
    arbitrage: Optional[Strategy] = None
    max_residual: Optional[float] = None
    min_leaf_prob: Optional[float] = None
    arbitrage_node: Optional[str] = None

    def __post_init__(self):
        if (self.emm is None) == (self.arbitrage is None):
            raise FTAPViolationError(
                "certificate must hold exactly one of an EMM or an arbitrage")

    @property
    def kind(self) -> str:
        return "emm" if self.emm is not None else "arbitrage"

    def to_dict(self, tree: ScenarioTree) -> Dict[str, Any]:
        if self.emm is not None:
            return {
                "kind": "emm",
                "leaf_prob": self.emm.to_mapping(tree),
                "max_residual": self.max_residual,
                "min_leaf_prob": self.min_leaf_prob,
            }
        values = value_process(tree, self.arbitrage)
        return {
            "kind": "arbitrage",
            "node": self.arbitrage_node,
            "strategy": self.arbitrage.to_records(tree),
            "terminal_values": dict(zip(tree.leaf_ids, map(float, values.terminal(tree)))),
        }


def martingale_residuals(tree: ScenarioTree, measure: Measure) -> np.ndarray:
    """E(S~(child) | node) - S~(node) per node and risky asset; zero rows at leaves."""
    measure.check_tree(tree)
    cond = measure.conditional_prob(tree)
    disc = tree.discounted_prices
    residuals = np.zeros((tree.n_nodes, tree.num_risky))
    for node in tree.internal_nodes:
        kids = list(tree.children[node])
        residuals[node] = cond[kids] @ disc[kids, 1:] - disc[node, 1:]
    return residuals


def is_martingale_measure(tree: ScenarioTree, measure: Measure,
                          tol: float = MARTINGALE_TOLERANCE) -> MartingaleCheck:
    """
    Check that every discounted risky price is a martingale under `measure`.

    Args:
        tree: Scenario tree
        measure: Strictly positive leaf measure
        tol: Absolute tolerance on the conditional-mean residual

    Returns:
        MartingaleCheck with the worst node and asset
    """
    residuals = np.abs(martingale_residuals(tree, measure))
    if residuals.size == 0:
        return MartingaleCheck(True, 0.0)
    node, asset = np.unravel_index(int(np.argmax(residuals)), residuals.shape)
    worst = float(residuals[node, asset])
    return MartingaleCheck(worst <= tol, worst, tree.node_ids[node], tree.asset_names[asset + 1])


def martingale_system(tree: ScenarioTree) -> Tuple[sparse.csr_matrix, np.ndarray]:
    """
    Leaf-form linear constraints A q = b defining the martingale measures.

    One row per (internal node, risky asset):
        sum over leaves l below n of q_l (S~(child of n on l) - S~(n)) = 0
    followed by the normalization row sum(q) = 1.
    """
    paths = tree.path_matrix
    disc = tree.discounted_prices
    d = tree.num_risky
    rows, cols, vals = [], [], []
    for r, node in enumerate(tree.internal_nodes):
        depth = tree.depth[node]
        members = tree.leaf_members(node)
        step = disc[paths[members, depth + 1], 1:] - disc[node, 1:]
        for i in range(d):
            rows.extend([r * d + i] * len(members))
            cols.extend(members.tolist())
            vals.extend(step[:, i].tolist())
    n_rows = len(tree.internal_nodes) * d
    rows.extend([n_rows] * tree.n_leaves)
    cols.extend(range(tree.n_leaves))
    vals.extend([1.0] * tree.n_leaves)
    matrix = sparse.csr_matrix((vals, (rows, cols)), shape=(n_rows + 1, tree.n_leaves))
    rhs = np.zeros(n_rows + 1)
    rhs[-1] = 1.0
    return matrix, rhs


def _scaled_increments(tree: ScenarioTree, node: int) -> Tuple[np.ndarray, float]:
    """Increments divided by the node's price level, round-off moves set to zero."""
    increments = tree.increments(node)
    kids = list(tree.children[node])
    disc = tree.discounted_prices
    scale = float(max(np.abs(disc[kids, 1:]).max(), np.abs(disc[node, 1:]).max()))
    if scale == 0.0:
        return np.zeros_like(increments), 1.0
    steps = increments / scale
    steps[np.abs(steps) <= INCREMENT_TOLERANCE] = 0.0
    return steps, scale


def polish_conditional(tree: ScenarioTree, cond: np.ndarray) -> np.ndarray:
    """
    Project each node's conditional distribution onto its martingale equalities.

    Minimum-norm correction per node of [1; dS~^T] p = [1; 0], on increments
    scaled by the node price level. Removes LP round-off so the residual is at
    machine precision.
    """
    cond = np.array(cond, dtype=float)
    for node in tree.internal_nodes:
        kids = list(tree.children[node])
        system = np.vstack([np.ones(len(kids)), _scaled_increments(tree, node)[0].T])
        target = np.zeros(system.shape[0])
        target[0] = 1.0
        correction = np.linalg.lstsq(system, system @ cond[kids] - target, rcond=None)[0]
        cond[kids] = cond[kids] - correction
    return cond


def node_max_min(tree: ScenarioTree, node: int) -> Tuple[Optional[np.ndarray], float]:
    """
    One-period martingale distribution at `node` maximizing its smallest entry.

    The optimum s* is a conditional probability, so it does not depend on the
    price level or on how deep the node sits in the tree.

    Returns:
        (p, s*) over the node's children; p is None when no martingale
        distribution exists
    """
    steps, _ = _scaled_increments(tree, node)
    n_children, d = steps.shape
    if not steps.any():
        return np.full(n_children, 1.0 / n_children), 1.0 / n_children
    # variables: p_1..p_n, s
    cost = np.zeros(n_children + 1)
    cost[-1] = -1.0
    a_eq = np.zeros((d + 1, n_children + 1))
    a_eq[0, :n_children] = 1.0
    a_eq[1:, :n_children] = steps.T
    b_eq = np.zeros(d + 1)
    b_eq[0] = 1.0
    a_ub = np.hstack([-np.eye(n_children), np.ones((n_children, 1))])
    bounds = [(0.0, 1.0)] * n_children + [(None, 1.0)]
    result = linprog(cost, A_ub=a_ub, b_ub=np.zeros(n_children), A_eq=a_eq, b_eq=b_eq,
                     bounds=bounds, method="highs", options=HIGHS_OPTIONS)
    if result.status == 2:
        return None, 0.0
    if result.status != 0:
        raise SolverError(f"node LP failed at {tree.node_ids[node]}: {result.message}",
                          status=result.status)
    return result.x[:n_children], float(result.x[-1])


def _max_min_lp(tree: ScenarioTree) -> Tuple[Optional[np.ndarray], float]:
    matrix, rhs = martingale_system(tree)
    n_leaves = tree.n_leaves
    # variables: q_1..q_L, s
    cost = np.zeros(n_leaves + 1)
    cost[-1] = -1.0
    a_eq = sparse.hstack([matrix, sparse.csr_matrix((matrix.shape[0], 1))]).tocsr()
    a_ub = sparse.hstack([-sparse.identity(n_leaves, format="csr"),
                         sparse.csr_matrix(np.ones((n_leaves, 1)))]).tocsr()
    b_ub = np.zeros(n_leaves)
    bounds = [(0.0, 1.0)] * n_leaves + [(None, 1.0)]

    result = linprog(cost, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=rhs, bounds=bounds,
                     method="highs", options=HIGHS_OPTIONS)
    logger.debug(f"max-min LP: status={result.status} message={result.message}")
    if result.status == 2:
        return None, 0.0
    if result.status != 0:
        raise SolverError(f"EMM linear program failed: {result.message}", status=result.status)
    return result.x[:n_leaves], float(result.x[-1])


def _verified(tree: ScenarioTree, cond: np.ndarray) -> Optional[Measure]:
    polished = polish_conditional(tree, cond)
    if np.any(polished[tree.parent >= 0] <= 0.0):
        return None
    measure = Measure.from_conditional(tree, polished)
    return measure if is_martingale_measure(tree, measure) else None


def find_emm(tree: ScenarioTree, floor: float = POSITIVITY_FLOOR) -> Optional[Measure]:
    """
    Strictly positive martingale measure maximizing the smallest leaf probability.

    Existence is settled node by node: every internal node needs a one-period
    martingale distribution whose smallest conditional probability exceeds
    `floor`. The global max-min LP then picks the measure; when its leaf
    probabilities are too small to carry the conditionals, the product of the
    nodewise distributions is used instead.

    Args:
        tree: Valid scenario tree
        floor: Nodewise s* at or below this counts as no strictly positive EMM

    Returns:
        Measure passing is_martingale_measure, or None when none exists

    Raises:
        SolverError: LP failure other than infeasibility
    """
    nodewise = np.ones(tree.n_nodes)
    for node in tree.internal_nodes:
        p, s_star = node_max_min(tree, node)
        if p is None or s_star <= floor:
            logger.debug(f"No strictly positive EMM (s* = {s_star:.3e} at {tree.node_ids[node]})")
            return None
        nodewise[list(tree.children[node])] = p

    leaf_prob, s_star = _max_min_lp(tree)
    measure = None
    if leaf_prob is not None and s_star > floor:
        measure = _verified(tree, Measure.from_weights(np.clip(leaf_prob, s_star, None))
                            .conditional_prob(tree))
    if measure is None:
        logger.debug(f"Global max-min optimum {s_star:.3e} too small; using nodewise measure")
        measure = _verified(tree, nodewise)
    if measure is None:
        raise SolverError("nodewise martingale distributions do not give a martingale measure")
    return measure


def local_arbitrage(tree: ScenarioTree, node: int) -> Optional[np.ndarray]:
    """
    One-period separating functional at a node.

    Solves max sum_c alpha . dS~(c) subject to 0 <= alpha . dS~(c) <= 1 for
    every child c, on increments scaled by the node's price level. A positive
    optimum is an arbitrage over that period.

    Args:
        tree: Scenario tree
        node: Internal node index

    Returns:
        Risky allocation alpha scaled so its best child gains 1, or None
    """
    steps, scale = _scaled_increments(tree, node)
    if not steps.any():
        return None
    n_children, d = steps.shape
    cost = -steps.sum(axis=0)
    a_ub = np.vstack([steps, -steps])
    b_ub = np.concatenate([np.ones(n_children), np.zeros(n_children)])
    result = linprog(cost, A_ub=a_ub, b_ub=b_ub, bounds=[(None, None)] * d,
                     method="highs", options=HIGHS_OPTIONS)
    if result.status != 0:
        raise SolverError(f"local arbitrage LP failed at node {tree.node_ids[node]}: "
                          f"{result.message}", status=result.status)
    if -result.fun <= POSITIVITY_FLOOR:
        return None
    # drop components the increments cannot see
    gains = steps @ result.x
    alpha = np.linalg.lstsq(steps, gains, rcond=None)[0]
    return alpha / (gains.max() * scale)


def _search_arbitrage(tree: ScenarioTree) -> Tuple[Optional[Strategy], Optional[str]]:
    for node in tree.internal_nodes:
        alpha = local_arbitrage(tree, node)
        if alpha is None:
            continue
        risky = np.zeros((tree.n_nodes, tree.num_risky))
        risky[node] = alpha
        rule = strategy_from_risky(tree, risky, initial_value=0.0)
        strategy = promote_to_admissible(tree, rule)
        if not (is_arbitrage(tree, strategy) and is_admissible(tree, strategy)):
            raise FTAPViolationError(
                f"separating functional at {tree.node_ids[node]} does not give an arbitrage")
        return strategy, tree.node_ids[node]
    return None, None


def find_arbitrage(tree: ScenarioTree) -> Optional[Strategy]:
    """
    Admissible arbitrage when the tree has no EMM, else None.

    Raises:
        FTAPViolationError: No EMM and no arbitrage found
    """
    if find_emm(tree) is not None:
        return None
    strategy, _ = _search_arbitrage(tree)
    if strategy is None:
        raise FTAPViolationError("no equivalent martingale measure and no arbitrage found")
    return strategy


def fftap_verdict(tree: ScenarioTree) -> ArbitrageCertificate:
    """
    Run both searches independently and return the single certificate.

    Raises:
        FTAPViolationError: Both or neither search succeeded
    """
    emm = find_emm(tree)
    arbitrage, node = _search_arbitrage(tree)
    if emm is not None and arbitrage is not None:
        raise FTAPViolationError(
            f"tree has both an EMM and an arbitrage at node {node}")
    if emm is None and arbitrage is None:
        raise FTAPViolationError("tree has neither an EMM nor an arbitrage")

    if emm is not None:
        check = is_martingale_measure(tree, emm)
        logger.info(f"FFTAP: EMM found (residual {check.worst_residual:.2e})")
        return ArbitrageCertificate(emm=emm, max_residual=check.worst_residual,
                                    min_leaf_prob=float(emm.leaf_prob.min()))
    logger.info(f"FFTAP: arbitrage at node {node}")
    return ArbitrageCertificate(arbitrage=arbitrage, arbitrage_node=node)
