"""
Measure Selection

Picks an EMM on an incomplete tree in two dual ways: by minimizing a convex
divergence E_P(V(dQ/dP)) over the EMM set, and by maximizing expected utility
of terminal wealth and reading the density U'(W*) / E_P(U'(W*)). Also prices
claims at the margin from the utility optimum.

Wealth is expressed in time-0 currency: W~ = x + S^0_0 * sum phi . dS~, and a
claim X enters as xi = S^0_0 X / S^0_T, so the dual density is exactly an EMM
and the marginal price agrees with arbitrage pricing at t = 0.
"""

import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional

import numpy as np
from scipy.optimize import minimize

from ..core.contingent_claims import Claim
from ..core.exceptions import ArbitrageMarketError, FTAPViolationError, SolverError
from ..core.measures import Measure
from ..core.portfolio_manager import Strategy, strategy_from_risky
from ..core.scenario_tree import ScenarioTree
from .arbitrage_engine import find_emm, is_martingale_measure
from .completeness import emm_polytope, gains_basis
from .preferences import DivergenceSpec, UtilitySpec

logger = logging.getLogger(__name__)

DUALITY_TOLERANCE = 1e-7
FOC_TOLERANCE = 1e-7
PRICE_TOLERANCE = 1e-6
FD_DISAGREEMENT = 1e-4
BOUNDARY_FLOOR = 1e-9


@dataclass
class MeasureSelection:
    """
    Divergence minimizer over the EMM set.

    Args:
        leaf_prob: Minimizing leaf probabilities (may touch zero for non-steep V)
        divergence: E_P(V(q/p)) at the minimizer
        on_boundary: True when some leaf probability is at the positivity floor
        dimension: Dimension of the EMM set searched
        gradient_norm: Projected gradient norm at the returned point
    """
    leaf_prob: np.ndarray
    divergence: float
    on_boundary: bool
    dimension: int
    gradient_norm: float = 0.0

    @property
    def measure(self) -> Optional[Measure]:
        """The minimizer as a Measure, or None when it sits on the boundary."""
        if self.on_boundary:
            return None
        return Measure.from_weights(self.leaf_prob)

    def to_dict(self, tree: ScenarioTree) -> Dict[str, Any]:
        return {
            "leaf_prob": dict(zip(tree.leaf_ids, map(float, self.leaf_prob))),
            "divergence": self.divergence,
            "on_boundary": self.on_boundary,
            "dimension": self.dimension,
        }


@dataclass
class OptimalWealth:
    """
    Utility-maximizing strategy and its terminal wealth.

    Args:
        strategy: Self-financing strategy with V_0 = x
        terminal_wealth: W* per leaf in currency at T
        discounted_wealth: W~* per leaf in time-0 currency
        value: v(x) = E_P(U(W~*))
        marginal: E_P(U'(W~*)), which equals v'(x)
        foc_residual: max_node |E_P(U'(W~*) dS~ | node)| / E_P(U'(W~*))
    """
    strategy: Strategy
    terminal_wealth: np.ndarray
    discounted_wealth: np.ndarray
    value: float
    marginal: float
    foc_residual: float
    initial_wealth: float


@dataclass
class IndifferenceResult:
    """Marginal utility indifference price and its cross-checks."""
    price: float
    duality_price: float
    v_prime: float
    v_prime_fd: float
    fd_disagreement: float
    flagged: bool
    density: Measure
    foc_residual: float

    def to_dict(self, tree: ScenarioTree) -> Dict[str, Any]:
        return {
            "price": self.price,
            "duality_price": self.duality_price,
            "v_prime": self.v_prime,
            "v_prime_fd": self.v_prime_fd,
            "fd_disagreement": self.fd_disagreement,
            "flagged": self.flagged,
            "foc_residual": self.foc_residual,
            "measure": self.density.to_mapping(tree),
        }


def _newton_polish(fun: Callable, grad: Callable, hess: Callable, z: np.ndarray,
                   max_iter: int = 50, gtol: float = 1e-13) -> np.ndarray:
    """Damped Newton steps from a near-optimal point; keeps z where fun is finite."""
    for _ in range(max_iter):
        g = grad(z)
        if np.linalg.norm(g, np.inf) <= gtol:
            break
        step = np.linalg.lstsq(hess(z), -g, rcond=None)[0]
        f0 = fun(z)
        t = 1.0
        while t > 1e-8:
            candidate = z + t * step
            if np.isfinite(fun(candidate)) and fun(candidate) <= f0 + 1e-4 * t * (g @ step):
                z = candidate
                break
            t *= 0.5
        else:
            break
    return z


def divergence_value(spec: DivergenceSpec, leaf_prob: np.ndarray, phys: np.ndarray) -> float:
    """E_P(V(q / p))."""
    return float(np.sum(phys * spec.value(np.asarray(leaf_prob) / phys)))


def minimal_divergence_measure(tree: ScenarioTree, spec: DivergenceSpec,
                               base: Optional[Measure] = None) -> MeasureSelection:
    """
    Minimize E_P(V(q/p)) over the EMM set.

    The set is parametrized as q = base + D theta with q >= 0. SLSQP finds the
    minimizer under the positivity constraints; interior solutions are then
    polished by Newton steps.

    Args:
        tree: No-arbitrage scenario tree
        spec: Divergence V
        base: EMM to build the parametrization around (found by LP when None)

    Returns:
        MeasureSelection

    Raises:
        ArbitrageMarketError: Tree has no EMM
        SolverError: SLSQP failed
    """
    if base is None:
        base = find_emm(tree)
        if base is None:
            raise ArbitrageMarketError("market admits arbitrage: no EMM to select from")
    polytope = emm_polytope(tree, base)
    phys = tree.phys_leaf_prob
    q0 = base.leaf_prob
    directions = polytope.directions

    if polytope.dimension == 0:
        return MeasureSelection(q0.copy(), divergence_value(spec, q0, phys), False, 0)

    def leaf(theta):
        return q0 + directions @ theta

    def objective(theta):
        q = np.maximum(leaf(theta), 0.0) if spec.positive_domain else leaf(theta)
        return divergence_value(spec, q, phys)

    def gradient(theta):
        q = np.maximum(leaf(theta), 1e-300) if spec.positive_domain else leaf(theta)
        return directions.T @ spec.derivative(q / phys)

    def hessian(theta):
        q = leaf(theta)
        weights = spec.hessian(q / phys) / phys
        return directions.T @ (directions * weights[:, None])

    constraints = [{"type": "ineq", "fun": leaf, "jac": lambda theta: directions}]
    result = minimize(objective, np.zeros(polytope.dimension), jac=gradient, method="SLSQP",
                      constraints=constraints, options={"ftol": 1e-15, "maxiter": 1000})
    if not np.all(np.isfinite(result.x)):
        raise SolverError(f"divergence minimization failed: {result.message}", status=result.status)
    if not result.success:
        logger.warning(f"SLSQP stopped early ({result.message}); polishing the last iterate")
    theta = result.x
    logger.debug(f"SLSQP: {result.message} after {result.nit} iterations")

    q = leaf(theta)
    on_boundary = bool(np.min(q) <= BOUNDARY_FLOOR)
    if not on_boundary:
        def guarded(t):
            return objective(t) if np.all(leaf(t) > 0) else np.inf
        theta = _newton_polish(guarded, gradient, hessian, theta)
        q = leaf(theta)
        grad_norm = float(np.linalg.norm(gradient(theta), np.inf))
    else:
        q = np.clip(q, 0.0, None)
        grad_norm = float("nan")
        logger.info(f"Divergence '{spec.name}' minimized on the boundary of the EMM set")

    q = q / q.sum()
    return MeasureSelection(q, divergence_value(spec, q, phys), on_boundary,
                            polytope.dimension, grad_norm)


def _reduced_gains(tree: ScenarioTree):
    """Gains matrix G (leaves x decision coordinates) and an orthonormal basis of its range."""
    gains = gains_basis(tree)[:, 1:]
    if gains.shape[1] == 0:
        return gains, np.zeros((tree.n_leaves, 0))
    u, s, _ = np.linalg.svd(gains, full_matrices=False)
    rank = int(np.sum(s > 1e-12 * max(1.0, s.max())))
    return gains, u[:, :rank]


def maximize_expected_utility(tree: ScenarioTree, utility: UtilitySpec,
                              x: float) -> OptimalWealth:
    """
    Maximize E_P(U(W~)) over self-financing strategies with V_0 = x.

    Decision variables are coordinates z in an orthonormal basis of the
    attainable gains, so incompleteness is built in. For utilities defined on
    positive wealth the objective is +inf outside the domain.

    Args:
        tree: No-arbitrage scenario tree
        utility: Utility U
        x: Initial wealth (time-0 currency)

    Returns:
        OptimalWealth

    Raises:
        ValueError: x outside the utility's domain
        SolverError: First-order conditions not met to tolerance
    """
    if not utility.in_domain(np.array([x])):
        raise ValueError(f"initial wealth {x} outside the domain of utility '{utility.name}'")
    phys = tree.phys_leaf_prob
    s0 = float(tree.numeraire[tree.root])
    gains, basis = _reduced_gains(tree)

    def wealth(z):
        return x + s0 * (basis @ z)

    def fun(z):
        w = wealth(z)
        if not utility.in_domain(w):
            return np.inf
        return -float(phys @ utility.value(w))

    def grad(z):
        return -s0 * basis.T @ (phys * utility.marginal(wealth(z)))

    def hess(z):
        weights = phys * utility.second(wealth(z))
        return -(s0 ** 2) * basis.T @ (basis * weights[:, None])

    z = np.zeros(basis.shape[1])
    if basis.shape[1] > 0:
        result = minimize(fun, z, jac=grad, hess=hess, method="trust-exact",
                          options={"gtol": 1e-12, "maxiter": 500})
        logger.debug(f"trust-exact: {result.message} after {result.nit} iterations")
        z = _newton_polish(fun, grad, hess, result.x)

    w = wealth(z)
    marginal_w = utility.marginal(w)
    marginal = float(phys @ marginal_w)
    foc = gains.T @ (phys * marginal_w) if gains.shape[1] else np.zeros(0)
    foc_residual = float(np.max(np.abs(foc)) / marginal) if foc.size else 0.0
    if not np.isfinite(foc_residual) or foc_residual > FOC_TOLERANCE:
        raise SolverError("utility maximization did not reach its first-order conditions",
                          gradient_norm=foc_residual)

    mu = np.linalg.lstsq(gains, basis @ z, rcond=None)[0] if gains.shape[1] else np.zeros(0)
    risky = np.zeros((tree.n_nodes, tree.num_risky))
    if mu.size:
        risky[tree.internal_nodes] = mu.reshape(len(tree.internal_nodes), tree.num_risky)
    strategy = strategy_from_risky(tree, risky, x)

    terminal = w * tree.leaf_numeraire / s0
    value = float(phys @ utility.value(w))
    return OptimalWealth(strategy, terminal, w, value, marginal, foc_residual, x)


def duality_density(tree: ScenarioTree, utility: UtilitySpec, x: float,
                    optimum: Optional[OptimalWealth] = None) -> Measure:
    """
    Measure with dQ/dP = U'(W~*) / E_P(U'(W~*)).

    Raises:
        FTAPViolationError: The density is not a strictly positive EMM
    """
    optimum = optimum or maximize_expected_utility(tree, utility, x)
    marginal = utility.marginal(optimum.discounted_wealth)
    if np.any(marginal <= 0):
        raise FTAPViolationError(
            f"utility '{utility.name}' has non-positive marginal at the optimum")
    density = marginal / optimum.marginal
    measure = Measure.from_weights(tree.phys_leaf_prob * density)
    check = is_martingale_measure(tree, measure, DUALITY_TOLERANCE)
    if not check:
        raise FTAPViolationError(
            f"duality density is not a martingale measure (residual {check.worst_residual:.3e} "
            f"at node {check.worst_node})")
    return measure


def marginal_indifference_price(tree: ScenarioTree, utility: UtilitySpec, x: float,
                                claim: Claim) -> IndifferenceResult:
    """
    p = E_P(U'(W~*) xi) / v'(x), with xi = S^0_0 X / S^0_T.

    v'(x) is taken as E_P(U'(W~*)) and cross-checked by a central difference
    of v with step 1e-4 x. The price is asserted equal to E_Q(xi) under the
    duality density.

    Raises:
        SolverError: v'(x) <= 0
        FTAPViolationError: Marginal price and dual-measure price disagree
    """
    optimum = maximize_expected_utility(tree, utility, x)
    v_prime = optimum.marginal
    if not v_prime > 0:
        raise SolverError(f"v'(x) = {v_prime} is not positive")

    step = 1e-4 * abs(x) if x != 0 else 1e-4
    upper = maximize_expected_utility(tree, utility, x + step).value
    lower = maximize_expected_utility(tree, utility, x - step).value
    v_prime_fd = (upper - lower) / (2 * step)
    disagreement = abs(v_prime_fd - v_prime) / abs(v_prime)
    flagged = disagreement > FD_DISAGREEMENT
    if flagged:
        logger.warning(f"v'(x) cross-check disagrees by {disagreement:.2e} (relative)")

    s0 = float(tree.numeraire[tree.root])
    xi = s0 * claim.discounted(tree)
    phys = tree.phys_leaf_prob
    marginal_w = utility.marginal(optimum.discounted_wealth)
    marginal_price = float(phys @ (marginal_w * xi)) / v_prime

    density = duality_density(tree, utility, x, optimum)
    dual_price = density.expectation(xi)
    if abs(marginal_price - dual_price) > PRICE_TOLERANCE * max(1.0, abs(dual_price)):
        raise FTAPViolationError(
            f"marginal price {marginal_price:.10g} differs from dual price {dual_price:.10g}")
    return IndifferenceResult(marginal_price, dual_price, v_prime, v_prime_fd,
                              disagreement, flagged, density, optimum.foc_residual)
