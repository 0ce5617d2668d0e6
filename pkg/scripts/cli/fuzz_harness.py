"""
Fuzz Harness

Property suites over randomly generated scenario trees:
- dichotomy: exactly one verified certificate per tree, unchanged by a
  predictable rescaling of all prices
- sufficiency: under the EMM, random self-financing strategies started at 0
  have zero expected discounted terminal value and are never arbitrages
- sftap: unique EMM iff random claims all replicate iff no second measure
- second_measure: P** is a strictly positive EMM distinct from the base
- branching: complete trees never branch more than d+1 ways
- promotion: dip-then-recover arbitrages promote to admissible arbitrages
- selection (optional): divergence minimizers against grid-search and
  weighted-projection oracles, and utility duality, on incomplete trees

Task k draws from SeedSequence(seed, spawn_key=(suite, k)), so any failure
is reproduced from (seed, task) alone, and results are reported in task order
whatever the number of workers.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from engine.core.contingent_claims import Claim
from engine.core.exceptions import FtapError
from engine.core.measures import Measure
from engine.core.portfolio_manager import strategy_from_risky, value_process
from engine.core.risk_manager import (
    is_admissible,
    is_arbitrage,
    promote_to_admissible_detailed,
)
from engine.core.scenario_tree import ScenarioTree
from engine.data.tree_factory import dip_arbitrage_instance, random_tree
from engine.optimization.arbitrage_engine import (
    fftap_verdict,
    find_emm,
    is_martingale_measure,
    martingale_system,
)
from engine.optimization.completeness import (
    EmmPolytope,
    completeness_report,
    emm_polytope,
    extreme_measures,
    price_interval,
    replicate,
    second_measure,
)
from engine.optimization.measure_selection import (
    divergence_value,
    duality_density,
    marginal_indifference_price,
    maximize_expected_utility,
    minimal_divergence_measure,
)
from engine.optimization.preferences import DivergenceSpec, UtilitySpec
from engine.utils.progress_tracker import ProgressTracker
from engine.utils.validators import TreeValidator

logger = logging.getLogger(__name__)

SUITES = ("dichotomy", "sufficiency", "sftap", "second_measure", "branching", "promotion", "selection")
TREE_STREAM, PROMOTION_STREAM, SELECTION_STREAM = 0, 1, 2
SELECTION_DRAWS = 200
GRID_POINTS = 401
GRID_ROUNDS = 12

SUFFICIENCY_TOLERANCE = 1e-9
REPLICATION_TOLERANCE = 1e-9
DISTINCTNESS = 1e-8
IDENTITY_TOLERANCE = 1e-10
SELECTION_TOLERANCE = 1e-6
DUALITY_TOLERANCE = 1e-7


@dataclass
class FuzzSettings:
    """Harness parameters, taken from the `fuzz` configuration section."""
    seed: int
    count: int = 1000
    max_horizon: int = 3
    max_assets: int = 2
    max_children: int = 3
    price_grid: Sequence[float] = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 8.0)
    strategies_per_tree: int = 100
    claims_per_tree: int = 20
    viable_share: float = 0.5
    promotion_instances: int = 50
    selection_trees: int = 50
    selection: bool = False
    n_jobs: int = 1

    @classmethod
    def from_config(cls, section: Mapping[str, Any], seed: int, **overrides) -> "FuzzSettings":
        values = {k: v for k, v in section.items() if k in cls.__dataclass_fields__}
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(seed=seed, **values)


@dataclass
class TaskOutcome:
    """Per-task results: suite -> passed flag (absent when the suite does not apply)."""
    task: int
    results: Dict[str, bool] = field(default_factory=dict)
    failures: List[Dict[str, Any]] = field(default_factory=list)
    kind: Optional[str] = None
    complete: Optional[bool] = None

    def record(self, suite: str, ok: bool, message: str = "") -> None:
        self.results[suite] = self.results.get(suite, True) and ok
        if not ok:
            self.failures.append({"suite": suite, "task": self.task, "message": message})


@dataclass
class FuzzSummary:
    """Pass/fail counts per suite and the failing (suite, task) pairs."""
    seed: int
    count: int
    suites: Dict[str, Dict[str, int]]
    failures: List[Dict[str, Any]]
    emm_trees: int
    arbitrage_trees: int
    complete_trees: int

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_dict(self) -> Dict[str, Any]:
        return {
            "seed": self.seed,
            "count": self.count,
            "suites": self.suites,
            "failures": self.failures,
            "emm_trees": self.emm_trees,
            "arbitrage_trees": self.arbitrage_trees,
            "complete_trees": self.complete_trees,
        }


def task_rng(seed: int, stream: int, task: int) -> np.random.Generator:
    """Generator of one task; streams 0, 1 and 2 draw trees, promotion instances and selection trees."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, task)))


def rescale_predictably(tree: ScenarioTree, rng: np.random.Generator) -> ScenarioTree:
    """Multiply all prices at each node by a positive factor shared by siblings."""
    factors = np.ones(tree.n_nodes)
    for node in tree.internal_nodes:
        factors[list(tree.children[node])] = float(rng.uniform(0.5, 2.0))
    cumulative = factors.copy()
    for node in np.argsort(tree.depth, kind="stable"):
        if tree.parent[node] >= 0:
            cumulative[node] *= cumulative[tree.parent[node]]
    return tree.with_prices(tree.prices * cumulative[:, None])


def _dichotomy(tree: ScenarioTree, rng: np.random.Generator, outcome: TaskOutcome):
    try:
        certificate = fftap_verdict(tree)
    except FtapError as exc:
        outcome.record("dichotomy", False, str(exc))
        return None
    outcome.kind = certificate.kind
    if certificate.emm is not None:
        check = is_martingale_measure(tree, certificate.emm)
        outcome.record("dichotomy", bool(check), f"EMM residual {check.worst_residual:.3e}")
    else:
        strategy = certificate.arbitrage
        verified = is_arbitrage(tree, strategy) and is_admissible(tree, strategy)
        outcome.record("dichotomy", verified, "arbitrage certificate fails verification")

    try:
        rescaled = fftap_verdict(rescale_predictably(tree, rng))
        outcome.record("dichotomy", rescaled.kind == certificate.kind,
                       f"verdict changed under numeraire rescaling ({certificate.kind} -> {rescaled.kind})")
    except FtapError as exc:
        outcome.record("dichotomy", False, f"rescaled tree: {exc}")
    return certificate


def _sufficiency(tree: ScenarioTree, emm: Measure, settings: FuzzSettings,
                 rng: np.random.Generator, outcome: TaskOutcome) -> None:
    for _ in range(settings.strategies_per_tree):
        risky = np.zeros((tree.n_nodes, tree.num_risky))
        risky[tree.internal_nodes] = rng.normal(size=(len(tree.internal_nodes), tree.num_risky))
        strategy = strategy_from_risky(tree, risky, initial_value=0.0)
        expected = emm.expectation(value_process(tree, strategy).terminal_discounted(tree))
        if abs(expected) > SUFFICIENCY_TOLERANCE or is_arbitrage(tree, strategy):
            outcome.record("sufficiency", False,
                           f"E*(V~_T) = {expected:.3e} for a zero-cost strategy")
            return
    outcome.record("sufficiency", True)


def _sftap(tree: ScenarioTree, emm: Measure, settings: FuzzSettings,
           rng: np.random.Generator, outcome: TaskOutcome) -> None:
    try:
        report = completeness_report(tree, emm)
    except FtapError as exc:
        outcome.record("branching", False, str(exc))
        return
    outcome.complete = report.complete
    if report.complete:
        outcome.record("branching", report.max_children <= tree.num_risky + 1,
                       f"complete tree with {report.max_children} children per node")

    all_replicate = True
    for _ in range(settings.claims_per_tree):
        claim = Claim(rng.uniform(0.0, 10.0, size=tree.n_leaves))
        if replicate(tree, claim).residual > REPLICATION_TOLERANCE:
            all_replicate = False
            break
    other = second_measure(tree, emm)
    consistent = report.complete == all_replicate == (other is None) if settings.claims_per_tree \
        else report.complete == (other is None)
    outcome.record("sftap", consistent,
                   f"complete={report.complete}, claims replicate={all_replicate}, "
                   f"second measure={'none' if other is None else 'found'}")

    if other is not None:
        for sign in (1, -1):
            candidate = other if sign == 1 else second_measure(tree, emm, sign=-1)
            check = is_martingale_measure(tree, candidate)
            ok = (bool(np.all(candidate.leaf_prob > 0)) and bool(check)
                  and candidate.total_variation(emm) >= DISTINCTNESS)
            outcome.record("second_measure", ok,
                           f"P** (sign {sign}) residual {check.worst_residual:.3e}, "
                           f"distance {candidate.total_variation(emm):.3e}")


def projection_minimizer(tree: ScenarioTree) -> np.ndarray:
    """
    Quadratic-divergence minimizer over the martingale equalities, positivity dropped.

    Minimizing sum q^2 / (2p) subject to A q = b gives q = P A^T (A P A^T)^+ b.
    It is the constrained minimizer whenever all of its entries are positive.
    """
    matrix, rhs = martingale_system(tree)
    weighted = matrix.toarray() * tree.phys_leaf_prob
    return weighted.T @ (np.linalg.pinv(weighted @ matrix.toarray().T) @ rhs)


def grid_minimizer(spec: DivergenceSpec, polytope: EmmPolytope, phys: np.ndarray,
                   points: int = GRID_POINTS, rounds: int = GRID_ROUNDS) -> np.ndarray:
    """Divergence minimizer on a one-dimensional EMM set by successively refined grids."""
    if polytope.dimension != 1:
        raise ValueError(f"grid search needs a one-dimensional EMM set; got {polytope.dimension}")
    direction = polytope.directions[:, 0]
    base = polytope.base.leaf_prob
    with np.errstate(divide="ignore"):
        crossings = -base / direction
    low, high = crossings[direction > 0].max(), crossings[direction < 0].min()

    def objective(theta):
        return divergence_value(spec, np.clip(base + direction * theta, 0.0, None), phys)

    best = 0.0
    for _ in range(rounds):
        grid = np.linspace(low, high, points)
        values = [objective(t) for t in grid]
        k = int(np.argmin(values))
        best = float(grid[k])
        low, high = grid[max(k - 2, 0)], grid[min(k + 2, points - 1)]
    q = np.clip(base + direction * best, 0.0, None)
    return q / q.sum()


def _selection(tree: ScenarioTree, emm: Measure, rng: np.random.Generator,
               outcome: TaskOutcome) -> None:
    phys = tree.phys_leaf_prob
    polytope = emm_polytope(tree, emm)
    vertices = extreme_measures(tree, [rng.normal(size=tree.n_leaves) for _ in range(8)])
    samples = []
    for _ in range(100):
        theta = rng.normal(scale=0.1, size=polytope.dimension)
        point = polytope.point(theta)
        if np.all(point > 0):
            samples.append(point)
    chosen_by = {}
    for spec in (DivergenceSpec.entropy(), DivergenceSpec.quadratic()):
        chosen = chosen_by[spec.name] = minimal_divergence_measure(tree, spec, emm)
        worst_gap = max((chosen.divergence - divergence_value(spec, q, phys)
                         for q in vertices + samples), default=0.0)
        outcome.record("selection", worst_gap <= SELECTION_TOLERANCE,
                       f"{spec.name} minimizer exceeds a feasible point by {worst_gap:.3e}")
        if polytope.dimension == 1:
            gap = float(np.max(np.abs(grid_minimizer(spec, polytope, phys) - chosen.leaf_prob)))
            outcome.record("selection", gap <= SELECTION_TOLERANCE,
                           f"{spec.name} minimizer is {gap:.3e} from the grid search")

    projected = projection_minimizer(tree)
    quadratic = chosen_by["quadratic"]
    if np.all(projected > 0.0):
        gap = float(np.max(np.abs(projected - quadratic.leaf_prob)))
        outcome.record("selection", gap <= SELECTION_TOLERANCE,
                       f"quadratic minimizer is {gap:.3e} from the weighted projection")
    else:
        outcome.record("selection", quadratic.on_boundary,
                       "weighted projection leaves the simplex but the quadratic minimizer is interior")
    selected = chosen_by["entropy"]

    utility = UtilitySpec.exponential(1.0)
    optimum = maximize_expected_utility(tree, utility, 0.0)
    density = duality_density(tree, utility, 0.0, optimum)
    gap = float(np.max(np.abs(density.leaf_prob - selected.leaf_prob)))
    outcome.record("selection", gap <= SELECTION_TOLERANCE,
                   f"exponential duality density differs from the entropy minimizer by {gap:.3e}")

    s0 = float(tree.numeraire[tree.root])
    for _ in range(5):
        claim = Claim(rng.uniform(0.0, 10.0, size=tree.n_leaves))
        result = marginal_indifference_price(tree, utility, 0.0, claim)
        entropy_price = float(selected.leaf_prob @ (s0 * claim.discounted(tree)))
        interval = price_interval(tree, claim)
        inside = interval.low - SELECTION_TOLERANCE <= result.price <= interval.high + SELECTION_TOLERANCE
        outcome.record("selection", abs(result.price - entropy_price) <= SELECTION_TOLERANCE and inside,
                       f"indifference price {result.price:.10g} vs entropy price "
                       f"{entropy_price:.10g}, interval [{interval.low:.10g}, {interval.high:.10g}]")


def run_tree_task(settings: FuzzSettings, task: int) -> TaskOutcome:
    """All tree-based suites for one generated tree."""
    rng = task_rng(settings.seed, TREE_STREAM, task)
    outcome = TaskOutcome(task)
    tree = random_tree(rng, settings.max_horizon, settings.max_assets, settings.max_children,
                       settings.price_grid, settings.viable_share)
    diagnostics = TreeValidator().validate_tree(tree)
    if diagnostics:
        outcome.record("dichotomy", False, f"generator produced an invalid tree: {diagnostics[0]}")
        return outcome

    try:
        certificate = _dichotomy(tree, rng, outcome)
        if certificate is None or certificate.emm is None:
            return outcome
        _sufficiency(tree, certificate.emm, settings, rng, outcome)
        _sftap(tree, certificate.emm, settings, rng, outcome)
    except (FtapError, ValueError) as exc:
        outcome.record("dichotomy", False, f"{type(exc).__name__}: {exc}")
    return outcome


def run_selection_task(settings: FuzzSettings, task: int) -> TaskOutcome:
    """Draw martingale-first trees until one is incomplete, then run the selection checks."""
    rng = task_rng(settings.seed, SELECTION_STREAM, task)
    outcome = TaskOutcome(task)
    for _ in range(SELECTION_DRAWS):
        tree = random_tree(rng, min(settings.max_horizon, 2), settings.max_assets,
                           settings.max_children, settings.price_grid, viable_share=1.0)
        emm = find_emm(tree)
        if emm is not None and not completeness_report(tree, emm).complete:
            break
    else:
        outcome.record("selection", False,
                       f"no incomplete arbitrage-free tree in {SELECTION_DRAWS} draws")
        return outcome
    try:
        _selection(tree, emm, rng, outcome)
    except (FtapError, ValueError) as exc:
        outcome.record("selection", False, f"{type(exc).__name__}: {exc}")
    return outcome


def run_promotion_task(settings: FuzzSettings, task: int) -> TaskOutcome:
    """Promote one dip-then-recover arbitrage and check the result and the value identity."""
    rng = task_rng(settings.seed, PROMOTION_STREAM, task)
    outcome = TaskOutcome(task)
    tree, strategy = dip_arbitrage_instance(rng)
    try:
        result = promote_to_admissible_detailed(tree, strategy)
        ok = (is_admissible(tree, result.strategy) and is_arbitrage(tree, result.strategy)
              and result.identity_residual <= IDENTITY_TOLERANCE)
        outcome.record("promotion", ok, f"identity residual {result.identity_residual:.3e}")
        outcome.record("promotion", fftap_verdict(tree).kind == "arbitrage",
                       "dichotomy misses a market with a known arbitrage")
    except (FtapError, ValueError) as exc:
        outcome.record("promotion", False, f"{type(exc).__name__}: {exc}")
    return outcome


class FuzzHarness:
    """
    Runs the property suites and aggregates them deterministically.

    Usage:
        summary = FuzzHarness(FuzzSettings(seed=7, count=100)).run()
    """

    def __init__(self, settings: FuzzSettings):
        self.settings = settings
        self.logger = logging.getLogger(__name__)
        self.progress = ProgressTracker()

    def run(self) -> FuzzSummary:
        settings = self.settings
        self.progress.start_operation(f"fuzz seed={settings.seed} count={settings.count}",
                                      3 if settings.selection else 2)

        self.progress.start_phase("tree suites")
        tree_outcomes = Parallel(n_jobs=settings.n_jobs)(
            delayed(run_tree_task)(settings, k) for k in range(settings.count))
        self.progress.complete_phase()

        self.progress.start_phase("promotion suite")
        promotion_count = settings.promotion_instances if settings.count else 0
        promotion_outcomes = Parallel(n_jobs=settings.n_jobs)(
            delayed(run_promotion_task)(settings, k) for k in range(promotion_count))
        self.progress.complete_phase()

        selection_outcomes: List[TaskOutcome] = []
        if settings.selection:
            self.progress.start_phase("selection suite")
            selection_outcomes = Parallel(n_jobs=settings.n_jobs)(
                delayed(run_selection_task)(settings, k) for k in range(settings.selection_trees))
            self.progress.complete_phase()

        summary = self._aggregate(tree_outcomes, promotion_outcomes, selection_outcomes)
        for failure in summary.failures:
            self.progress.report_failure(f"[{failure['suite']}] task {failure['task']}: "
                                         f"{failure['message']}")
        self.progress.complete_operation()
        return summary

    def _aggregate(self, tree_outcomes: List[TaskOutcome],
                   promotion_outcomes: List[TaskOutcome],
                   selection_outcomes: List[TaskOutcome]) -> FuzzSummary:
        suites = {name: {"passed": 0, "failed": 0} for name in SUITES}
        failures: List[Dict[str, Any]] = []
        for outcome in list(tree_outcomes) + list(promotion_outcomes) + list(selection_outcomes):
            for suite, ok in outcome.results.items():
                suites[suite]["passed" if ok else "failed"] += 1
            failures.extend(outcome.failures)
        if not self.settings.selection:
            suites.pop("selection")
        return FuzzSummary(
            seed=self.settings.seed,
            count=self.settings.count,
            suites=suites,
            failures=failures,
            emm_trees=sum(1 for o in tree_outcomes if o.kind == "emm"),
            arbitrage_trees=sum(1 for o in tree_outcomes if o.kind == "arbitrage"),
            complete_trees=sum(1 for o in tree_outcomes if o.complete),
        )
