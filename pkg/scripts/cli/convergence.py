"""
Convergence Driver

Prices a European call on N-step binomial trees for a list of N and
tabulates the error against the Black-Scholes formula.
"""

import logging
from dataclasses import dataclass
from typing import Sequence

import pandas as pd

from engine.pricing.binomial_bridge import MAX_TREE_STEPS, binomial_bridge
from engine.pricing.black_scholes import ClosedFormParams, bs_call
from engine.utils.progress_tracker import ProgressTracker

logger = logging.getLogger(__name__)

CONVERGENCE_TOLERANCE = 1e-2


@dataclass
class ConvergenceTable:
    """Error table of the binomial bridge; `converged` judges the largest N."""
    params: ClosedFormParams
    table: pd.DataFrame
    reference: float

    @property
    def final_error(self) -> float:
        return float(self.table["abs_error"].iloc[-1]) if not self.table.empty else 0.0

    @property
    def converged(self) -> bool:
        return self.final_error <= CONVERGENCE_TOLERANCE


def run_convergence(params: ClosedFormParams, steps: Sequence[int],
                    max_tree_steps: int = MAX_TREE_STEPS) -> ConvergenceTable:
    """
    Binomial prices and |price_N - bs_call| for every N in `steps` (sorted ascending).

    Args:
        params: ClosedFormParams
        steps: Step counts N >= 1
        max_tree_steps: Largest N priced on a materialized tree

    Returns:
        ConvergenceTable
    """
    reference = bs_call(params)
    tracker = ProgressTracker()
    ordered = sorted(set(int(n) for n in steps))
    tracker.start_operation(f"converge over {len(ordered)} step counts")
    tracker.start_phase("binomial bridge")

    rows = []
    for done, n_steps in enumerate(ordered, start=1):
        result = binomial_bridge(params, n_steps, max_tree_steps=max_tree_steps)
        rows.append({"n_steps": n_steps, "price": result.price, "bs_call": reference,
                     "abs_error": abs(result.price - reference)})
        tracker.update_progress(done, len(ordered))
        logger.debug(f"N={n_steps}: {result.price:.10g} (error {rows[-1]['abs_error']:.3e})")

    tracker.complete_operation()
    table = pd.DataFrame(rows, columns=["n_steps", "price", "bs_call", "abs_error"])
    return ConvergenceTable(params, table, reference)
