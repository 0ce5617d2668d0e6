"""
Core Market Components

Scenario trees, probability measures, trading strategies, contingent claims
and the admissibility / arbitrage predicates.
"""

from .scenario_tree import ScenarioTree
from .measures import Measure
from .contingent_claims import Claim, make_claim
from .portfolio_manager import Strategy, ValueProcess, value_process, is_self_financing
from .risk_manager import is_admissible, is_arbitrage, promote_to_admissible

__all__ = ["ScenarioTree", "Measure", "Claim", "make_claim", "Strategy", "ValueProcess",
           "value_process", "is_self_financing", "is_admissible", "is_arbitrage",
           "promote_to_admissible"]
