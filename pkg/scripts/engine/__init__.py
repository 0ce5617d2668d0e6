"""
FTAP Engine Package

Finite scenario-tree markets: arbitrage and completeness certificates,
arbitrage pricing, measure selection, and the continuous-time pricers that
the tree engine is checked against.
"""

__version__ = "1.0.0"

from .core.scenario_tree import ScenarioTree
from .core.measures import Measure
from .core.portfolio_manager import Strategy
from .optimization.arbitrage_engine import fftap_verdict

__all__ = [
    "ScenarioTree",
    "Measure",
    "Strategy",
    "fftap_verdict"
]
