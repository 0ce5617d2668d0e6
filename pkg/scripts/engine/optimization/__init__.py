"""
Optimization Package

LP certificates for the arbitrage dichotomy, completeness and replication,
divergence minimization and utility maximization over the EMM set.
"""

from .arbitrage_engine import ArbitrageCertificate, fftap_verdict, find_emm, find_arbitrage
from .completeness import completeness_report, replicate, price, second_measure
from .measure_selection import (minimal_divergence_measure, maximize_expected_utility,
                                duality_density, marginal_indifference_price)

__all__ = ["ArbitrageCertificate", "fftap_verdict", "find_emm", "find_arbitrage",
           "completeness_report", "replicate", "price", "second_measure",
           "minimal_divergence_measure", "maximize_expected_utility", "duality_density",
           "marginal_indifference_price"]
