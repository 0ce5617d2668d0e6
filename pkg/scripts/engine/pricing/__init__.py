"""
Closed-Form Pricing Package

Black-Scholes, Bachelier and Samuelson-Merton formulas, the PDE and Monte
Carlo solvers, and the binomial bridge back to the tree engine.
"""

from .black_scholes import ClosedFormParams, bs_call, bs_put, bachelier_call
from .pde_solver import bs_pde_solve
from .monte_carlo import feynman_kac_mc
from .binomial_bridge import binomial_bridge

__all__ = ["ClosedFormParams", "bs_call", "bs_put", "bachelier_call", "bs_pde_solve",
           "feynman_kac_mc", "binomial_bridge"]
