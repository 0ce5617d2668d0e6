"""
Tree Input Package

File ingestion for trees, claims and measures, and generators of standard
and random trees.
"""

from .tree_loader import load_tree, load_claim, load_measure, write_measure
from .tree_factory import binomial_tree, trinomial_tree, two_asset_tree, random_tree

__all__ = ["load_tree", "load_claim", "load_measure", "write_measure",
           "binomial_tree", "trinomial_tree", "two_asset_tree", "random_tree"]
