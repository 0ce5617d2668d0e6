"""Shared fixtures: the standard trees and the example input files."""

from pathlib import Path

import pytest

from engine.data.tree_factory import (
    binomial_tree,
    constant_tree,
    trinomial_tree,
    two_asset_tree,
)

REPO_ROOT = Path(__file__).resolve().parents[1]
EXAMPLES_DIR = REPO_ROOT / "configs" / "examples"


@pytest.fixture
def binomial():
    """4 -> 8 / 2, zero rate: unique EMM q = 1/3."""
    return binomial_tree(4.0, 2.0, 0.5)


@pytest.fixture
def trinomial():
    """4 -> 8 / 4 / 2, zero rate: EMM set of dimension 1."""
    return trinomial_tree(4.0, (2.0, 1.0, 0.5))


@pytest.fixture
def arbitrage_tree():
    """4 -> 8 / 4.4: the stock dominates the bond."""
    return binomial_tree(4.0, 2.0, 1.1)


@pytest.fixture
def two_period():
    """Two periods, numeraire growth 1.1, q = 0.4 at every node."""
    return binomial_tree(4.0, 2.0, 0.5, n_steps=2, growth=1.1)


@pytest.fixture
def two_asset():
    return two_asset_tree()


@pytest.fixture
def flat():
    return constant_tree(4.0, n_children=2)


@pytest.fixture
def examples_dir():
    return EXAMPLES_DIR
