"""Strategies, value and gains processes, admissibility and the promotion surgery."""

import numpy as np
import pytest
from hypothesis import given, seed, settings
from hypothesis import strategies as st

from engine.core.exceptions import DimensionMismatchError, StrategyError
from engine.core.portfolio_manager import (
    Strategy,
    gains_process,
    is_self_financing,
    strategy_from_risky,
    value_process,
)
from engine.core.risk_manager import (
    is_admissible,
    is_arbitrage,
    promote_to_admissible,
    promote_to_admissible_detailed,
)
from engine.data.tree_factory import dip_arbitrage_instance, random_tree

SEEDS = st.integers(min_value=0, max_value=2**32 - 1)


def _long_stock(tree):
    """Buy one share with borrowed numeraire at the root; hold to the end."""
    risky = np.zeros((tree.n_nodes, 1))
    risky[tree.internal_nodes] = 1.0
    return strategy_from_risky(tree, risky, initial_value=0.0)


def test_value_process_uses_root_row(binomial):
    strategy = Strategy.buy_and_hold(binomial, [-4.0, 1.0])
    values = value_process(binomial, strategy)
    assert values.initial(binomial) == pytest.approx(0.0)
    np.testing.assert_allclose(values.terminal(binomial), [4.0, -2.0])
    assert values.to_dict(binomial)["u"]["value"] == pytest.approx(4.0)


def test_value_in_currency_and_numeraire_units(two_period):
    strategy = _long_stock(two_period)
    values = value_process(two_period, strategy)
    np.testing.assert_allclose(values.value, values.discounted * two_period.numeraire)
    uu = two_period.index("uu")
    assert values.discounted[uu] == pytest.approx(16.0 / 1.21 - 4.0)


def test_strategy_from_risky_is_self_financing(two_period):
    check = is_self_financing(two_period, _long_stock(two_period))
    assert check
    assert check.first_violation is None
    assert check.identity_residual <= 1e-10


def test_rebalancing_without_funding_is_caught(two_period):
    positions = np.zeros((two_period.n_nodes, 2))
    positions[two_period.root] = [-4.0, 1.0]
    positions[two_period.index("u")] = [0.0, 0.0]
    positions[two_period.index("d")] = [-4.0, 1.0]
    check = is_self_financing(two_period, Strategy(positions))
    assert not check
    assert check.first_violation == "u"
    assert check.max_defect > 0.0
    with pytest.raises(StrategyError, match="not self-financing"):
        is_admissible(two_period, Strategy(positions))
    assert not is_arbitrage(two_period, Strategy(positions))


def test_strategy_shape_checked(binomial):
    with pytest.raises(DimensionMismatchError):
        value_process(binomial, Strategy(np.zeros((2, 2))))
    with pytest.raises(DimensionMismatchError):
        strategy_from_risky(binomial, np.zeros((3, 2)))


def test_strategy_records_and_active_nodes(two_period):
    strategy = _long_stock(two_period)
    records = strategy.to_records(two_period)
    assert [r["node"] for r in records] == ["0", "u", "d"]
    assert records[0]["stock"] == pytest.approx(1.0)
    assert records[0]["bond"] == pytest.approx(-4.0)
    assert strategy.active_nodes(two_period) == ["0", "u", "d"]


def test_combine_is_linear(binomial):
    a = Strategy.buy_and_hold(binomial, [1.0, 0.0])
    b = Strategy.buy_and_hold(binomial, [0.0, 1.0])
    mixed = a.combine(2.0, b, -1.0)
    np.testing.assert_allclose(mixed.positions[binomial.root], [2.0, -1.0])


def test_long_stock_on_dominated_bond_is_admissible_arbitrage(arbitrage_tree):
    strategy = _long_stock(arbitrage_tree)
    assert is_arbitrage(arbitrage_tree, strategy)
    assert is_admissible(arbitrage_tree, strategy)
    assert promote_to_admissible(arbitrage_tree, strategy) is strategy


def test_zero_strategy_is_not_arbitrage(binomial):
    assert not is_arbitrage(binomial, Strategy.zeros(binomial))
    with pytest.raises(StrategyError, match="not an arbitrage"):
        promote_to_admissible(binomial, Strategy.zeros(binomial))


def test_promotion_on_known_dip():
    tree, strategy = dip_arbitrage_instance(np.random.default_rng(7))
    d = tree.index("d")
    assert value_process(tree, strategy).discounted[d] < 0.0
    assert not is_admissible(tree, strategy)
    assert is_arbitrage(tree, strategy)

    result = promote_to_admissible_detailed(tree, strategy)
    assert result.switch_time == 1
    assert result.trigger_nodes == ["d"]
    assert result.identity_residual <= 1e-10
    promoted = value_process(tree, result.strategy)
    assert promoted.discounted[tree.index("u")] == pytest.approx(0.0, abs=1e-12)
    assert promoted.discounted[d] == pytest.approx(0.0, abs=1e-12)
    assert result.to_dict()["trigger_nodes"] == ["d"]


@seed(1)
@settings(max_examples=50, deadline=None)
@given(SEEDS)
def test_promotion_yields_admissible_arbitrage(draw):
    tree, strategy = dip_arbitrage_instance(np.random.default_rng(draw))
    result = promote_to_admissible_detailed(tree, strategy)
    assert is_admissible(tree, result.strategy)
    assert is_arbitrage(tree, result.strategy)
    assert result.identity_residual <= 1e-10


@seed(1)
@settings(max_examples=50, deadline=None)
@given(SEEDS)
def test_gains_identity_on_random_trees(draw):
    rng = np.random.default_rng(draw)
    tree = random_tree(rng)
    risky = rng.normal(size=(tree.n_nodes, tree.num_risky))
    v0 = float(rng.uniform(-2.0, 2.0))
    strategy = strategy_from_risky(tree, risky, initial_value=v0)

    assert is_self_financing(tree, strategy)
    values = value_process(tree, strategy)
    assert values.initial(tree) == pytest.approx(v0)
    gains = gains_process(tree, strategy)
    np.testing.assert_allclose(values.discounted, v0 + gains, atol=1e-9)
