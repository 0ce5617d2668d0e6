"""Completeness, replication, pricing, the second measure and price intervals."""

import numpy as np
import pytest
from hypothesis import given, seed, settings
from hypothesis import strategies as st

from engine.core.contingent_claims import Claim, make_claim
from engine.core.exceptions import ArbitrageMarketError, NotAnEMMError
from engine.core.measures import Measure
from engine.core.risk_manager import is_admissible
from engine.data.tree_factory import random_tree
from engine.optimization.arbitrage_engine import find_emm, is_martingale_measure
from engine.optimization.completeness import (
    completeness_report,
    emm_polytope,
    extreme_measures,
    is_complete,
    price,
    price_interval,
    replicate,
    second_measure,
    supermartingale_shortfall,
)


def test_binomial_is_complete(binomial):
    report = completeness_report(binomial)
    assert report.complete
    assert report.dimension == 0
    assert report.max_children == 2
    assert report.atom_bound == 2
    assert report.to_dict()["n_leaves"] == 2


def test_trinomial_has_one_direction(trinomial):
    report = completeness_report(trinomial)
    assert not report.complete
    assert report.dimension == 1
    assert report.max_children == 3


def test_two_asset_tree_is_incomplete(two_asset):
    report = completeness_report(two_asset)
    assert report.dimension == 1
    assert report.max_children == 4
    assert report.atom_bound == 3


def test_arbitrage_market_has_no_completeness_verdict(arbitrage_tree):
    with pytest.raises(ArbitrageMarketError):
        is_complete(arbitrage_tree)
    with pytest.raises(ArbitrageMarketError):
        price_interval(arbitrage_tree, make_claim(arbitrage_tree, "call", 4.0))


def test_replicate_binomial_call(binomial):
    result = replicate(binomial, make_claim(binomial, "call", 4.0))
    assert result.attainable
    assert result.initial_price == pytest.approx(4 / 3)
    root = result.strategy.positions[binomial.root]
    np.testing.assert_allclose(root, [-4 / 3, 2 / 3], atol=1e-12)
    assert result.to_dict(binomial)["attainable"] is True


def test_replication_matches_arbitrage_price(two_period):
    claim = make_claim(two_period, "call", 4.0)
    result = replicate(two_period, claim)
    assert result.attainable
    priced = price(two_period, claim, find_emm(two_period))
    np.testing.assert_allclose(priced.discounted, result.values.discounted, atol=1e-10)
    assert priced.initial(two_period) == pytest.approx(12.0 * 0.16 / 1.21)


def test_trinomial_call_is_unattainable(trinomial):
    result = replicate(trinomial, make_claim(trinomial, "call", 4.0))
    assert not result.attainable
    assert result.residual > 1e-3


def test_stock_is_attainable_in_incomplete_market(trinomial):
    claim = Claim(trinomial.prices[trinomial.leaves, 1])
    result = replicate(trinomial, claim)
    assert result.attainable
    assert result.initial_price == pytest.approx(4.0)


def test_price_requires_martingale_measure(binomial):
    with pytest.raises(NotAnEMMError, match="not a martingale measure"):
        price(binomial, make_claim(binomial, "call", 4.0), Measure.physical(binomial))


def test_second_measure_binomial_is_none(binomial):
    assert second_measure(binomial, find_emm(binomial)) is None


def test_second_measure_trinomial(trinomial):
    base = find_emm(trinomial)
    plus = second_measure(trinomial, base, sign=1)
    minus = second_measure(trinomial, base, sign=-1)
    for other in (plus, minus):
        assert is_martingale_measure(trinomial, other)
        assert other.total_variation(base) > 1e-8
        ratio = other.leaf_prob / base.leaf_prob
        assert np.all(ratio >= 0.5 - 1e-12) and np.all(ratio <= 1.5 + 1e-12)
    # the two signs straddle the base
    np.testing.assert_allclose(0.5 * (plus.leaf_prob + minus.leaf_prob), base.leaf_prob, atol=1e-12)


def test_second_measure_rejects_bad_sign(trinomial):
    with pytest.raises(ValueError):
        second_measure(trinomial, find_emm(trinomial), sign=0)


def test_second_measure_gives_distinct_prices_for_unattainable(trinomial):
    claim = make_claim(trinomial, "call", 4.0)
    base = find_emm(trinomial)
    other = second_measure(trinomial, base)
    assert abs(price(trinomial, claim, base).initial(trinomial)
               - price(trinomial, claim, other).initial(trinomial)) > 1e-6


def test_polytope_points_are_martingale(trinomial):
    polytope = emm_polytope(trinomial, find_emm(trinomial))
    theta = np.array([0.05])
    assert polytope.contains(theta)
    assert is_martingale_measure(trinomial, Measure.from_weights(polytope.point(theta)))
    np.testing.assert_allclose(polytope.directions.sum(axis=0), 0.0, atol=1e-12)


def test_price_interval_trinomial_call(trinomial):
    interval = price_interval(trinomial, make_claim(trinomial, "call", 4.0))
    assert interval.low == pytest.approx(0.0, abs=1e-9)
    assert interval.high == pytest.approx(4 / 3, abs=1e-9)
    assert interval.width == pytest.approx(4 / 3, abs=1e-9)


def test_price_interval_collapses_when_complete(binomial):
    interval = price_interval(binomial, make_claim(binomial, "call", 4.0))
    assert interval.low == pytest.approx(4 / 3, abs=1e-9)
    assert interval.width == pytest.approx(0.0, abs=1e-9)


def test_extreme_measures_are_vertices(trinomial):
    vertices = extreme_measures(trinomial, [np.array([1.0, 0.0, 0.0]), np.array([-1.0, 0.0, 0.0]),
                                            np.array([2.0, 0.0, 0.0])])
    assert len(vertices) == 2
    tops = sorted(v[0] for v in vertices)
    assert tops == pytest.approx([0.0, 1 / 3], abs=1e-9)


def test_replicating_portfolio_dominates_price_process(two_period):
    claim = make_claim(two_period, "call", 4.0)
    result = replicate(two_period, claim)
    assert is_admissible(two_period, result.strategy)
    gap, _ = supermartingale_shortfall(two_period, result.strategy, claim, find_emm(two_period))
    assert gap <= 1e-9


@seed(1)
@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_completeness_agrees_with_replication(draw):
    rng = np.random.default_rng(draw)
    tree = random_tree(rng)
    base = find_emm(tree)
    if base is None:
        return
    complete = is_complete(tree, base)
    claims = [Claim(rng.uniform(0.0, 10.0, size=tree.n_leaves)) for _ in range(5)]
    attainable = [replicate(tree, claim).attainable for claim in claims]
    if complete:
        assert all(attainable)
        assert second_measure(tree, base) is None
    else:
        assert not all(attainable)
        assert second_measure(tree, base) is not None
    for claim in claims:
        interval = price_interval(tree, claim)
        base_price = price(tree, claim, base).initial(tree)
        assert interval.low - 1e-7 <= base_price <= interval.high + 1e-7
