"""Leaf measures and contingent claims."""

import numpy as np
import pytest

from engine.core.contingent_claims import Claim, make_claim, numeraire_claim
from engine.core.exceptions import DimensionMismatchError
from engine.core.measures import Measure


def test_measure_must_be_strictly_positive():
    with pytest.raises(ValueError, match="strictly positive"):
        Measure(np.array([1.0, 0.0]))


def test_measure_must_sum_to_one():
    with pytest.raises(ValueError, match="expected 1"):
        Measure(np.array([0.5, 0.6]))


def test_physical_measure(two_period):
    np.testing.assert_allclose(Measure.physical(two_period).leaf_prob, 0.25)


def test_from_mapping_checks_leaves(binomial):
    measure = Measure.from_mapping(binomial, {"d": 0.75, "u": 0.25})
    np.testing.assert_allclose(measure.leaf_prob, [0.25, 0.75])
    assert measure.to_mapping(binomial) == {"u": 0.25, "d": 0.75}
    with pytest.raises(DimensionMismatchError, match="missing"):
        Measure.from_mapping(binomial, {"u": 1.0})


def test_conditional_round_trip(two_period):
    weights = np.array([1.0, 2.0, 3.0, 4.0])
    measure = Measure.from_weights(weights)
    cond = measure.conditional_prob(two_period)
    assert cond[two_period.root] == 1.0
    assert cond[two_period.index("u")] == pytest.approx(0.3)
    assert cond[two_period.index("dd")] == pytest.approx(4 / 7)
    rebuilt = Measure.from_conditional(two_period, cond)
    np.testing.assert_allclose(rebuilt.leaf_prob, measure.leaf_prob)


def test_conditional_expectation(two_period):
    measure = Measure.physical(two_period)
    expected = measure.conditional_expectation(two_period, np.array([4.0, 0.0, 2.0, 2.0]))
    assert expected[two_period.root] == pytest.approx(2.0)
    assert expected[two_period.index("u")] == pytest.approx(2.0)
    assert expected[two_period.index("uu")] == pytest.approx(4.0)
    with pytest.raises(DimensionMismatchError):
        measure.conditional_expectation(two_period, np.ones(3))


def test_density_and_total_variation(binomial):
    q = Measure(np.array([1 / 3, 2 / 3]))
    np.testing.assert_allclose(q.density(binomial), [2 / 3, 4 / 3])
    assert q.total_variation(Measure.physical(binomial)) == pytest.approx(1 / 6)
    with pytest.raises(DimensionMismatchError):
        Measure(np.array([0.2, 0.3, 0.5])).check_tree(binomial)


def test_payoffs(trinomial):
    np.testing.assert_allclose(make_claim(trinomial, "call", 4.0).payoff, [4.0, 0.0, 0.0])
    np.testing.assert_allclose(make_claim(trinomial, "put", 4.0).payoff, [0.0, 0.0, 2.0])
    # strictly above the strike
    np.testing.assert_allclose(make_claim(trinomial, "digital", 4.0).payoff, [1.0, 0.0, 0.0])


def test_make_claim_rejects_bad_inputs(binomial):
    with pytest.raises(ValueError, match="Unknown payoff type"):
        make_claim(binomial, "straddle", 4.0)
    with pytest.raises(DimensionMismatchError):
        make_claim(binomial, "call", 4.0, asset=2)


def test_claim_must_be_nonnegative():
    with pytest.raises(ValueError, match="nonnegative"):
        Claim(np.array([1.0, -0.5]))


def test_discounted_claim(two_period):
    claim = numeraire_claim(two_period, units=2.0)
    np.testing.assert_allclose(claim.payoff, 2.0 * 1.21)
    np.testing.assert_allclose(claim.discounted(two_period), 2.0)


def test_claim_from_mapping(binomial):
    claim = Claim.from_mapping(binomial, {"u": 4, "d": 0})
    assert claim.to_mapping(binomial) == {"u": 4.0, "d": 0.0}
    with pytest.raises(DimensionMismatchError):
        Claim.from_mapping(binomial, {"u": 4, "d": 0, "x": 1})
