"""Scenario tree structure and validation."""

import numpy as np
import pytest
from hypothesis import given, seed, settings
from hypothesis import strategies as st

from engine.core.exceptions import DimensionMismatchError, InvalidTreeError
from engine.core.scenario_tree import ScenarioTree, iter_edges
from engine.data.tree_factory import random_tree
from engine.utils.validators import TreeValidator, validate_tree


def _records(**overrides):
    records = [
        {"id": "0", "parent": None, "prob": 1.0, "prices": [1.0, 4.0]},
        {"id": "u", "parent": "0", "prob": 0.5, "prices": [1.0, 8.0]},
        {"id": "d", "parent": "0", "prob": 0.5, "prices": [1.0, 2.0]},
    ]
    for node_id, changes in overrides.items():
        for record in records:
            if record["id"] == node_id:
                record.update(changes)
    return records


def test_binomial_shape(binomial):
    assert binomial.n_nodes == 3
    assert binomial.num_assets == 2
    assert binomial.num_risky == 1
    assert binomial.horizon == 1
    assert binomial.leaf_ids == ("u", "d")
    assert binomial.asset_names == ("bond", "stock")
    assert binomial.children[binomial.root] == (1, 2)


def test_two_period_paths_and_membership(two_period):
    assert two_period.leaf_ids == ("uu", "ud", "du", "dd")
    paths = two_period.path_matrix
    assert paths.shape == (4, 3)
    assert [two_period.node_ids[n] for n in paths[1]] == ["0", "u", "ud"]
    assert list(two_period.leaf_members(two_period.index("d"))) == [2, 3]
    assert two_period.membership.shape == (7, 4)
    np.testing.assert_allclose(two_period.membership.toarray()[two_period.root], 1.0)


def test_internal_nodes_are_breadth_first(two_period):
    ids = [two_period.node_ids[n] for n in two_period.internal_nodes]
    assert ids == ["0", "u", "d"]
    edges = [(two_period.node_ids[p], two_period.node_ids[c]) for p, c in iter_edges(two_period)]
    assert edges[:2] == [("0", "u"), ("0", "d")]
    assert len(edges) == two_period.n_nodes - 1


def test_discounted_prices(two_period):
    disc = two_period.discounted_prices
    np.testing.assert_allclose(disc[:, 0], 1.0)
    assert disc[two_period.index("u"), 1] == pytest.approx(8.0 / 1.1)
    assert disc[two_period.index("uu"), 1] == pytest.approx(16.0 / 1.21)


def test_physical_leaf_probabilities_sum_to_one(two_period):
    np.testing.assert_allclose(two_period.phys_leaf_prob, 0.25)
    assert two_period.node_phys_prob[two_period.index("u")] == pytest.approx(0.5)


def test_increments(binomial):
    np.testing.assert_allclose(binomial.increments(binomial.root), [[4.0], [-2.0]])


def test_node_from_leaf_values(two_period):
    values = np.array([1.0, 1.0, 2.0, 2.0])
    nodes = two_period.node_from_leaf_values(values, 1)
    assert nodes[two_period.index("u")] == 1.0
    assert nodes[two_period.index("d")] == 2.0


def test_tree_is_immutable(binomial):
    with pytest.raises(ValueError):
        binomial.prices[0, 0] = 2.0


def test_unknown_node_id(binomial):
    with pytest.raises(KeyError, match="Unknown node id"):
        binomial.index("x")


def test_unknown_parent_rejected():
    with pytest.raises(InvalidTreeError, match="unknown parent"):
        ScenarioTree.from_records(_records(u={"parent": "zz"}))


def test_duplicate_ids_rejected():
    with pytest.raises(InvalidTreeError, match="duplicate"):
        ScenarioTree.from_records(_records(d={"id": "u"}))


def test_ragged_prices_rejected():
    with pytest.raises(DimensionMismatchError):
        ScenarioTree.from_records(_records(u={"prices": [1.0, 8.0, 3.0]}))


def test_asset_name_count_checked():
    with pytest.raises(DimensionMismatchError):
        ScenarioTree.from_records(_records(), asset_names=("bond",))


def test_cycle_detected():
    with pytest.raises(InvalidTreeError, match="cycle"):
        ScenarioTree(("a", "b"), np.array([1, 0]), np.ones(2), np.ones((2, 2)))


def test_valid_trees_have_no_diagnostics(binomial, trinomial, two_period, two_asset):
    for tree in (binomial, trinomial, two_period, two_asset):
        assert validate_tree(tree) == []


def test_probabilities_must_sum_to_one():
    tree = ScenarioTree.from_records(_records(d={"prob": 0.4}))
    errors = validate_tree(tree)
    assert any("sum ≠ 1" in e for e in errors)


def test_probabilities_must_be_positive():
    tree = ScenarioTree.from_records(_records(u={"prob": 1.0}, d={"prob": 0.0}))
    errors = validate_tree(tree)
    assert any("not strictly positive at node d" in e for e in errors)


def test_numeraire_must_be_predictable():
    tree = ScenarioTree.from_records(_records(u={"prices": [1.1, 8.0]}))
    errors = validate_tree(tree)
    assert any("numeraire not predictable" in e for e in errors)


def test_negative_and_nonpositive_numeraire():
    tree = ScenarioTree.from_records(_records(u={"prices": [0.0, -1.0]}, d={"prices": [0.0, 2.0]}))
    errors = validate_tree(tree)
    assert any("negative price at node u" in e for e in errors)
    assert any("numeraire not strictly positive at node d" in e for e in errors)


def test_non_uniform_depth():
    records = _records() + [{"id": "uu", "parent": "u", "prob": 1.0, "prices": [1.0, 8.0]}]
    errors = validate_tree(ScenarioTree.from_records(records))
    assert any("non-uniform depth" in e for e in errors)


def test_no_risky_asset_and_no_period():
    tree = ScenarioTree(("0",), np.array([-1]), np.ones(1), np.ones((1, 1)))
    errors = validate_tree(tree)
    assert any("d must be at least 1" in e for e in errors)
    assert any("T = 0" in e for e in errors)


def test_two_roots():
    records = _records() + [{"id": "r", "parent": None, "prob": 1.0, "prices": [1.0, 3.0]}]
    errors = validate_tree(ScenarioTree.from_records(records))
    assert any("single root" in e for e in errors)


def test_require_valid_raises_with_every_diagnostic():
    tree = ScenarioTree.from_records(_records(d={"prob": 0.2}, u={"prices": [1.1, 8.0]}))
    with pytest.raises(InvalidTreeError) as info:
        TreeValidator().require_valid(tree)
    assert len(info.value.diagnostics) == 2


@seed(1)
@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_random_trees_are_valid(draw):
    tree = random_tree(np.random.default_rng(draw))
    assert validate_tree(tree) == []
    assert np.isclose(tree.phys_leaf_prob.sum(), 1.0)
    assert tree.describe()["max_children"] <= 3
