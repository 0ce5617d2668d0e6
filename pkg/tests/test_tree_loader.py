"""Tree, claim and measure files: parsing, error locations and measure output."""

import json

import numpy as np
import pytest

from engine.core.exceptions import TreeFormatError
from engine.data.tree_factory import trinomial_tree
from engine.data.tree_loader import (
    load_claim,
    load_measure,
    load_tree,
    measure_to_document,
    parse_decimal,
    tree_to_document,
    write_measure,
)
from engine.optimization.arbitrage_engine import find_emm

HEADER = "horizon: 1\nassets: [bond, stock]\nnodes:\n"


def _load(body, header=HEADER):
    return load_tree("t.yaml", text=header + body)


def test_load_json_tree(examples_dir):
    loaded = load_tree(examples_dir / "binomial.json")
    tree = loaded.tree
    assert tree.leaf_ids == ("u", "d")
    assert tree.asset_names == ("bond", "stock")
    np.testing.assert_allclose(tree.prices[:, 1], [4.0, 8.0, 2.0])
    assert loaded.declared_horizon == 1
    assert loaded.exact_prices[2] == ["1", "2"]


def test_load_yaml_tree_with_fractions(examples_dir):
    tree = load_tree(examples_dir / "trinomial.yaml").tree
    assert tree.leaf_ids == ("u", "m", "d")
    np.testing.assert_allclose(tree.edge_prob[1:], 1 / 3)


def test_decimal_text_is_kept(examples_dir):
    loaded = load_tree(examples_dir / "two_period.json")
    assert loaded.exact_prices[3] == ["1.21", "16"]
    assert loaded.tree.numeraire[3] == pytest.approx(1.21)


def test_parent_listed_after_child():
    body = ('  - {id: u, parent: "0", prob: 0.5, prices: [1, 8]}\n'
            '  - {id: "0", prices: [1, 4]}\n')
    with pytest.raises(TreeFormatError, match="lists parent '0' after itself") as info:
        _load(body)
    assert info.value.line == 4
    assert str(info.value).startswith("t.yaml:4:")


def test_unknown_parent():
    body = ('  - {id: "0", prices: [1, 4]}\n'
            '  - {id: u, parent: x, prob: 1, prices: [1, 8]}\n')
    with pytest.raises(TreeFormatError, match="unknown parent 'x'") as info:
        _load(body)
    assert info.value.line == 5


def test_missing_probability():
    body = ('  - {id: "0", prices: [1, 4]}\n'
            '  - {id: u, parent: "0", prices: [1, 8]}\n')
    with pytest.raises(TreeFormatError, match="no 'prob'") as info:
        _load(body)
    assert info.value.line == 5


def test_price_count_mismatch():
    body = ('  - {id: "0", prices: [1, 4]}\n'
            '  - {id: u, parent: "0", prob: 1,\n'
            '     prices: [1]}\n')
    with pytest.raises(TreeFormatError, match="1 prices for 2 assets") as info:
        _load(body)
    assert info.value.line == 6


def test_schema_error_carries_line():
    body = ('  - {id: "0", prices: [1, 4]}\n'
            '  - {id: u, parent: "0", prob: 1, prices: [1, abc]}\n')
    with pytest.raises(TreeFormatError) as info:
        _load(body)
    assert info.value.line == 5
    assert "nodes/1/prices/1" in str(info.value)


def test_division_by_zero_is_not_a_number():
    body = ('  - {id: "0", prices: [1, 4]}\n'
            '  - {id: u, parent: "0", prob: "1/0", prices: [1, 8]}\n')
    with pytest.raises(TreeFormatError, match="not a number"):
        _load(body)


def test_declared_horizon_must_match():
    body = ('  - {id: "0", prices: [1, 4]}\n'
            '  - {id: u, parent: "0", prob: 1, prices: [1, 8]}\n')
    with pytest.raises(TreeFormatError, match="declared horizon 2") as info:
        _load(body, header=HEADER.replace("horizon: 1", "horizon: 2"))
    assert info.value.line == 1


def test_syntax_error_and_missing_file(tmp_path):
    with pytest.raises(TreeFormatError, match="syntax error"):
        load_tree("bad.yaml", text="nodes: [\n")
    with pytest.raises(TreeFormatError, match="cannot read file"):
        load_tree(tmp_path / "missing.json")


def test_load_claims(examples_dir):
    binomial = load_tree(examples_dir / "binomial.json").tree
    np.testing.assert_allclose(load_claim(examples_dir / "call_claim.json", binomial).payoff, [4.0, 0.0])
    trinomial = load_tree(examples_dir / "trinomial.yaml").tree
    np.testing.assert_allclose(load_claim(examples_dir / "leaf_claim.yaml", trinomial).payoff,
                               [4.0, 0.0, 0.0])


def test_claim_errors(trinomial):
    with pytest.raises(TreeFormatError, match="'x', which is not a leaf"):
        load_claim("c.yaml", trinomial, text="u: 1\nm: 0\nd: 0\nx: 2\n")
    with pytest.raises(TreeFormatError, match="missing leaves"):
        load_claim("c.yaml", trinomial, text="u: 1\n")
    with pytest.raises(TreeFormatError, match="negative") as info:
        load_claim("c.yaml", trinomial, text="u: 1\nm: '-1'\nd: 0\n")
    assert info.value.line == 2


def test_load_measure(examples_dir):
    tree = load_tree(examples_dir / "trinomial.yaml").tree
    measure = load_measure(examples_dir / "trinomial_measure.json", tree)
    np.testing.assert_allclose(measure.leaf_prob, [0.2, 0.4, 0.4])


def test_measure_must_be_a_probability(trinomial):
    with pytest.raises(TreeFormatError, match="expected 1"):
        load_measure("q.json", trinomial, text='{"u": "0.2", "m": "0.2", "d": "0.2"}')
    with pytest.raises(TreeFormatError, match="strictly positive"):
        load_measure("q.json", trinomial, text='{"u": "0", "m": "0.5", "d": "0.5"}')


def test_written_measure_reads_back_exactly(tmp_path, trinomial):
    emm = find_emm(trinomial)
    target = tmp_path / "emm.json"
    write_measure(target, trinomial, emm)
    assert list(json.loads(target.read_text())) == ["u", "m", "d"]
    np.testing.assert_array_equal(load_measure(target, trinomial).leaf_prob, emm.leaf_prob)
    assert measure_to_document(trinomial, emm)["d"] == format(emm.leaf_prob[2], ".17g")


def test_tree_document_reloads():
    tree = trinomial_tree(4.0, (1.5, 1.0, 0.7), probs=(0.2, 0.3, 0.5), growth=1.05)
    reloaded = load_tree("t.json", text=json.dumps(tree_to_document(tree))).tree
    np.testing.assert_array_equal(reloaded.prices, tree.prices)
    np.testing.assert_array_equal(reloaded.edge_prob, tree.edge_prob)


def test_parse_decimal():
    assert parse_decimal("1/4") == 0.25
    assert parse_decimal("2.5e-1") == 0.25
    with pytest.raises(ValueError):
        parse_decimal(True)
