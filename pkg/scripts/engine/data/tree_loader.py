"""
Tree Loader

Reads scenario trees, claims and measures from JSON or YAML files. Documents
are composed through the YAML node graph so that schema and semantic errors
carry the 1-based source line of the offending value, and the raw text of
every number is kept for exact-arithmetic mode.
"""

import json
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import jsonschema
import yaml

from ..core.contingent_claims import Claim, make_claim
from ..core.exceptions import DimensionMismatchError, InvalidTreeError, TreeFormatError
from ..core.measures import Measure
from ..core.scenario_tree import ScenarioTree
from ..utils.config_parser import load_schema

logger = logging.getLogger(__name__)

PathKey = Tuple[Union[str, int], ...]


@dataclass
class SourceDocument:
    """
    Parsed file with source positions.

    Args:
        data: Plain Python value of the document
        lines: 1-based line of every value, keyed by its path in the document
        raw: Original scalar text of every number or string, keyed by path
        path: File the document came from
    """
    data: Any
    lines: Dict[PathKey, int] = field(default_factory=dict)
    raw: Dict[PathKey, str] = field(default_factory=dict)
    path: Optional[str] = None

    def line_of(self, key: PathKey) -> Optional[int]:
        """Line of `key`, or of its closest recorded ancestor."""
        key = tuple(key)
        while key:
            if key in self.lines:
                return self.lines[key]
            key = key[:-1]
        return self.lines.get(())

    def error(self, message: str, key: PathKey = ()) -> TreeFormatError:
        return TreeFormatError(message, self.path, self.line_of(key))


@dataclass
class LoadedTree:
    """A tree plus the raw price text needed for exact re-verification."""
    tree: ScenarioTree
    exact_prices: List[List[str]]
    declared_horizon: Optional[int]
    path: Optional[str] = None


def _index_nodes(node: yaml.Node, key: PathKey, lines: Dict[PathKey, int],
                 raw: Dict[PathKey, str]) -> None:
    lines[key] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            _index_nodes(value_node, key + (key_node.value,), lines, raw)
    elif isinstance(node, yaml.SequenceNode):
        for position, item in enumerate(node.value):
            _index_nodes(item, key + (position,), lines, raw)
    else:
        raw[key] = node.value


def read_document(path: Union[str, Path], text: Optional[str] = None) -> SourceDocument:
    """
    Parse a JSON or YAML file into a SourceDocument.

    Raises:
        TreeFormatError: Unreadable or syntactically invalid file
    """
    path = str(path)
    if text is None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise TreeFormatError(f"cannot read file: {exc.strerror or exc}", path) from exc

    loader = yaml.SafeLoader(text)
    try:
        node = loader.get_single_node()
        if node is None:
            raise TreeFormatError("empty document", path, 1)
        data = loader.construct_document(node)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = mark.line + 1 if mark is not None else None
        raise TreeFormatError(f"syntax error: {exc.problem or exc}", path, line) from exc
    finally:
        loader.dispose()

    lines: Dict[PathKey, int] = {}
    raw: Dict[PathKey, str] = {}
    _index_nodes(node, (), lines, raw)
    return SourceDocument(data, lines, raw, path)


def check_schema(document: SourceDocument, schema_name: str) -> None:
    """
    Validate against a schema in docs/schemas; the first error (in document order) is raised.

    Raises:
        TreeFormatError: With the line of the offending value
    """
    validator = jsonschema.Draft7Validator(load_schema(schema_name))
    errors = list(validator.iter_errors(document.data))
    if not errors:
        return
    first = min(errors, key=lambda e: (document.line_of(tuple(e.absolute_path)) or 0,
                                       list(map(str, e.absolute_path))))
    location = "/".join(str(p) for p in first.absolute_path) or "<root>"
    raise document.error(f"{location}: {first.message}", tuple(first.absolute_path))


def parse_decimal(value: Any) -> float:
    """Number, decimal string or 'p/q' string to float."""
    if isinstance(value, bool):
        raise ValueError(f"not a number: {value!r}")
    if isinstance(value, str) and "/" in value:
        return float(Fraction(value.strip()))
    return float(value)


def _decimal(document: SourceDocument, key: PathKey, value: Any) -> float:
    try:
        return parse_decimal(value)
    except (ValueError, ZeroDivisionError) as exc:
        raise document.error(f"not a number: {value!r}", key) from exc


def _exact_text(document: SourceDocument, key: PathKey, value: Any) -> str:
    text = document.raw.get(key)
    return text.strip() if text is not None else str(value)


def load_tree(path: Union[str, Path], text: Optional[str] = None) -> LoadedTree:
    """
    Load a tree file.

    Args:
        path: File path (used for messages when `text` is given)
        text: Optional document text instead of reading the file

    Returns:
        LoadedTree

    Raises:
        TreeFormatError: Malformed document or inconsistent fields
        InvalidTreeError: Structurally invalid tree (cycles, unknown parents)
    """
    document = read_document(path, text)
    check_schema(document, "tree_schema.json")
    data = document.data
    assets = [str(a) for a in data["assets"]]

    records = []
    exact_prices: List[List[str]] = []
    seen = set()
    for position, node in enumerate(data["nodes"]):
        key = ("nodes", position)
        node_id = str(node["id"])
        if node_id in seen:
            raise document.error(f"duplicate node id '{node_id}'", key + ("id",))
        seen.add(node_id)
        parent = node.get("parent")
        if parent is not None and str(parent) not in seen:
            known = {str(n["id"]) for n in data["nodes"]}
            message = (f"node '{node_id}' lists parent '{parent}' after itself"
                       if str(parent) in known else f"node '{node_id}' has unknown parent '{parent}'")
            raise document.error(message, key + ("parent",))
        if parent is not None and "prob" not in node:
            raise document.error(f"node '{node_id}' has a parent but no 'prob'", key)
        if len(node["prices"]) != len(assets):
            raise document.error(
                f"node '{node_id}' has {len(node['prices'])} prices for {len(assets)} assets",
                key + ("prices",))
        prices = [_decimal(document, key + ("prices", i), v) for i, v in enumerate(node["prices"])]
        prob = _decimal(document, key + ("prob",), node["prob"]) if parent is not None else 1.0
        records.append({"id": node_id, "parent": None if parent is None else str(parent),
                        "prob": prob, "prices": prices})
        exact_prices.append([_exact_text(document, key + ("prices", i), v)
                             for i, v in enumerate(node["prices"])])

    try:
        tree = ScenarioTree.from_records(records, assets)
    except (InvalidTreeError, DimensionMismatchError) as exc:
        raise document.error(str(exc), ("nodes",)) from exc

    declared = data.get("horizon")
    if declared is not None and len(tree.roots) == 1 and declared != tree.horizon:
        raise document.error(f"declared horizon {declared} but leaves sit at depth {tree.horizon}",
                             ("horizon",))
    logger.debug(f"Loaded tree {path}: {tree.n_nodes} nodes, {tree.n_leaves} leaves")
    return LoadedTree(tree, exact_prices, declared, str(path))


def load_claim(path: Union[str, Path], tree: ScenarioTree, text: Optional[str] = None) -> Claim:
    """
    Load a claim file: a payoff specification or a {leaf_id: payoff} map.

    Raises:
        TreeFormatError: Malformed file, unknown or missing leaves, negative payoff
    """
    document = read_document(path, text)
    check_schema(document, "claim_schema.json")
    data = document.data
    if "payoff" in data:
        spec = data["payoff"]
        try:
            return make_claim(tree, spec["type"], _decimal(document, ("payoff", "strike"), spec["strike"]),
                              int(spec.get("asset", 1)))
        except (ValueError, DimensionMismatchError) as exc:
            raise document.error(str(exc), ("payoff",)) from exc

    payoffs = _leaf_map(document, tree, "claim")
    for leaf, value in payoffs.items():
        if value < 0:
            raise document.error(f"payoff at leaf '{leaf}' is negative", (leaf,))
    return Claim.from_mapping(tree, payoffs)


def load_measure(path: Union[str, Path], tree: ScenarioTree,
                 text: Optional[str] = None) -> Measure:
    """
    Load a {leaf_id: probability} measure file.

    Raises:
        TreeFormatError: Malformed file, leaves not matching the tree, or not a probability
    """
    document = read_document(path, text)
    check_schema(document, "measure_schema.json")
    probabilities = _leaf_map(document, tree, "measure")
    try:
        return Measure.from_mapping(tree, probabilities)
    except ValueError as exc:
        raise document.error(str(exc)) from exc


def _leaf_map(document: SourceDocument, tree: ScenarioTree, what: str) -> Dict[str, float]:
    data = {str(k): v for k, v in document.data.items()}
    leaves = set(tree.leaf_ids)
    for key in document.data:
        if str(key) not in leaves:
            raise document.error(f"{what} names '{key}', which is not a leaf of the tree", (str(key),))
    missing = [leaf for leaf in tree.leaf_ids if leaf not in data]
    if missing:
        raise document.error(f"{what} is missing leaves {missing[:5]}")
    return {leaf: _decimal(document, (leaf,), data[leaf]) for leaf in tree.leaf_ids}


def tree_to_document(tree: ScenarioTree) -> Dict[str, Any]:
    """Serializable tree document (prices and probabilities with 17 significant digits)."""
    nodes = []
    for k, node_id in enumerate(tree.node_ids):
        entry: Dict[str, Any] = {"id": node_id}
        if tree.parent[k] >= 0:
            entry["parent"] = tree.node_ids[tree.parent[k]]
            entry["prob"] = format(float(tree.edge_prob[k]), ".17g")
        entry["prices"] = [format(float(v), ".17g") for v in tree.prices[k]]
        nodes.append(entry)
    return {"horizon": tree.horizon, "assets": list(tree.asset_names), "nodes": nodes}


def measure_to_document(tree: ScenarioTree, measure: Measure) -> Dict[str, str]:
    """{leaf_id: probability} with 17 significant digits, in leaf order."""
    measure.check_tree(tree)
    return {leaf: format(float(q), ".17g") for leaf, q in zip(tree.leaf_ids, measure.leaf_prob)}


def write_measure(path: Union[str, Path], tree: ScenarioTree, measure: Measure) -> None:
    """Write a measure file that load_measure reads back to the same floats."""
    Path(path).write_text(json.dumps(measure_to_document(tree, measure), indent=2) + "\n",
                          encoding="utf-8")
    logger.info(f"Measure written to {path}")
