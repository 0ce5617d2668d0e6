"""
Scenario Tree

Finite filtered market: a rooted tree of nodes carrying d+1 asset prices, with
physical transition probabilities on the edges. Asset 0 is the numeraire.
The filtration is the tree itself, so predictability and measurability are
structural rather than checked.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from .exceptions import DimensionMismatchError, InvalidTreeError

logger = logging.getLogger(__name__)


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class ScenarioTree:
    """
    Node-indexed market tree (recombination is not allowed).

    Nodes are stored in input order. Leaves are ordered by first appearance,
    and every leaf-indexed array in the engine (measures, claims, terminal
    values) follows that order.

    Args:
        node_ids: Unique node identifiers
        parent: Parent index per node, -1 for a root
        edge_prob: Physical probability of the edge parent -> node (1.0 at a root)
        prices: Array of shape (n_nodes, d+1); column 0 is the numeraire
        asset_names: Names of the d+1 assets
    """
    node_ids: Tuple[str, ...]
    parent: np.ndarray
    edge_prob: np.ndarray
    prices: np.ndarray
    asset_names: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        node_ids = tuple(str(n) for n in self.node_ids)
        parent = np.asarray(self.parent, dtype=int).reshape(-1)
        edge_prob = np.asarray(self.edge_prob, dtype=float).reshape(-1)
        prices = np.asarray(self.prices, dtype=float)
        n = len(node_ids)

        if len(set(node_ids)) != n:
            raise InvalidTreeError(["duplicate node ids"])
        if n == 0:
            raise InvalidTreeError(["tree has no nodes"])
        if prices.ndim != 2 or prices.shape[0] != n:
            raise DimensionMismatchError(
                f"prices must have shape (n_nodes, d+1); got {prices.shape} for {n} nodes")
        if parent.shape[0] != n or edge_prob.shape[0] != n:
            raise DimensionMismatchError("parent and edge_prob must have one entry per node")
        if np.any((parent < -1) | (parent >= n)):
            raise InvalidTreeError(["parent index out of range"])

        asset_names = tuple(self.asset_names) or tuple(
            ["numeraire"] + [f"asset{i}" for i in range(1, prices.shape[1])])
        if len(asset_names) != prices.shape[1]:
            raise DimensionMismatchError(
                f"{len(asset_names)} asset names for {prices.shape[1]} price columns")

        object.__setattr__(self, "node_ids", node_ids)
        object.__setattr__(self, "parent", _frozen(parent))
        object.__setattr__(self, "edge_prob", _frozen(edge_prob))
        object.__setattr__(self, "prices", _frozen(prices))
        object.__setattr__(self, "asset_names", asset_names)

        # depth by walking parents; a walk longer than n means a cycle
        depth = np.full(n, -1, dtype=int)
        for start in range(n):
            chain = []
            node = start
            while node != -1 and depth[node] < 0:
                chain.append(node)
                if len(chain) > n:
                    raise InvalidTreeError([f"cycle through node {node_ids[start]}"])
                node = parent[node]
            base = -1 if node == -1 else depth[node]
            for offset, member in enumerate(reversed(chain), start=1):
                depth[member] = base + offset
        object.__setattr__(self, "depth", _frozen(depth))

        children: List[List[int]] = [[] for _ in range(n)]
        for i, p in enumerate(parent):
            if p >= 0:
                children[p].append(i)
        object.__setattr__(self, "children", tuple(tuple(c) for c in children))

    # ------------------------------------------------------------------
    # construction helpers

    @classmethod
    def from_records(cls, records: Sequence[Mapping[str, Any]],
                     asset_names: Optional[Sequence[str]] = None) -> "ScenarioTree":
        """
        Build a tree from node records with keys id, parent, prob, prices.

        Args:
            records: Node records; the root has no parent (or parent None)
            asset_names: Optional asset names, numeraire first

        Returns:
            ScenarioTree
        """
        ids = [str(r["id"]) for r in records]
        position = {node_id: i for i, node_id in enumerate(ids)}
        parents = []
        for r in records:
            p = r.get("parent")
            if p is None:
                parents.append(-1)
            elif str(p) not in position:
                raise InvalidTreeError([f"node {r['id']} references unknown parent {p}"])
            else:
                parents.append(position[str(p)])
        probs = [1.0 if r.get("parent") is None else float(r.get("prob", np.nan)) for r in records]
        widths = {len(r["prices"]) for r in records}
        if len(widths) != 1:
            raise DimensionMismatchError("all nodes must carry the same number of prices")
        prices = [[float(v) for v in r["prices"]] for r in records]
        return cls(tuple(ids), np.array(parents), np.array(probs), np.array(prices),
                   tuple(asset_names or ()))

    def with_prices(self, prices: np.ndarray) -> "ScenarioTree":
        """Same filtration and physical probabilities, new price table."""
        return ScenarioTree(self.node_ids, self.parent, self.edge_prob, prices, self.asset_names)

    def with_edge_prob(self, edge_prob: np.ndarray) -> "ScenarioTree":
        """Same prices, new physical transition probabilities."""
        return ScenarioTree(self.node_ids, self.parent, edge_prob, self.prices, self.asset_names)

    # ------------------------------------------------------------------
    # shape

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def num_assets(self) -> int:
        """d + 1, numeraire included."""
        return self.prices.shape[1]

    @property
    def num_risky(self) -> int:
        return self.prices.shape[1] - 1

    @property
    def horizon(self) -> int:
        return int(self.depth.max())

    @cached_property
    def roots(self) -> np.ndarray:
        return _frozen(np.flatnonzero(self.parent == -1))

    @property
    def root(self) -> int:
        return int(self.roots[0])

    @cached_property
    def leaves(self) -> np.ndarray:
        """Node indices of the leaves, in input order."""
        return _frozen(np.array([i for i in range(self.n_nodes) if not self.children[i]], dtype=int))

    @property
    def n_leaves(self) -> int:
        return len(self.leaves)

    @cached_property
    def leaf_ids(self) -> Tuple[str, ...]:
        return tuple(self.node_ids[i] for i in self.leaves)

    @cached_property
    def internal_nodes(self) -> np.ndarray:
        """Nodes with children, breadth-first (depth, then input order)."""
        internal = [i for i in range(self.n_nodes) if self.children[i]]
        internal.sort(key=lambda i: (self.depth[i], i))
        return _frozen(np.array(internal, dtype=int))

    @cached_property
    def _index(self) -> Dict[str, int]:
        return {node_id: i for i, node_id in enumerate(self.node_ids)}

    def index(self, node_id: str) -> int:
        try:
            return self._index[str(node_id)]
        except KeyError:
            raise KeyError(f"Unknown node id: {node_id}") from None

    @cached_property
    def leaf_position(self) -> Dict[int, int]:
        """Node index of a leaf -> its position in leaf order."""
        return {int(node): pos for pos, node in enumerate(self.leaves)}

    def nodes_at_depth(self, t: int) -> np.ndarray:
        return np.flatnonzero(self.depth == t)

    # ------------------------------------------------------------------
    # paths and membership

    @cached_property
    def path_matrix(self) -> np.ndarray:
        """
        Node index at each depth along each leaf's path, shape (L, T+1).

        Only meaningful on trees whose leaves all sit at depth T.
        """
        horizon = self.horizon
        paths = np.full((self.n_leaves, horizon + 1), -1, dtype=int)
        for pos, leaf in enumerate(self.leaves):
            node = int(leaf)
            while node != -1:
                paths[pos, self.depth[node]] = node
                node = int(self.parent[node])
        return _frozen(paths)

    @cached_property
    def membership(self) -> sparse.csr_matrix:
        """Sparse (n_nodes, L) incidence: entry 1 when the leaf lies below the node."""
        rows, cols = [], []
        for pos, leaf in enumerate(self.leaves):
            node = int(leaf)
            while node != -1:
                rows.append(node)
                cols.append(pos)
                node = int(self.parent[node])
        data = np.ones(len(rows))
        return sparse.csr_matrix((data, (rows, cols)), shape=(self.n_nodes, self.n_leaves))

    def leaf_members(self, node: int) -> np.ndarray:
        """Leaf positions below a node."""
        return self.membership[node].indices.copy()

    # ------------------------------------------------------------------
    # prices and probabilities

    @cached_property
    def discounted_prices(self) -> np.ndarray:
        """S~ = S / S^0 at every node; column 0 is identically 1."""
        return _frozen(self.prices / self.prices[:, [0]])

    @cached_property
    def numeraire(self) -> np.ndarray:
        return _frozen(self.prices[:, 0])

    @cached_property
    def leaf_numeraire(self) -> np.ndarray:
        return _frozen(self.prices[self.leaves, 0])

    @cached_property
    def node_phys_prob(self) -> np.ndarray:
        """Unconditional physical probability of reaching each node."""
        prob = np.ones(self.n_nodes)
        for i in sorted(range(self.n_nodes), key=lambda k: self.depth[k]):
            p = self.parent[i]
            if p >= 0:
                prob[i] = prob[p] * self.edge_prob[i]
        return _frozen(prob)

    @cached_property
    def phys_leaf_prob(self) -> np.ndarray:
        return _frozen(self.node_phys_prob[self.leaves])

    def increments(self, node: int) -> np.ndarray:
        """Discounted risky increments S~(child) - S~(node), shape (children, d)."""
        kids = list(self.children[node])
        disc = self.discounted_prices
        return disc[kids, 1:] - disc[node, 1:]

    def node_from_leaf_values(self, values: np.ndarray, depth: int) -> np.ndarray:
        """Read a depth-measurable leaf array back onto the nodes of that depth."""
        out = np.full(self.n_nodes, np.nan)
        out[self.path_matrix[:, depth]] = values
        return out

    def describe(self) -> Dict[str, Any]:
        """Summary for logging and reports."""
        branching = [len(self.children[i]) for i in self.internal_nodes]
        return {
            "nodes": self.n_nodes,
            "leaves": self.n_leaves,
            "horizon": self.horizon,
            "risky_assets": self.num_risky,
            "max_children": max(branching) if branching else 0,
            "assets": list(self.asset_names),
        }


def iter_edges(tree: ScenarioTree) -> Iterable[Tuple[int, int]]:
    """(parent, child) pairs in breadth-first order."""
    for node in tree.internal_nodes:
        for child in tree.children[node]:
            yield int(node), int(child)
