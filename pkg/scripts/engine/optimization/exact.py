"""
Exact Certification

Re-verifies an FFTAP certificate in rational arithmetic. Prices come from the
raw decimal text of the input file when available, so "0.1" means 1/10 rather
than its binary neighbour.
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence

from ..core.scenario_tree import ScenarioTree
from .arbitrage_engine import ArbitrageCertificate

logger = logging.getLogger(__name__)

DENOMINATOR_LADDER = (10**3, 10**6, 10**9, 10**12)

Matrix = List[List[Fraction]]


@dataclass
class ExactCertificate:
    """Rational re-verification of a certificate; `verified` is the exact verdict."""
    kind: str
    verified: bool
    leaf_prob: Dict[str, Fraction] = field(default_factory=dict)
    positions: Dict[str, List[Fraction]] = field(default_factory=dict)
    terminal_discounted: Dict[str, Fraction] = field(default_factory=dict)
    message: str = ""

    def to_dict(self) -> Dict[str, Any]:
        def text(mapping):
            return {key: str(value) for key, value in mapping.items()}
        return {
            "kind": self.kind,
            "verified": self.verified,
            "leaf_prob": text(self.leaf_prob),
            "positions": {k: [str(v) for v in row] for k, row in self.positions.items()},
            "terminal_discounted": text(self.terminal_discounted),
            "message": self.message,
        }


def parse_exact(raw: Any) -> Fraction:
    """Decimal text, 'p/q' text, int or float to an exact Fraction."""
    if isinstance(raw, Fraction):
        return raw
    if isinstance(raw, str):
        return Fraction(raw.strip())
    if isinstance(raw, int):
        return Fraction(raw)
    return Fraction(float(raw))


def _independent_rows(rows: Matrix) -> List[int]:
    """Indices of a maximal linearly independent subset, by Gauss-Jordan elimination."""
    work = [list(r) for r in rows]
    chosen: List[int] = []
    basis: List[List[Fraction]] = []
    pivots: List[int] = []
    for index, row in enumerate(work):
        row = list(row)
        for b, p in zip(basis, pivots):
            if row[p] != 0:
                factor = row[p] / b[p]
                row = [x - factor * y for x, y in zip(row, b)]
        pivot = next((j for j, x in enumerate(row) if x != 0), None)
        if pivot is None:
            continue
        basis.append(row)
        pivots.append(pivot)
        chosen.append(index)
    return chosen


def _solve_square(matrix: Matrix, rhs: List[Fraction]) -> List[Fraction]:
    n = len(matrix)
    aug = [list(matrix[i]) + [rhs[i]] for i in range(n)]
    for col in range(n):
        pivot = next(r for r in range(col, n) if aug[r][col] != 0)
        aug[col], aug[pivot] = aug[pivot], aug[col]
        lead = aug[col][col]
        aug[col] = [x / lead for x in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                factor = aug[r][col]
                aug[r] = [x - factor * y for x, y in zip(aug[r], aug[col])]
    return [aug[i][n] for i in range(n)]


def _min_norm_correction(system: Matrix, residual: List[Fraction]) -> List[Fraction]:
    """x of minimum norm with system . x = residual, restricted to independent rows."""
    keep = _independent_rows(system)
    rows = [system[i] for i in keep]
    gram = [[sum(a * b for a, b in zip(ri, rj)) for rj in rows] for ri in rows]
    y = _solve_square(gram, [residual[i] for i in keep])
    width = len(system[0])
    return [sum(rows[k][j] * y[k] for k in range(len(rows))) for j in range(width)]


def exact_discounted(tree: ScenarioTree,
                     exact_prices: Optional[Sequence[Sequence[Any]]] = None) -> Matrix:
    """S~ in Fractions; falls back to the exact value of each stored double."""
    source = exact_prices if exact_prices is not None else tree.prices.tolist()
    table = [[parse_exact(v) for v in row] for row in source]
    return [[v / row[0] for v in row] for row in table]


def _certify_emm(tree: ScenarioTree, certificate: ArbitrageCertificate,
                 disc: Matrix) -> ExactCertificate:
    cond_float = certificate.emm.conditional_prob(tree)
    for limit in DENOMINATOR_LADDER:
        cond = [Fraction(1)] * tree.n_nodes
        ok = True
        for node in tree.internal_nodes:
            kids = list(tree.children[node])
            p = [Fraction(float(cond_float[c])).limit_denominator(limit) for c in kids]
            system = [[Fraction(1)] * len(kids)]
            for i in range(1, tree.num_assets):
                system.append([disc[c][i] - disc[node][i] for c in kids])
            target = [Fraction(1)] + [Fraction(0)] * (len(system) - 1)
            residual = [sum(a * x for a, x in zip(row, p)) - t for row, t in zip(system, target)]
            if any(r != 0 for r in residual):
                correction = _min_norm_correction(system, residual)
                p = [x - c for x, c in zip(p, correction)]
            if any(x <= 0 for x in p) or any(
                    sum(a * x for a, x in zip(row, p)) != t for row, t in zip(system, target)):
                ok = False
                break
            for c, x in zip(kids, p):
                cond[c] = x
        if ok:
            leaf_prob = {}
            for pos, leaf in enumerate(tree.leaves):
                prob = Fraction(1)
                for node in tree.path_matrix[pos, 1:]:
                    prob *= cond[node]
                leaf_prob[tree.node_ids[leaf]] = prob
            logger.debug(f"Exact EMM certified with denominators up to {limit}")
            return ExactCertificate("emm", True, leaf_prob=leaf_prob,
                                    message=f"martingale equalities hold exactly (denominator limit {limit})")
    return ExactCertificate("emm", False, message="no rational EMM found near the floating-point one")


def _certify_arbitrage(tree: ScenarioTree, certificate: ArbitrageCertificate,
                       disc: Matrix) -> ExactCertificate:
    risky_float = certificate.arbitrage.risky
    d = tree.num_risky
    for limit in DENOMINATOR_LADDER:
        positions: Dict[int, List[Fraction]] = {}
        carried = {tree.root: Fraction(0)}
        values = {tree.root: Fraction(0)}
        for node in tree.internal_nodes:
            risky = [Fraction(float(x)).limit_denominator(limit) for x in risky_float[node]]
            numeraire = carried[node] - sum(r * s for r, s in zip(risky, disc[node][1:]))
            row = [numeraire] + risky
            positions[node] = row
            for child in tree.children[node]:
                carried[child] = sum(x * s for x, s in zip(row, disc[child]))
                values[child] = carried[child]
        terminal = [values[int(leaf)] for leaf in tree.leaves]
        admissible = all(v >= 0 for v in values.values())
        if admissible and values[tree.root] == 0 and any(v > 0 for v in terminal):
            logger.debug(f"Exact arbitrage certified with denominators up to {limit}")
            return ExactCertificate(
                "arbitrage", True,
                positions={tree.node_ids[n]: row for n, row in positions.items()
                           if any(x != 0 for x in row[1:]) or n == tree.root},
                terminal_discounted={tree.node_ids[int(leaf)]: values[int(leaf)] for leaf in tree.leaves},
                message=f"admissible arbitrage verified exactly (denominator limit {limit}, d={d})")
    return ExactCertificate("arbitrage", False,
                            message="rationalized positions lose the arbitrage property")


def certify_exact(tree: ScenarioTree, certificate: ArbitrageCertificate,
                  exact_prices: Optional[Sequence[Sequence[Any]]] = None) -> ExactCertificate:
    """
    Re-verify a certificate in rational arithmetic.

    EMM: conditional probabilities are rationalized and corrected exactly onto
    the nodewise martingale equalities. Arbitrage: risky positions are
    rationalized and the self-financing numeraire leg and value process are
    recomputed exactly.

    Args:
        tree: Scenario tree
        certificate: Floating-point certificate from fftap_verdict
        exact_prices: Raw price entries per node (decimal strings keep their exact value)

    Returns:
        ExactCertificate
    """
    disc = exact_discounted(tree, exact_prices)
    if certificate.emm is not None:
        return _certify_emm(tree, certificate, disc)
    return _certify_arbitrage(tree, certificate, disc)
