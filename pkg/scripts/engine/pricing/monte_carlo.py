"""
Feynman-Kac Monte Carlo

Risk-neutral expectation e^{-r tau} E*((S_T - K)^+) by exact lognormal
sampling of S_T = S exp((r - sigma^2/2) tau + sigma sqrt(tau) Z). Paths are
split across substreams spawned from one SeedSequence, and the per-substream
sums are combined in substream order, so the estimate depends only on
(seed, n_paths, substreams) and not on how many workers ran them.
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Tuple

import numpy as np
from joblib import Parallel, delayed

from .black_scholes import ClosedFormParams

logger = logging.getLogger(__name__)

MIN_PATHS = 1000
CHUNK = 250_000
MAX_SEED = 2 ** 64 - 1


@dataclass
class McEstimate:
    """Discounted mean payoff with its standard error."""
    price: float
    stderr: float
    n_paths: int
    seed: int
    substreams: int

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _substream_sums(params: ClosedFormParams, kind: str, seed_seq: np.random.SeedSequence,
                    n_paths: int) -> Tuple[float, float]:
    """Sum and sum of squares of discounted payoffs on one substream."""
    rng = np.random.default_rng(seed_seq)
    drift = (params.rate - 0.5 * params.volatility ** 2) * params.tau
    scale = params.volatility * math.sqrt(params.tau)
    total, total_sq = 0.0, 0.0
    remaining = n_paths
    while remaining > 0:
        size = min(CHUNK, remaining)
        terminal = params.spot * np.exp(drift + scale * rng.standard_normal(size))
        if kind == "call":
            payoff = np.maximum(terminal - params.strike, 0.0)
        else:
            payoff = np.maximum(params.strike - terminal, 0.0)
        payoff *= params.discount
        total += float(payoff.sum())
        total_sq += float(payoff @ payoff)
        remaining -= size
    return total, total_sq


def split_paths(n_paths: int, substreams: int) -> List[int]:
    """Path counts per substream; the first n_paths % substreams get one extra."""
    base, extra = divmod(n_paths, substreams)
    return [base + (1 if k < extra else 0) for k in range(substreams)]


def feynman_kac_mc(params: ClosedFormParams, n_paths: int, seed: int, substreams: int = 8,
                   n_jobs: int = 1, kind: str = "call") -> McEstimate:
    """
    Monte Carlo price of a European call (or put) under the risk-neutral drift.

    Args:
        params: ClosedFormParams
        n_paths: Number of samples (at least 1000)
        seed: Master seed, 0 <= seed < 2^64
        substreams: Independent streams spawned from the master seed
        n_jobs: joblib workers (does not change the result)
        kind: 'call' or 'put'

    Returns:
        McEstimate
    """
    if n_paths < MIN_PATHS:
        raise ValueError(f"n_paths must be at least {MIN_PATHS}; got {n_paths}")
    if not 0 <= seed <= MAX_SEED:
        raise ValueError("seed must be a 64-bit unsigned integer")
    if substreams < 1:
        raise ValueError("substreams must be at least 1")
    if kind not in ("call", "put"):
        raise ValueError(f"kind must be 'call' or 'put'; got '{kind}'")

    children = np.random.SeedSequence(seed).spawn(substreams)
    counts = split_paths(n_paths, substreams)
    sums = Parallel(n_jobs=n_jobs)(
        delayed(_substream_sums)(params, kind, child, count)
        for child, count in zip(children, counts))

    total = math.fsum(s for s, _ in sums)
    total_sq = math.fsum(q for _, q in sums)
    mean = total / n_paths
    variance = max(total_sq / n_paths - mean * mean, 0.0) * n_paths / (n_paths - 1)
    stderr = math.sqrt(variance / n_paths)
    logger.debug(f"MC {kind}: {mean:.8g} +/- {stderr:.2g} over {n_paths} paths")
    return McEstimate(mean, stderr, n_paths, seed, substreams)
