"""
Concentration of L^p-magnitude attention rows as p shrinks toward zero.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from core.exceptions import DomainError, ShapeMismatchError
from decomposition.identities import attention_row, decompose_dot
from numerics.special import shannon_entropy

logger = logging.getLogger(__name__)

TIE_TOLERANCE = 1e-9
ONE_HOT_THRESHOLD = 1.0 - 1e-2


@dataclass
class SparsityRow:
    p: float
    row: int
    max_weight: float
    entropy: float
    argmax: int
    tied: bool
    weights: np.ndarray = field(repr=False, default=None)


@dataclass
class SparsityReport:
    rows: list
    p_grid: tuple
    tied_rows: dict
    entropy_monotone_fraction: float

    def for_p(self, p):
        return [r for r in self.rows if r.p == p]

    def one_hot_rows(self, p, threshold=ONE_HOT_THRESHOLD):
        """(untied rows at ``p``, how many of them reach ``threshold``)."""
        candidates = [r for r in self.for_p(p) if not r.tied]
        return len(candidates), sum(r.max_weight >= threshold for r in candidates)


def sparsity_limit_check(queries, keys, d_k, p_grid, tie_tolerance=TIE_TOLERANCE):
    """
    Sweep ``p_grid`` (descending) and report, per query row, the largest
    attention weight and the row's entropy.

    ``keys`` is either one key matrix shared by all queries or one key matrix
    per query. Rows whose top two log-weights lie within ``tie_tolerance``
    are flagged as tied for that p and should be left out of one-hot
    assertions; rows tied at p = 2 are logged.
    """
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    keys = np.asarray(keys, dtype=np.float64)
    if keys.ndim == 2:
        keys = np.broadcast_to(keys, (queries.shape[0],) + keys.shape)
    if keys.ndim != 3 or keys.shape[0] != queries.shape[0] or keys.shape[2] != queries.shape[1]:
        raise ShapeMismatchError("Keys do not match queries", keys.shape, queries.shape)
    p_grid = tuple(float(p) for p in p_grid)
    if not p_grid or min(p_grid) <= 0:
        raise DomainError("p grid must hold positive exponents")
    if any(b >= a for a, b in zip(p_grid, p_grid[1:])):
        raise DomainError("p grid must be strictly descending")

    rows, tied_rows = [], {}
    entropy_trace = np.zeros((len(p_grid), queries.shape[0]))
    for pi, p in enumerate(p_grid):
        tied_rows[p] = []
        for i, query in enumerate(queries):
            decomposed = [decompose_dot(query, key, d_k, p, pair=(i, j)) for j, key in enumerate(keys[i])]
            logits = np.array([w.log_unnormalized for w in decomposed])
            weights = attention_row(decomposed)
            top = np.sort(logits)[-2:]
            tied = len(logits) > 1 and (top[1] - top[0]) < tie_tolerance
            if tied:
                tied_rows[p].append(i)
            entropy = float(shannon_entropy(weights))
            entropy_trace[pi, i] = entropy
            rows.append(SparsityRow(p, i, float(weights.max()), entropy, int(np.argmax(logits)), tied, weights))
        if tied_rows[p]:
            logger.warning(f"{len(tied_rows[p])} rows have a tied argmax at p={p}; excluded from one-hot checks")

    if 2.0 in tied_rows and tied_rows[2.0]:
        logger.warning(f"Rows {tied_rows[2.0]} lack a unique argmax at p=2")

    steps = np.diff(entropy_trace, axis=0)
    monotone = np.all(steps <= 1e-12, axis=0) if len(p_grid) > 1 else np.ones(queries.shape[0], dtype=bool)
    fraction = float(np.mean(monotone))
    logger.info(f"Sparsity sweep over p={p_grid}: entropy non-increasing on {fraction:.1%} of rows")
    return SparsityReport(rows, p_grid, tied_rows, fraction)


def weight_histogram_tail_mass(weights, low=0.05, high=0.95):
    """Share of weights in [0, low] or [high, 1]."""
    weights = np.asarray(weights, dtype=np.float64).ravel()
    if weights.size == 0:
        return 0.0
    return float(np.mean((weights <= low) | (weights >= high)))
