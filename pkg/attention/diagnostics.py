"""
Per-head summaries of an attention layer: the largest similarity, the mean
magnitude, row entropies and the spread of weights across heads.
"""
from dataclasses import asdict, dataclass
from typing import List

import numpy as np

from autodiff.tape import value_of
from numerics.special import shannon_entropy


@dataclass
class HeadDiagnostics:
    head: int
    max_similarity: float
    mean_log_magnitude: float
    mean_magnitude: float
    mean_entropy: float

    def as_row(self):
        return asdict(self)


@dataclass
class AttentionDiagnostics:
    """
    ``row_max_similarity`` and ``row_entropy`` keep the (..., M, T) layout of
    the layer; ``cross_head_std`` averages the per-entry standard deviation of
    weights over heads across admissible entries.
    """
    heads: List[HeadDiagnostics]
    row_max_similarity: np.ndarray
    row_entropy: np.ndarray
    cross_head_std: float

    def as_rows(self):
        return [h.as_row() for h in self.heads]

    def summary(self):
        return {
            'max_similarity': max(h.max_similarity for h in self.heads),
            'mean_log_magnitude': float(np.mean([h.mean_log_magnitude for h in self.heads])),
            'mean_entropy': float(np.mean([h.mean_entropy for h in self.heads])),
            'cross_head_std': self.cross_head_std,
        }


def _head_axis_first(x):
    """Move the head axis to the front and flatten everything before it."""
    x = np.asarray(x)
    return np.moveaxis(x, -3, 0).reshape(x.shape[-3], -1, x.shape[-2], x.shape[-1])


def diagnostics(output):
    weights = np.asarray(value_of(output.weights))
    mask = np.broadcast_to(output.mask, weights.shape)
    log_sim = np.broadcast_to(np.asarray(value_of(output.log_similarity)), weights.shape)
    log_mag = np.broadcast_to(np.asarray(value_of(output.log_magnitude)), weights.shape)

    similarity = np.where(mask, np.exp(log_sim), -np.inf)
    row_max = np.max(similarity, axis=-1)
    row_entropy = shannon_entropy(weights, axis=-1)

    per_head_mask = _head_axis_first(mask)
    per_head_mag = _head_axis_first(log_mag)
    per_head_max = np.moveaxis(row_max, -2, 0).reshape(weights.shape[-3], -1)
    per_head_entropy = np.moveaxis(row_entropy, -2, 0).reshape(weights.shape[-3], -1)

    heads = []
    with np.errstate(over='ignore'):
        for m in range(weights.shape[-3]):
            admissible = per_head_mag[m][per_head_mask[m]]
            heads.append(HeadDiagnostics(
                head=m,
                max_similarity=float(np.max(per_head_max[m])),
                mean_log_magnitude=float(np.mean(admissible)),
                mean_magnitude=float(np.mean(np.exp(admissible))),
                mean_entropy=float(np.mean(per_head_entropy[m])),
            ))

    spread = np.std(weights, axis=-3)
    shared_mask = np.any(mask, axis=-3)
    cross_head_std = float(np.mean(spread[shared_mask])) if weights.shape[-3] > 1 else 0.0
    return AttentionDiagnostics(heads, row_max, row_entropy, cross_head_std)
