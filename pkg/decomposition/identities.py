"""
Similarity x magnitude factorizations of attention weights.

Scaled dot-product attention splits as

    exp(q.k / sqrt(d_k)) = exp(-|q - k|^2 / (2 sqrt(d_k)))          similarity
                         * exp((|q|_p^2 + |k|_p^2) / (2 sqrt(d_k)))  magnitude

with equality at p = 2, and GAT's LeakyReLU score splits the same way around
the scaled attention vector c_eff * a. Factors are stored as logarithms;
the ``similarity``/``magnitude``/``unnormalized`` properties exponentiate on
demand and may overflow for large norms.
"""
import math
from dataclasses import dataclass

import numpy as np

from core.exceptions import DomainError, EmptyRowError, ShapeMismatchError
from numerics.linalg import as_matrix, as_vector
from numerics.special import p_norm, stable_softmax


@dataclass(frozen=True)
class DecomposedWeight:
    log_similarity: float
    log_magnitude: float
    pair: tuple = (0, 0)

    @property
    def log_unnormalized(self):
        return self.log_similarity + self.log_magnitude

    @property
    def similarity(self):
        return math.exp(self.log_similarity)

    @property
    def magnitude(self):
        return math.exp(self.log_magnitude)

    @property
    def unnormalized(self):
        return math.exp(self.log_unnormalized)

    @classmethod
    def from_unnormalized(cls, value, pair=(0, 0)):
        """Wrap a bare positive weight as pure magnitude."""
        if not value > 0:
            raise DomainError(f"Unnormalized weight must be positive, got {value}")
        return cls(0.0, math.log(value), pair)


@dataclass(frozen=True)
class GatPair:
    q: np.ndarray
    k: np.ndarray
    a: np.ndarray
    c_eff: float

    @property
    def pre_activation(self):
        return float(self.a @ (self.q + self.k))


def _check_pair(q, k):
    q = as_vector(q, 'query')
    k = as_vector(k, 'key')
    if q.shape != k.shape:
        raise ShapeMismatchError("Query and key lengths differ", q.shape, k.shape)
    return q, k


def decompose_dot(q, k, d_k, p=2.0, pair=(0, 0)):
    """Split exp(q.k / sqrt(d_k)) into similarity and L^p magnitude."""
    q, k = _check_pair(q, k)
    if d_k < 1:
        raise DomainError(f"d_k must be at least 1, got {d_k}")
    scale = 2.0 * math.sqrt(d_k)
    delta = q - k
    log_similarity = -float(delta @ delta) / scale
    log_magnitude = (float(p_norm(q, p)) ** 2 + float(p_norm(k, p)) ** 2) / scale
    return DecomposedWeight(log_similarity, log_magnitude, pair)


def gat_pair(h_i, h_j, W, a, c):
    """
    Build q_i = [W h_i | 0], k_j = [0 | W h_j] and pick the LeakyReLU slope
    of the pair's sign region (1 at a non-negative pre-activation, else c).
    """
    W = as_matrix(W, 'W')
    h_i, h_j = _check_pair(h_i, h_j)
    if W.shape[1] != h_i.shape[0]:
        raise ShapeMismatchError("W does not accept node features", W.shape, h_i.shape)
    a = as_vector(a, 'attention vector')
    if a.shape[0] != 2 * W.shape[0]:
        raise ShapeMismatchError("Attention vector must have twice W's output size", a.shape, (2 * W.shape[0],))
    if not 0.0 < c <= 1.0:
        raise DomainError(f"LeakyReLU slope must lie in (0, 1], got {c}")
    zeros = np.zeros(W.shape[0])
    q = np.concatenate([W @ h_i, zeros])
    k = np.concatenate([zeros, W @ h_j])
    c_eff = 1.0 if float(a @ (q + k)) >= 0.0 else float(c)
    return GatPair(q, k, a, c_eff)


def decompose_gat(h_i, h_j, W, a, c, p=2.0, pair=(0, 0)):
    """Split exp(LeakyReLU(a . [W h_i | W h_j])) around the anchor c_eff * a."""
    gp = gat_pair(h_i, h_j, W, a, c)
    anchor = gp.c_eff * gp.a
    to_query = gp.q - anchor
    to_key = anchor - gp.k
    log_similarity = -0.5 * float(to_query @ to_query) - 0.5 * float(to_key @ to_key)
    log_magnitude = 0.5 * (
        2.0 * float(p_norm(anchor, p)) ** 2 + float(p_norm(gp.q, p)) ** 2 + float(p_norm(gp.k, p)) ** 2
    )
    return DecomposedWeight(log_similarity, log_magnitude, pair)


def attention_row(weights):
    """
    Normalize one row of unnormalized weights.

    Accepts DecomposedWeight items or bare positive reals; normalization runs
    on log weights with max-subtraction, so rows whose exponentials overflow
    are still handled.
    """
    weights = list(weights)
    if not weights:
        raise EmptyRowError("Attention row has no entries")
    logs = np.array([
        w.log_unnormalized if isinstance(w, DecomposedWeight)
        else DecomposedWeight.from_unnormalized(float(w)).log_unnormalized
        for w in weights
    ])
    return stable_softmax(logs)


def identity_error(weight, log_target):
    """Relative error |product / exp(log_target) - 1| computed in log space."""
    return abs(math.expm1(weight.log_unnormalized - log_target))
