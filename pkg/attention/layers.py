"""
Multi-head attention layers in sequence (Transformer) and graph (GAT) mode.

Unnormalized weights are assembled in log space as log similarity plus
log magnitude and then row-softmaxed under the mask, so exp of squared norms
never materializes. Head axes sit at -3: weights are (..., M, T, S).
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from attention import kernels
from attention.config import Mode, Variant
from autodiff import ops
from autodiff.tape import value_of
from core.exceptions import DomainError, NonFiniteError, ShapeMismatchError

logger = logging.getLogger(__name__)


@dataclass
class AttentionOutput:
    """
    Per-head weights, contexts and the two log-space terms they came from.

    ``weights`` and ``context`` may be tape Nodes while training; the
    diagnostics read plain values through ``value_of``.
    """
    weights: Any
    context: Any
    log_similarity: Any
    log_magnitude: Any
    mask: np.ndarray
    variant: Variant
    samples: Sequence = field(default_factory=tuple)

    @property
    def heads(self):
        return tuple(self.weights.shape)[-3]

    def weight_values(self):
        return value_of(self.weights)


class GraphMask:
    """Neighbor sets N_i as a boolean adjacency; every node must see itself."""

    def __init__(self, adjacency):
        adjacency = np.asarray(adjacency, dtype=bool)
        if adjacency.ndim != 2 or adjacency.shape[0] != adjacency.shape[1]:
            raise ShapeMismatchError(f"Adjacency must be square, got {adjacency.shape}")
        missing = np.flatnonzero(~np.diag(adjacency))
        if missing.size:
            raise DomainError(f"Nodes without a self-loop: {missing.tolist()[:10]}")
        self.adjacency = adjacency

    def __repr__(self):
        return f"GraphMask(N={self.N}, edges={int(self.adjacency.sum())})"

    @property
    def N(self):
        return self.adjacency.shape[0]

    @classmethod
    def from_adjacency(cls, adjacency, self_loops=True):
        adjacency = np.array(adjacency, dtype=bool)
        if self_loops:
            np.fill_diagonal(adjacency, True)
        return cls(adjacency)

    @classmethod
    def from_neighbors(cls, neighbors, self_loops=True):
        n = len(neighbors)
        adjacency = np.zeros((n, n), dtype=bool)
        for i, row in enumerate(neighbors):
            adjacency[i, list(row)] = True
        return cls.from_adjacency(adjacency, self_loops) if self_loops else cls(adjacency)

    def neighbors(self, i):
        return np.flatnonzero(self.adjacency[i]).tolist()


def _count(counter, phase, amount):
    if counter is not None:
        counter.add(phase, int(amount))


def _normalize(logits, mask, variant, counter, rows):
    location = kernels.finite_or_none(value_of(logits), mask)
    if location is not None:
        head, row = location[-3], location[-2]
        raise NonFiniteError(f"Non-finite {variant.value} attention logit", location=f"head {head}, row {row}")
    _count(counter, 'normalization', rows)
    return ops.softmax(logits, mask=mask)


def _project(x, weight, name):
    weight_shape = tuple(np.shape(value_of(weight)))
    if len(weight_shape) != 3 or tuple(x.shape)[-1] != weight_shape[1]:
        raise ShapeMismatchError(f"Projection {name} does not match input", x.shape, weight_shape)
    return ops.matmul(ops.expand_dims(x, -3), weight)


def attend_sequence(h, params, config, samples=None, mask=None, memory=None, values=None, counter=None):
    """
    Multi-head attention of the rows of ``h`` over ``memory`` (default ``h``).

    ``params`` holds W_Q and W_K of shape (M, d_model, d_k) and, unless
    ``values`` is given, W_V of shape (M, d_model, d_v). ``values`` of shape
    (..., S, d_v) are attended directly and shared by every head. ``mask``
    broadcasts to (..., T, S); False marks inadmissible keys.
    """
    if config.mode != Mode.SEQUENCE:
        raise DomainError("attend_sequence needs a sequence-mode config")
    source = h if memory is None else memory
    q = _project(h, params['W_Q'], 'W_Q')
    k = _project(source, params['W_K'], 'W_K')
    M, d_k = tuple(q.shape)[-3], tuple(q.shape)[-1]
    if M != config.M or d_k != config.d_k:
        raise ShapeMismatchError("Projections do not match the config", (M, d_k), (config.M, config.d_k))
    if values is None:
        v = _project(source, params['W_V'], 'W_V')
    else:
        v = ops.expand_dims(values, -3)

    T, S = tuple(q.shape)[-2], tuple(k.shape)[-2]
    batch = int(np.prod(np.broadcast_shapes(tuple(h.shape)[:-2], tuple(source.shape)[:-2])))
    d_model = tuple(h.shape)[-1]
    _count(counter, 'projection', batch * M * (T + S) * d_model * d_k)
    if values is None:
        _count(counter, 'projection', batch * M * S * d_model * tuple(v.shape)[-1])

    variant = config.variant
    scale = kernels.sequence_scale(config.d_k)
    if variant in (Variant.DOT, Variant.RBF_ONLY):
        _count(counter, 'scores', batch * M * T * S * d_k)
        log_sim = kernels.log_rbf(q, k, scale)
    elif variant == Variant.EXPSIN:
        _count(counter, 'scores', batch * M * T * S * d_k)
        log_sim = kernels.log_periodic(q, k, config.period, config.lengthscale)
    elif variant == Variant.LINEAR:
        _count(counter, 'scores', batch * M * T * S * d_k)
        log_sim = kernels.log_linear(q, k)
    else:
        if samples is None or len(samples) != M:
            raise DomainError(f"{variant.value} needs one spectral sample per head")
        points, points2 = kernels.stack_points(samples)
        P = tuple(points.shape)[-2]
        sets = 2 if points2 is not None else 1
        _count(counter, 'features', batch * M * (T + S) * d_k * P * sets)
        _count(counter, 'kernel', batch * M * T * S * P * 2)
        log_sim = kernels.log_kernel_squared(kernels.kernel_matrix(q, k, points, points2))

    if variant == Variant.RBF_ONLY:
        log_mag = np.zeros(tuple(value_of(log_sim).shape))
    else:
        _count(counter, 'magnitude', batch * M * (T + S) * d_k)
        log_mag = kernels.log_magnitude(q, k, config.p, scale)

    logits = log_sim + log_mag
    full_shape = tuple(logits.shape)
    if mask is None:
        full_mask = np.ones(full_shape, dtype=bool)
    else:
        full_mask = np.broadcast_to(np.expand_dims(np.asarray(mask, dtype=bool), -3), full_shape)
    weights = _normalize(logits, full_mask, variant, counter, batch * M * T * S)
    _count(counter, 'context', batch * M * T * S * tuple(v.shape)[-1])
    context = ops.matmul(weights, v)
    return AttentionOutput(weights, context, log_sim, log_mag, full_mask, variant, tuple(samples or ()))


def gat_scores(Wh, a):
    """Per-head source and target scores s_i = a1.Wh_i, t_j = a2.Wh_j."""
    d = tuple(Wh.shape)[-1]
    a_shape = tuple(np.shape(value_of(a)))
    if a_shape[-1] != 2 * d:
        raise ShapeMismatchError("Attention vector must have twice the head width", a_shape, (2 * d,))
    a_src = ops.expand_dims(a[..., :d], -2)
    a_dst = ops.expand_dims(a[..., d:], -2)
    return ops.sum(Wh * a_src, axis=-1), ops.sum(Wh * a_dst, axis=-1)


def attend_graph(h, params, mask, config, samples=None, counter=None):
    """
    GAT-style attention of every node over its neighbors.

    ``params`` holds W of shape (M, d_in, d_head) and a of shape
    (M, 2 d_head). With q_i = [W h_i, 0] and k_j = [0, W h_j] the
    LeakyReLU score is split into similarity factors around the anchor
    c_ij a, where c_ij is 1 on the non-negative branch and c otherwise.
    """
    if config.mode != Mode.GRAPH:
        raise DomainError("attend_graph needs a graph-mode config")
    if not isinstance(mask, GraphMask):
        raise DomainError("attend_graph needs a GraphMask")
    N = tuple(h.shape)[-2]
    if mask.N != N:
        raise ShapeMismatchError("Graph mask does not match node count", (mask.N,), (N,))
    Wh = _project(h, params['W'], 'W')
    M, d = tuple(Wh.shape)[-3], tuple(Wh.shape)[-1]
    if M != config.M:
        raise ShapeMismatchError("Projection head count does not match the config", (M,), (config.M,))
    a = params['a']
    src, dst = gat_scores(Wh, a)
    pre = ops.expand_dims(src, -1) + ops.expand_dims(dst, -2)
    c_eff = np.where(value_of(pre) >= 0.0, 1.0, config.c)
    _count(counter, 'projection', M * N * tuple(h.shape)[-1] * d)
    _count(counter, 'scores', M * N * N)

    variant = config.variant
    p = config.p
    a_sq = ops.expand_dims(ops.expand_dims(kernels.squared_norms(a, 2.0), -1), -1)
    a_sq_p = ops.expand_dims(ops.expand_dims(kernels.squared_norms(a, p), -1), -1)
    node_sq_p = kernels.squared_norms(Wh, p)
    log_mag = c_eff * c_eff * a_sq_p + (ops.expand_dims(node_sq_p, -1) + ops.expand_dims(node_sq_p, -2)) / 2.0

    if variant in (Variant.DOT, Variant.RBF_ONLY):
        node_sq = kernels.squared_norms(Wh, 2.0)
        log_sim = c_eff * pre - c_eff * c_eff * a_sq - (ops.expand_dims(node_sq, -1) + ops.expand_dims(node_sq, -2)) / 2.0
    elif variant in (Variant.EXPSIN, Variant.LINEAR):
        raise DomainError(f"{variant.value} has no graph-mode decomposition")
    else:
        if samples is None or len(samples) != M:
            raise DomainError(f"{variant.value} needs one spectral sample per head")
        log_sim = _graph_kernel_log_similarity(Wh, a, c_eff, samples, d, counter)

    if variant == Variant.RBF_ONLY:
        log_mag = np.zeros(tuple(value_of(log_sim).shape))
    else:
        _count(counter, 'magnitude', M * N * d)

    logits = log_sim + log_mag
    full_mask = np.broadcast_to(mask.adjacency, tuple(logits.shape))
    weights = _normalize(logits, full_mask, variant, counter, M * N * N)
    context = ops.matmul(weights, Wh)
    _count(counter, 'context', M * N * N * d)
    return AttentionOutput(weights, context, log_sim, log_mag, full_mask, variant, tuple(samples or ()))


def _graph_kernel_log_similarity(Wh, a, c_eff, samples, d, counter):
    """
    log f(q_i, c a)^2 + log f(c a, k_j)^2 with q_i = [W h_i, 0] and
    k_j = [0, W h_j]; the anchor depends on the pair through c_ij.
    """
    points, points2 = kernels.stack_points(samples)
    if tuple(points.shape)[-1] != 2 * d:
        raise ShapeMismatchError("Graph spectral points must span both halves", points.shape, (2 * d,))
    P = tuple(points.shape)[-2]
    _count(counter, 'features', Wh.shape[-3] * Wh.shape[-2] * d * P * (2 if points2 is not None else 1))
    _count(counter, 'kernel', c_eff.size * P * 2)

    def angles(w):
        src = ops.matmul(Wh, ops.transpose(w[..., :d]))
        dst = ops.matmul(Wh, ops.transpose(w[..., d:]))
        anchor = ops.sum(ops.expand_dims(a, -2) * w, axis=-1)
        anchor = ops.expand_dims(ops.expand_dims(anchor, -2), -2) * c_eff[..., None]
        return ops.expand_dims(src, -2), ops.expand_dims(dst, -3), anchor

    src, dst, anchor = angles(points)
    if points2 is None:
        f_left = kernels.kernel_from_angles(src, anchor)
        f_right = kernels.kernel_from_angles(anchor, dst)
    else:
        src2, dst2, anchor2 = angles(points2)
        f_left = kernels.kernel_from_angles(src, anchor, src2, anchor2)
        f_right = kernels.kernel_from_angles(anchor, dst, anchor2, dst2)
    return kernels.log_kernel_squared(f_left) + kernels.log_kernel_squared(f_right)
