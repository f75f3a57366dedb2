"""
Log-space similarity and magnitude terms.

Every function is dual-mode: plain arrays in, plain arrays out; tape Nodes
in, Nodes out. Queries have shape (..., T, d) and keys (..., S, d); the
pairwise results have shape (..., T, S).
"""
import math

import numpy as np

from autodiff import ops
from core.exceptions import DomainError, ShapeMismatchError

KERNEL_FLOOR = 1e-12
LINEAR_FLOOR = 1e-6
DISTANCE_FLOOR = 1e-12


def _check_pair(q, k):
    if tuple(q.shape)[-1] != tuple(k.shape)[-1]:
        raise ShapeMismatchError("Query and key widths differ", q.shape, k.shape)


def squared_norms(x, p=2.0):
    """||x||_p^2 along the last axis."""
    if p == 2.0:
        return ops.sum(ops.square(x), axis=-1)
    return ops.square(ops.lp_norm(x, p))


def squared_distance(q, k):
    """|q_i - k_j|^2 through the Gram expansion, clamped at zero."""
    _check_pair(q, k)
    qq = ops.expand_dims(ops.sum(ops.square(q), axis=-1), -1)
    kk = ops.expand_dims(ops.sum(ops.square(k), axis=-1), -2)
    cross = ops.matmul(q, ops.transpose(k))
    return ops.maximum(qq + kk - 2.0 * cross, 0.0)


def log_magnitude(q, k, p, scale):
    """(||q_i||_p^2 + ||k_j||_p^2) / scale."""
    _check_pair(q, k)
    nq = ops.expand_dims(squared_norms(q, p), -1)
    nk = ops.expand_dims(squared_norms(k, p), -2)
    return (nq + nk) / scale


def log_rbf(q, k, scale):
    return -squared_distance(q, k) / scale


def log_periodic(q, k, period=1.0, lengthscale=1.0):
    """-2 sin^2(pi |q - k| / period) / l^2."""
    distance = ops.sqrt(squared_distance(q, k) + DISTANCE_FLOOR)
    return -2.0 * ops.square(ops.sin(math.pi * distance / period)) / (lengthscale ** 2)


def log_linear(q, k):
    """log(max(q.k, 0) + 1e-6)."""
    _check_pair(q, k)
    return ops.log(ops.maximum(ops.matmul(q, ops.transpose(k)), 0.0) + LINEAR_FLOOR)


def stack_points(samples):
    """
    Stack per-head spectral points at axis -3.

    Returns ``(points, points2)`` of shape (..., M, P, d); ``points2`` is
    None for stationary samples.
    """
    if not samples:
        raise DomainError("Kernel attention needs one spectral sample per head")
    kinds = {s.kind for s in samples}
    if len(kinds) != 1:
        raise DomainError("Heads mix stationary and non-stationary samples")
    points = ops.stack([s.points for s in samples], axis=-3)
    if samples[0].is_nonstationary:
        return points, ops.stack([s.points2 for s in samples], axis=-3)
    return points, None


def trig_features(x, points, points2=None):
    """
    (C, S) with C = cos(x W^T) and S = sin(x W^T); a point pair sums the two
    angle sets. ``x`` is (..., M, T, d), points (..., M, P, d).
    """
    if tuple(x.shape)[-1] != tuple(points.shape)[-1]:
        raise ShapeMismatchError("Input does not match spectral dimension", x.shape, points.shape)
    angles = ops.matmul(x, ops.transpose(points))
    cos_part, sin_part = ops.cos(angles), ops.sin(angles)
    if points2 is not None:
        angles2 = ops.matmul(x, ops.transpose(points2))
        cos_part = cos_part + ops.cos(angles2)
        sin_part = sin_part + ops.sin(angles2)
    return cos_part, sin_part


def kernel_matrix(q, k, points, points2=None):
    """Monte Carlo kernel f(q_i, k_j) from feature inner products."""
    cq, sq = trig_features(q, points, points2)
    ck, sk = trig_features(k, points, points2)
    count = tuple(points.shape)[-2]
    norm = 4.0 * count if points2 is not None else float(count)
    return (ops.matmul(cq, ops.transpose(ck)) + ops.matmul(sq, ops.transpose(sk))) / norm


def kernel_from_angles(x_angles, y_angles, x_angles2=None, y_angles2=None):
    """
    f(x, y) averaged over the trailing point axis from precomputed angles
    w.x and w.y; broadcasting pairs the leading axes.
    """
    if x_angles2 is None:
        return ops.mean(ops.cos(x_angles - y_angles), axis=-1)
    cos_part = (ops.cos(x_angles) + ops.cos(x_angles2)) * (ops.cos(y_angles) + ops.cos(y_angles2))
    sin_part = (ops.sin(x_angles) + ops.sin(x_angles2)) * (ops.sin(y_angles) + ops.sin(y_angles2))
    return ops.mean(cos_part + sin_part, axis=-1) / 4.0


def log_kernel_squared(f):
    """log(f^2 + 1e-12)."""
    return ops.log(ops.square(f) + KERNEL_FLOOR)


def sequence_scale(d_k):
    return 2.0 * math.sqrt(d_k)


def finite_or_none(values, mask):
    """Index of the first non-finite admissible entry, or None."""
    values = np.asarray(values)
    bad = ~np.isfinite(values) & np.broadcast_to(mask, values.shape)
    if not bad.any():
        return None
    return tuple(int(i) for i in np.argwhere(bad)[0])
