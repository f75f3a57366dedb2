"""
Random Fourier feature maps and the kernels they induce.

Stationary: phi_r(x) = (cos w_r.x, sin w_r.x), f(q, k) = (1/R) sum_r cos(w_r.(q - k)).
Non-stationary: phi_r(x) = (cos w1_r.x + cos w2_r.x, sin w1_r.x + sin w2_r.x),
f(q, k) = (1/4R) sum_r phi_r(q).phi_r(k).
"""
import numpy as np

from core.exceptions import DomainError, ShapeMismatchError
from spectral.samples import SampleKind


def _points(sample):
    points = np.asarray(sample.points, dtype=np.float64)
    if points.ndim != 2:
        raise ShapeMismatchError(f"Expected one (R, d) point set, got shape {points.shape}")
    return points


def _check_input(x, points):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != points.shape[1]:
        raise ShapeMismatchError("Input does not match spectral dimension", x.shape, points.shape)
    return x


def _interleave(cos_part, sin_part):
    return np.stack([cos_part, sin_part], axis=-1).reshape(cos_part.shape[:-1] + (2 * cos_part.shape[-1],))


def features_stationary(x, sample):
    """[cos w_1.x, sin w_1.x, ..., cos w_R.x, sin w_R.x] for x of shape (..., d)."""
    if sample.kind != SampleKind.STATIONARY:
        raise DomainError("Stationary features need a stationary sample")
    points = _points(sample)
    angles = _check_input(x, points) @ points.T
    return _interleave(np.cos(angles), np.sin(angles))


def features_nonstationary(x, sample):
    """Summed cos/sin features of a non-stationary point pair."""
    if sample.kind != SampleKind.NONSTATIONARY_PAIR:
        raise DomainError("Non-stationary features need a point pair")
    points = _points(sample)
    second = np.asarray(sample.points2, dtype=np.float64)
    x = _check_input(x, points)
    a1, a2 = x @ points.T, x @ second.T
    return _interleave(np.cos(a1) + np.cos(a2), np.sin(a1) + np.sin(a2))


def kernel_stationary(q, k, sample):
    """(1/R) sum_r cos(w_r.(q - k)); depends on q - k only."""
    if sample.kind != SampleKind.STATIONARY:
        raise DomainError("Stationary kernel needs a stationary sample")
    points = _points(sample)
    q = _check_input(q, points)
    k = _check_input(k, points)
    try:
        np.broadcast_shapes(q.shape, k.shape)
    except ValueError:
        raise ShapeMismatchError("Query and key shapes do not broadcast", q.shape, k.shape)
    return np.mean(np.cos((q - k) @ points.T), axis=-1)


def kernel_nonstationary(q, k, sample):
    """(1/4R) sum_r phi_r(q).phi_r(k) for a non-stationary point pair."""
    fq = features_nonstationary(q, sample)
    fk = features_nonstationary(k, sample)
    try:
        np.broadcast_shapes(fq.shape, fk.shape)
    except ValueError:
        raise ShapeMismatchError("Query and key shapes do not broadcast", np.shape(q), np.shape(k))
    return np.sum(fq * fk, axis=-1) / (4.0 * sample.R)


def kernel_value(q, k, sample):
    if sample.kind == SampleKind.NONSTATIONARY_PAIR:
        return kernel_nonstationary(q, k, sample)
    return kernel_stationary(q, k, sample)


def kernel_squared(q, k, sample):
    """f(q, k)^2, the non-negative similarity used by implicit kernel attention."""
    value = kernel_value(q, k, sample)
    return value * value


def kernel_matrix(X, Y, sample):
    """Gram matrix f(X_i, Y_j) assembled from feature inner products."""
    if sample.kind == SampleKind.NONSTATIONARY_PAIR:
        return features_nonstationary(X, sample) @ features_nonstationary(Y, sample).T / (4.0 * sample.R)
    return features_stationary(X, sample) @ features_stationary(Y, sample).T / sample.R


def rbf_closed_form(q, k, lengthscale):
    """exp(-|q - k|^2 / (2 l^2))."""
    if not lengthscale > 0:
        raise DomainError(f"Lengthscale must be positive, got {lengthscale}")
    delta = np.asarray(q, dtype=np.float64) - np.asarray(k, dtype=np.float64)
    return np.exp(-np.sum(delta * delta, axis=-1) / (2.0 * lengthscale ** 2))


def gaussian_pair_kernel(q, k, mean1, mean2, variance):
    """
    Exact non-stationary kernel for independent w1 ~ N(mean1, s^2 I) and
    w2 ~ N(mean2, s^2 I), using E cos(a) = exp(-Var a / 2) cos(E a).
    """
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    m1 = np.broadcast_to(np.asarray(mean1, dtype=np.float64), q.shape[-1:])
    m2 = np.broadcast_to(np.asarray(mean2, dtype=np.float64), q.shape[-1:])
    delta = q - k
    dd = np.sum(delta * delta, axis=-1)
    spread = np.sum(q * q, axis=-1) + np.sum(k * k, axis=-1)
    same = np.exp(-0.5 * variance * dd) * (np.cos(delta @ m1) + np.cos(delta @ m2))
    cross = np.exp(-0.5 * variance * spread) * (np.cos(q @ m1 - k @ m2) + np.cos(q @ m2 - k @ m1))
    return 0.25 * (same + cross)


def periodic_closed_form(q, k, period=1.0, lengthscale=1.0):
    """exp(-2 sin^2(pi |q - k| / period) / l^2)."""
    if not (period > 0 and lengthscale > 0):
        raise DomainError("Period and lengthscale must be positive")
    delta = np.asarray(q, dtype=np.float64) - np.asarray(k, dtype=np.float64)
    distance = np.sqrt(np.sum(delta * delta, axis=-1))
    return np.exp(-2.0 * np.sin(np.pi * distance / period) ** 2 / lengthscale ** 2)
