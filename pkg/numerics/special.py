"""
Numerically stable scalar and row-wise primitives: softmax, Lp norms,
Shannon entropy and the standard normal CDF/quantile pair.
"""
import numpy as np
from scipy import special

from core.exceptions import DomainError, EmptyRowError, NonFiniteError

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


def _apply_mask(logits, mask, axis):
    logits = np.asarray(logits, dtype=np.float64)
    if mask is None:
        admissible = np.ones(logits.shape, dtype=bool)
    else:
        admissible = np.broadcast_to(np.asarray(mask, dtype=bool), logits.shape)
    if not np.all(np.any(admissible, axis=axis)):
        raise EmptyRowError("Softmax row has every entry masked")
    if not np.all(np.isfinite(logits[admissible])):
        raise NonFiniteError("Non-finite logit in softmax input")
    return np.where(admissible, logits, -np.inf), admissible


def stable_softmax(logits, mask=None, axis=-1):
    """
    Softmax along ``axis`` via max-subtraction.

    Masked entries (``mask`` False) come out exactly 0; a row with no
    unmasked entry raises EmptyRowError.
    """
    shifted, admissible = _apply_mask(logits, mask, axis)
    shifted = shifted - np.max(shifted, axis=axis, keepdims=True)
    exps = np.where(admissible, np.exp(shifted), 0.0)
    return exps / np.sum(exps, axis=axis, keepdims=True)


def log_softmax(logits, mask=None, axis=-1):
    """Log of ``stable_softmax``; masked entries are -inf."""
    shifted, admissible = _apply_mask(logits, mask, axis)
    shifted = shifted - np.max(shifted, axis=axis, keepdims=True)
    lse = np.log(np.sum(np.where(admissible, np.exp(shifted), 0.0), axis=axis, keepdims=True))
    return np.where(admissible, shifted - lse, -np.inf)


def p_norm(x, p, axis=-1):
    """
    (sum |x_i|^p)^(1/p) along ``axis`` for any p > 0.

    Computed relative to max |x_i| so that small p does not overflow for
    moderate inputs; absolutely homogeneous up to rounding.
    """
    if not p > 0:
        raise DomainError(f"p-norm exponent must be positive, got {p}")
    x = np.abs(np.asarray(x, dtype=np.float64))
    scale = np.max(x, axis=axis, keepdims=True)
    safe = np.where(scale > 0, scale, 1.0)
    inner = np.sum((x / safe) ** p, axis=axis, keepdims=True) ** (1.0 / p)
    return np.squeeze(np.where(scale > 0, scale * inner, 0.0), axis=axis)


def shannon_entropy(weights, axis=-1):
    """-sum w log w with 0 log 0 = 0."""
    return np.sum(special.entr(np.asarray(weights, dtype=np.float64)), axis=axis)


def gauss_pdf(x):
    x = np.asarray(x, dtype=np.float64)
    return np.exp(-0.5 * x * x - _LOG_SQRT_2PI)


def gauss_cdf(x):
    """Standard normal CDF."""
    return special.ndtr(np.asarray(x, dtype=np.float64))


def gauss_quantile(u):
    """
    Standard normal quantile.

    Cephes' rational approximation (``ndtri``) evaluated on the lower tail,
    followed by one Newton step on Phi(x) = u; upper-tail inputs are
    reflected through the exact complement 1 - u.
    """
    u = np.asarray(u, dtype=np.float64)
    if not np.all((u > 0.0) & (u < 1.0)):
        raise DomainError("Normal quantile needs 0 < u < 1")
    lower = np.minimum(u, 1.0 - u)
    x = special.ndtri(lower)
    x = x - (special.ndtr(x) - lower) / gauss_pdf(x)
    return np.where(u > 0.5, -x, x)
