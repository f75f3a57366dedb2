"""
Differentiable array operations.

Every function accepts plain arrays or tape ``Node`` objects. With no Node
among the operands it returns a plain ``numpy.ndarray`` and records nothing,
so the same model code serves both evaluation and training.
"""
import numpy as np
from scipy import special

from autodiff.tape import Node, value_of
from core.exceptions import DomainError, ShapeMismatchError
from numerics import special as stable


def _val(x):
    if isinstance(x, Node):
        return x.value
    return np.asarray(x, dtype=np.float64)


def _record(op, value, operands, vjps):
    tape = None
    parents, closures = [], []
    for operand, vjp in zip(operands, vjps):
        if isinstance(operand, Node):
            if tape is None:
                tape = operand.tape
            parents.append(operand)
            closures.append(vjp)
    if tape is None:
        return value
    return tape.record(op, value, parents, closures)


def unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    grad = np.asarray(grad)
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _expand(grad, shape, axis, keepdims):
    if axis is None:
        return np.broadcast_to(grad, shape)
    if not keepdims:
        axes = (axis,) if np.isscalar(axis) else tuple(axis)
        axes = sorted(a % len(shape) for a in axes)
        for a in axes:
            grad = np.expand_dims(grad, a)
    return np.broadcast_to(grad, shape)


# Elementwise arithmetic

def add(a, b):
    va, vb = _val(a), _val(b)
    return _record('add', va + vb, (a, b), (
        lambda g: unbroadcast(g, va.shape),
        lambda g: unbroadcast(g, vb.shape),
    ))


def sub(a, b):
    va, vb = _val(a), _val(b)
    return _record('sub', va - vb, (a, b), (
        lambda g: unbroadcast(g, va.shape),
        lambda g: unbroadcast(-g, vb.shape),
    ))


def mul(a, b):
    va, vb = _val(a), _val(b)
    return _record('mul', va * vb, (a, b), (
        lambda g: unbroadcast(g * vb, va.shape),
        lambda g: unbroadcast(g * va, vb.shape),
    ))


def div(a, b):
    va, vb = _val(a), _val(b)
    return _record('div', va / vb, (a, b), (
        lambda g: unbroadcast(g / vb, va.shape),
        lambda g: unbroadcast(-g * va / (vb * vb), vb.shape),
    ))


def neg(a):
    return _record('neg', -_val(a), (a,), (lambda g: -g,))


def power(a, exponent):
    """Elementwise a ** exponent for a constant real exponent."""
    if isinstance(exponent, Node):
        raise DomainError("power only supports constant exponents")
    va = _val(a)
    k = float(exponent)
    return _record('power', va ** k, (a,), (lambda g: g * k * va ** (k - 1.0),))


def square(a):
    va = _val(a)
    return _record('square', va * va, (a,), (lambda g: 2.0 * g * va,))


def sqrt(a):
    out = np.sqrt(_val(a))
    return _record('sqrt', out, (a,), (lambda g: 0.5 * g / out,))


def exp(a):
    out = np.exp(_val(a))
    return _record('exp', out, (a,), (lambda g: g * out,))


def log(a):
    va = _val(a)
    return _record('log', np.log(va), (a,), (lambda g: g / va,))


def tanh(a):
    out = np.tanh(_val(a))
    return _record('tanh', out, (a,), (lambda g: g * (1.0 - out * out),))


def cos(a):
    va = _val(a)
    return _record('cos', np.cos(va), (a,), (lambda g: -g * np.sin(va),))


def sin(a):
    va = _val(a)
    return _record('sin', np.sin(va), (a,), (lambda g: g * np.cos(va),))


def abs(a):
    va = _val(a)
    return _record('abs', np.abs(va), (a,), (lambda g: g * np.sign(va),))


def sign(a):
    """Elementwise sign; piecewise constant, so never recorded."""
    return np.sign(_val(a))


def where(condition, a, b):
    cond = np.asarray(value_of(condition), dtype=bool)
    va, vb = _val(a), _val(b)
    return _record('where', np.where(cond, va, vb), (a, b), (
        lambda g: unbroadcast(np.where(cond, g, 0.0), va.shape),
        lambda g: unbroadcast(np.where(cond, 0.0, g), vb.shape),
    ))


def maximum(a, b):
    """Elementwise maximum; ties route the gradient to ``a``."""
    va, vb = _val(a), _val(b)
    return where(va >= vb, a, b)


# Shape manipulation

def reshape(a, shape):
    va = _val(a)
    return _record('reshape', va.reshape(shape), (a,), (lambda g: g.reshape(va.shape),))


def swapaxes(a, axis1, axis2):
    va = _val(a)
    return _record('swapaxes', np.swapaxes(va, axis1, axis2), (a,), (
        lambda g: np.swapaxes(g, axis1, axis2),
    ))


def transpose(a):
    """Swap the last two axes."""
    return swapaxes(a, -1, -2)


def expand_dims(a, axis):
    va = _val(a)
    return _record('expand_dims', np.expand_dims(va, axis), (a,), (lambda g: g.reshape(va.shape),))


def broadcast_to(a, shape):
    va = _val(a)
    return _record('broadcast_to', np.broadcast_to(va, shape).copy(), (a,), (
        lambda g: unbroadcast(g, va.shape),
    ))


def getitem(a, index):
    va = _val(a)

    def vjp(g):
        out = np.zeros_like(va)
        np.add.at(out, index, g)
        return out

    return _record('getitem', va[index], (a,), (vjp,))


def concatenate(parts, axis=0):
    values = [_val(p) for p in parts]
    bounds = np.cumsum([v.shape[axis] for v in values])[:-1]

    def piece(i):
        return lambda g: np.split(g, bounds, axis=axis)[i]

    out = np.concatenate(values, axis=axis)
    return _record('concatenate', out, parts, [piece(i) for i in range(len(parts))])


def stack(parts, axis=0):
    values = [_val(p) for p in parts]

    def piece(i):
        return lambda g: np.take(g, i, axis=axis)

    out = np.stack(values, axis=axis)
    return _record('stack', out, parts, [piece(i) for i in range(len(parts))])


# Reductions and products

def sum(a, axis=None, keepdims=False):
    va = _val(a)
    return _record('sum', np.sum(va, axis=axis, keepdims=keepdims), (a,), (
        lambda g: _expand(g, va.shape, axis, keepdims),
    ))


def mean(a, axis=None, keepdims=False):
    va = _val(a)
    count = va.size if axis is None else np.prod([va.shape[x] for x in np.atleast_1d(axis)])
    return div(sum(a, axis=axis, keepdims=keepdims), float(count))


def matmul(a, b):
    """Batched matrix product over the last two axes."""
    va, vb = _val(a), _val(b)
    if va.ndim < 2 or vb.ndim < 2 or va.shape[-1] != vb.shape[-2]:
        raise ShapeMismatchError("Cannot multiply matrices", va.shape, vb.shape)
    return _record('matmul', va @ vb, (a, b), (
        lambda g: unbroadcast(g @ np.swapaxes(vb, -1, -2), va.shape),
        lambda g: unbroadcast(np.swapaxes(va, -1, -2) @ g, vb.shape),
    ))


def lp_norm(a, p, axis=-1):
    """
    (sum |a_i|^p)^(1/p) along ``axis``.

    The derivative sign(a_i) |a_i|^(p-1) norm^(1-p) is taken as 0 where
    a_i = 0, which is its subgradient for p >= 1.
    """
    va = _val(a)
    out = stable.p_norm(va, p, axis=axis)

    def vjp(g):
        norm = np.expand_dims(out, axis)
        mag = np.abs(va)
        safe_mag = np.where(mag > 0, mag, 1.0)
        safe_norm = np.where(norm > 0, norm, 1.0)
        local = np.where(mag > 0, np.sign(va) * (safe_mag / safe_norm) ** (p - 1.0), 0.0)
        return np.expand_dims(g, axis) * local

    return _record('lp_norm', out, (a,), (vjp,))


# Normalizations

def softmax(logits, mask=None, axis=-1):
    """Masked, max-shifted softmax; masked entries are exactly zero."""
    probs = stable.stable_softmax(_val(logits), mask=mask, axis=axis)

    def vjp(g):
        return probs * (g - np.sum(g * probs, axis=axis, keepdims=True))

    return _record('softmax', probs, (logits,), (vjp,))


def log_softmax(logits, mask=None, axis=-1):
    """
    Log-probabilities; masked entries hold -inf in the value and receive
    no gradient.
    """
    out = stable.log_softmax(_val(logits), mask=mask, axis=axis)
    probs = np.exp(out)

    def vjp(g):
        g = np.where(np.isfinite(out), g, 0.0)
        return g - probs * np.sum(g, axis=axis, keepdims=True)

    return _record('log_softmax', out, (logits,), (vjp,))


def logsumexp(a, axis=-1, keepdims=False):
    va = _val(a)
    out = special.logsumexp(va, axis=axis, keepdims=keepdims)

    def vjp(g):
        full = out if keepdims else np.expand_dims(out, axis)
        grad = g if keepdims else np.expand_dims(g, axis)
        return grad * np.exp(va - full)

    return _record('logsumexp', out, (a,), (vjp,))
