"""
Reverse-mode differentiation record.

A ``Tape`` is an append-only Wengert list: every recorded ``Node`` holds its
value, its parent nodes and one vector-Jacobian closure per parent. Nodes are
appended after their inputs, so walking the list backwards is a valid
topological order and each node is visited once.
"""
import logging

import numpy as np

from core.exceptions import KernelAttentionError, NonFiniteError, ShapeMismatchError

logger = logging.getLogger(__name__)


class Node:
    """A value recorded on a tape."""

    # numpy must defer to our operator overloads instead of broadcasting over us
    __array_ufunc__ = None

    def __init__(self, tape, index, op, value, parents=(), vjps=(), name=None):
        self.tape = tape
        self.index = index
        self.op = op
        self.value = value
        self.parents = tuple(parents)
        self.vjps = tuple(vjps)
        self.name = name

    def __repr__(self):
        label = f" '{self.name}'" if self.name else ''
        return f"<Node #{self.index} {self.op}{label} shape={self.shape}>"

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __len__(self):
        return len(self.value)

    def __float__(self):
        return float(self.value)

    # Comparisons are not differentiable and yield plain boolean arrays.
    def __gt__(self, other):
        return self.value > value_of(other)

    def __ge__(self, other):
        return self.value >= value_of(other)

    def __lt__(self, other):
        return self.value < value_of(other)

    def __le__(self, other):
        return self.value <= value_of(other)

    # Operators dispatch to autodiff.ops; imported lazily to avoid a cycle.
    def __add__(self, other):
        from autodiff import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from autodiff import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from autodiff import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from autodiff import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from autodiff import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from autodiff import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from autodiff import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from autodiff import ops
        return ops.div(other, self)

    def __neg__(self):
        from autodiff import ops
        return ops.neg(self)

    def __pow__(self, exponent):
        from autodiff import ops
        return ops.power(self, exponent)

    def __matmul__(self, other):
        from autodiff import ops
        return ops.matmul(self, other)

    def __rmatmul__(self, other):
        from autodiff import ops
        return ops.matmul(other, self)

    def __getitem__(self, index):
        from autodiff import ops
        return ops.getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        from autodiff import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from autodiff import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)


class Tape:
    """Single-owner record of one forward computation."""

    def __init__(self):
        self.nodes = []

    def __len__(self):
        return len(self.nodes)

    def variable(self, value, name=None):
        """Register a leaf whose gradient ``backward`` should report."""
        node = Node(self, len(self.nodes), 'leaf', np.array(value, dtype=np.float64), name=name)
        self.nodes.append(node)
        return node

    def record(self, op, value, parents, vjps):
        for parent in parents:
            if parent.tape is not self:
                raise KernelAttentionError(f"Operation '{op}' mixes nodes from different tapes")
        node = Node(self, len(self.nodes), op, value, parents, vjps)
        self.nodes.append(node)
        return node

    def backward(self, loss):
        """
        Accumulate d(loss)/d(node) for every node, newest first.

        Returns a dict mapping each named leaf to its gradient (zeros for
        leaves the loss does not depend on).
        """
        if not isinstance(loss, Node) or loss.tape is not self:
            raise KernelAttentionError("backward needs a loss node recorded on this tape")
        if loss.value.size != 1:
            raise ShapeMismatchError("Loss must be scalar", loss.shape, ())
        if not np.all(np.isfinite(loss.value)):
            raise NonFiniteError("Loss is not finite", location=repr(loss))

        grads = {loss.index: np.ones_like(loss.value)}
        for node in reversed(self.nodes[:loss.index + 1]):
            grad = grads.pop(node.index, None)
            if grad is None:
                continue
            if not np.all(np.isfinite(grad)):
                raise NonFiniteError("Non-finite gradient", location=repr(node))
            if node.op == 'leaf':
                grads[node.index] = grad
                continue
            for parent, vjp in zip(node.parents, node.vjps):
                contribution = vjp(grad)
                if not np.all(np.isfinite(contribution)):
                    raise NonFiniteError("Non-finite gradient", location=repr(node))
                if parent.index in grads:
                    grads[parent.index] = grads[parent.index] + contribution
                else:
                    grads[parent.index] = contribution

        result = {}
        for node in self.nodes:
            if node.op == 'leaf' and node.name is not None:
                result[node.name] = np.asarray(grads.get(node.index, np.zeros_like(node.value)), dtype=np.float64).reshape(node.shape)
        logger.debug(f"Backward pass over {loss.index + 1} nodes produced {len(result)} gradients")
        return result


def backward(loss):
    """Gradients of ``loss`` with respect to every named leaf of its tape."""
    if not isinstance(loss, Node):
        raise KernelAttentionError("backward needs a recorded loss node")
    return loss.tape.backward(loss)


def value_of(x):
    """Plain array behind ``x`` whether or not it is a Node."""
    return x.value if isinstance(x, Node) else x
