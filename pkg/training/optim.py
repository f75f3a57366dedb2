import numpy as np

from core.exceptions import DomainError


class SGD:
    """
    Stochastic gradient descent with heavy-ball momentum.

    v <- momentum * v + g;  theta <- theta - lr * v.  With momentum 0 the step
    is exactly theta - lr * g.
    """

    def __init__(self, lr, momentum=0.0):
        if lr < 0:
            raise DomainError(f"Learning rate must be non-negative, got {lr}")
        if not 0.0 <= momentum < 1.0:
            raise DomainError(f"Momentum must lie in [0, 1), got {momentum}")
        self.lr = float(lr)
        self.momentum = float(momentum)
        self.velocity = {}

    def __repr__(self):
        return f"SGD(lr={self.lr}, momentum={self.momentum})"

    def step(self, params, grads):
        """Return updated copies of ``params``; names without a gradient are kept."""
        updated = {}
        for name, value in params.items():
            grad = grads.get(name)
            if grad is None:
                updated[name] = value
                continue
            if self.momentum:
                velocity = self.momentum * self.velocity.get(name, np.zeros_like(grad)) + grad
                self.velocity[name] = velocity
            else:
                velocity = grad
            updated[name] = value - self.lr * velocity
        return updated
