"""
Exception hierarchy shared by every app.

Numerical routines raise these instead of returning sentinel values; the
management commands translate them into ``CommandError`` exit codes.
"""


class KernelAttentionError(Exception):
    """Base class for all library errors"""


class ShapeMismatchError(KernelAttentionError, ValueError):
    """Operand shapes are incompatible; the message names both shapes"""

    def __init__(self, message, left_shape=None, right_shape=None):
        self.left_shape = tuple(left_shape) if left_shape is not None else None
        self.right_shape = tuple(right_shape) if right_shape is not None else None
        if left_shape is not None and right_shape is not None:
            message = f"{message}: {self.left_shape} vs {self.right_shape}"
        super().__init__(message)


class DomainError(KernelAttentionError, ValueError):
    """A parameter lies outside the domain of the operation"""


class NotPositiveDefiniteError(KernelAttentionError, ArithmeticError):
    """Cholesky factorization hit a non-positive pivot"""

    def __init__(self, pivot, value=None):
        self.pivot = pivot
        self.value = value
        detail = f" (pivot value {value:.3e})" if value is not None else ""
        super().__init__(f"Matrix is not positive definite at pivot {pivot}{detail}")


class EmptyRowError(KernelAttentionError, ValueError):
    """A normalization row has no admissible entries"""


class NonFiniteError(KernelAttentionError, FloatingPointError):
    """A NaN or infinity appeared; ``location`` says where"""

    def __init__(self, message, location=None):
        self.location = location
        if location is not None:
            message = f"{message} at {location}"
        super().__init__(message)


class DivergenceError(KernelAttentionError):
    """Training produced a non-finite loss"""

    def __init__(self, epoch, checkpoint_path=None):
        self.epoch = epoch
        self.checkpoint_path = checkpoint_path
        where = f"; last good checkpoint: {checkpoint_path}" if checkpoint_path else ""
        super().__init__(f"Training diverged at epoch {epoch}{where}")


class ConfigError(KernelAttentionError, ValueError):
    """An experiment config file is malformed or names an unknown key"""


class CheckpointError(KernelAttentionError):
    """A checkpoint file has the wrong format, version or field layout"""
