"""
Uniform approximation bound for non-stationary random Fourier features.

For spectral pairs with second moments s1^2 = E[w1.w1], s2^2 = E[w2.w2] on
a domain of diameter D in R^d,

    P[sup |f_R - f| >= eps] <= 2^8 (D sqrt(s1^2 + s2^2) / eps)^2 exp(-R eps^2 / (2 (d + 1))).
"""
import math
from dataclasses import dataclass, replace

from core.exceptions import DomainError


@dataclass(frozen=True)
class ErrorBoundInputs:
    D: float
    sigma1_sq: float
    sigma2_sq: float
    R: int
    d: int
    epsilon: float

    def __post_init__(self):
        for name in ('D', 'sigma1_sq', 'sigma2_sq', 'R', 'd', 'epsilon'):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive, got {getattr(self, name)}")

    @property
    def prefactor(self):
        return 256.0 * (self.D * math.sqrt(self.sigma1_sq + self.sigma2_sq) / self.epsilon) ** 2


def error_bound(inputs):
    """Upper bound on the probability that the sup error reaches epsilon."""
    return inputs.prefactor * math.exp(-inputs.R * inputs.epsilon ** 2 / (2.0 * (inputs.d + 1)))


def minimal_sample_count(inputs, delta):
    """Smallest R for which ``error_bound`` is at most ``delta`` (inputs.R is ignored)."""
    if not 0.0 < delta < 1.0:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    log_ratio = math.log(inputs.prefactor / delta)
    if log_ratio <= 0:
        return 1
    count = math.ceil(2.0 * (inputs.d + 1) / inputs.epsilon ** 2 * log_ratio)
    # ceil can land one short when the product is within rounding of an integer
    while error_bound(replace(inputs, R=count)) > delta:
        count += 1
    return count
