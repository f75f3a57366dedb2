from dataclasses import dataclass
from enum import Enum
from typing import Any, Optional

from core.exceptions import ShapeMismatchError


class SampleKind(str, Enum):
    STATIONARY = 'stationary'
    NONSTATIONARY_PAIR = 'nonstationary-pair'


@dataclass
class SpectralSample:
    """
    Spectral points for one head.

    ``points`` has shape (..., P, d); a non-stationary sample also carries
    ``points2`` of the same shape. Implicit samplers keep the base draw
    ``base`` (unmirrored z~), the standardized draw ``eps`` it was built from,
    and the encoder outputs ``mu``/``log_sigma`` for ELBO evaluation. Copula
    samplers also keep the coupled draw ``coupled`` and its uniforms ``u``.
    Any array field may be a tape Node while training.
    """
    points: Any
    head: int = 0
    kind: SampleKind = SampleKind.STATIONARY
    points2: Optional[Any] = None
    base: Optional[Any] = None
    eps: Optional[Any] = None
    mu: Optional[Any] = None
    log_sigma: Optional[Any] = None
    u: Optional[Any] = None
    coupled: Optional[Any] = None

    def __post_init__(self):
        if self.kind == SampleKind.NONSTATIONARY_PAIR:
            if self.points2 is None:
                raise ShapeMismatchError("Non-stationary sample needs a second point set")
            if tuple(self.points2.shape) != tuple(self.points.shape):
                raise ShapeMismatchError("Spectral point sets differ in shape", self.points.shape, self.points2.shape)
        if len(self.points.shape) < 2 or self.points.shape[-2] < 1:
            raise ShapeMismatchError(f"Spectral points need shape (..., R, d), got {tuple(self.points.shape)}")

    @property
    def R(self):
        return self.points.shape[-2]

    @property
    def d(self):
        return self.points.shape[-1]

    @property
    def is_nonstationary(self):
        return self.kind == SampleKind.NONSTATIONARY_PAIR

    @property
    def is_latent(self):
        return self.base is not None
