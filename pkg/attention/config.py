from dataclasses import dataclass
from enum import Enum
from typing import Optional

from core.exceptions import DomainError
from spectral.densities import CopulaSpec
from spectral.samplers import CopulaSampler, DirectSampler, ImplicitSampler


class Variant(str, Enum):
    DOT = 'dot'
    RBF_ONLY = 'rbf-only'
    EXPSIN = 'expsin'
    LINEAR = 'linear'
    IKA_S = 'ika-s'
    IKA_NS = 'ika-ns'
    IKAN = 'ikan'
    IKAN_DIRECT = 'ikan-direct'
    MIKAN = 'mikan'


class Mode(str, Enum):
    SEQUENCE = 'sequence'
    GRAPH = 'graph'


FIXED_VARIANTS = (Variant.DOT, Variant.RBF_ONLY, Variant.EXPSIN, Variant.LINEAR)
KERNEL_VARIANTS = (Variant.IKA_S, Variant.IKA_NS, Variant.IKAN, Variant.IKAN_DIRECT, Variant.MIKAN)
LATENT_VARIANTS = (Variant.IKA_S, Variant.IKA_NS, Variant.IKAN, Variant.MIKAN)
NONSTATIONARY_VARIANTS = (Variant.IKA_NS, Variant.IKAN, Variant.MIKAN)


@dataclass(frozen=True)
class AttentionConfig:
    """
    One attention layer's hyper-parameters.

    ``period`` and ``lengthscale`` shape the ``expsin`` kernel only;
    ``hidden`` is the width of the implicit density networks.
    """
    variant: Variant = Variant.DOT
    M: int = 2
    R: int = 16
    d_k: int = 8
    p: float = 2.0
    c: float = 0.2
    mode: Mode = Mode.SEQUENCE
    copula: Optional[CopulaSpec] = None
    period: float = 1.0
    lengthscale: float = 1.0
    hidden: int = 32

    def __post_init__(self):
        try:
            object.__setattr__(self, 'variant', Variant(self.variant))
            object.__setattr__(self, 'mode', Mode(self.mode))
        except ValueError as e:
            raise DomainError(str(e))
        if self.M < 1 or self.R < 1 or self.d_k < 1:
            raise DomainError("M, R and d_k must be positive")
        if not self.p > 0:
            raise DomainError(f"p must be positive, got {self.p}")
        if not 0.0 < self.c <= 1.0:
            raise DomainError(f"LeakyReLU slope must lie in (0, 1], got {self.c}")
        if self.variant in FIXED_VARIANTS and self.p != 2.0:
            raise DomainError(f"Variant {self.variant.value} uses the L2 magnitude; got p={self.p}")
        if self.variant == Variant.MIKAN:
            if self.copula is None:
                raise DomainError("mikan needs a copula")
            if self.copula.M != self.M:
                raise DomainError(f"Copula couples {self.copula.M} heads but M={self.M}")
        elif self.copula is not None:
            raise DomainError(f"Variant {self.variant.value} takes no copula")
        if self.mode == Mode.GRAPH and self.variant in (Variant.EXPSIN, Variant.LINEAR):
            raise DomainError(f"{self.variant.value} has no graph-mode decomposition")
        if not (self.period > 0 and self.lengthscale > 0):
            raise DomainError("expsin period and lengthscale must be positive")

    @property
    def uses_kernel(self):
        return self.variant in KERNEL_VARIANTS

    @property
    def latent(self):
        return self.variant in LATENT_VARIANTS

    @property
    def nonstationary(self):
        return self.variant in NONSTATIONARY_VARIANTS

    @classmethod
    def for_variant(cls, variant, M=2, **kwargs):
        """Config with an independent copula filled in for mikan."""
        variant = Variant(variant)
        if variant == Variant.MIKAN and kwargs.get('copula') is None:
            kwargs['copula'] = CopulaSpec.independent(M)
        return cls(variant=variant, M=M, **kwargs)


def make_sampler(config, spectral_dim, context_dim, rng):
    """
    Spectral sampler for ``config`` or None for fixed-kernel variants.

    ``spectral_dim`` is the dimension of the vectors fed to the kernel
    (d_k in sequence mode, twice the head width in graph mode) and
    ``context_dim`` the width of the pooled layer input.
    """
    v = config.variant
    if v in FIXED_VARIANTS:
        return None
    if v == Variant.IKAN_DIRECT:
        return DirectSampler(config.M, spectral_dim, config.R, rng, d_k=config.d_k)
    common = dict(d_k=config.d_k, nonstationary=config.nonstationary, hidden=config.hidden)
    if v == Variant.MIKAN:
        return CopulaSampler(config.M, spectral_dim, config.R, context_dim, rng, copula=config.copula, **common)
    return ImplicitSampler(config.M, spectral_dim, config.R, context_dim, rng, **common)
