"""
Spectral point samplers.

The module-level functions implement single draws; the ``*Sampler``
classes wrap them as per-layer strategies with named parameters, a
``draw_noise`` step that consumes randomness and a deterministic
``samples`` step that maps (parameters, context, noise) to one
SpectralSample per head.
"""
import logging
import math

import numpy as np

from autodiff import ops
from autodiff.tape import value_of
from core.exceptions import DomainError, ShapeMismatchError
from numerics.special import gauss_cdf
from spectral.densities import CopulaSpec, DENSITY_FIELDS, ImplicitDensity
from spectral.samples import SampleKind, SpectralSample

logger = logging.getLogger(__name__)


def head_stream(rng, m):
    """Sub-stream for head ``m``; shared by independent and coupled samplers."""
    return rng.child(f'head-{m}')


def sample_gaussian(d, R, lengthscale, rng, head=0):
    """R i.i.d. points from N(0, I / (2 l^2))."""
    if not lengthscale > 0:
        raise DomainError(f"Lengthscale must be positive, got {lengthscale}")
    if d < 1 or R < 1:
        raise DomainError("Gaussian sample needs d >= 1 and R >= 1")
    points = rng.standard_normal((R, d)) / (math.sqrt(2.0) * lengthscale)
    return SpectralSample(points, head=head)


def sample_gaussian_pair(d, R, rng, mean1=0.0, mean2=0.0, scale=1.0, head=0):
    """Independent Gaussian point sets w1 ~ N(mean1, s^2 I), w2 ~ N(mean2, s^2 I)."""
    if not scale > 0:
        raise DomainError(f"Scale must be positive, got {scale}")
    first = mean1 + scale * rng.standard_normal((R, d))
    second = mean2 + scale * rng.standard_normal((R, d))
    return SpectralSample(first, head=head, kind=SampleKind.NONSTATIONARY_PAIR, points2=second)


def _split(w, d, nonstationary):
    if not nonstationary:
        return w, None
    return w[..., :d], w[..., d:]


def implicit_points(h_summary, density, eps, params=None, head=0, nonstationary=False, u=None):
    """
    Deterministic core of ``sample_implicit``: z~ = mu + sigma * eps, mirrored
    to z = [z~ | -z~] along the point axis, then w = sign(z) * psi(|z|).
    """
    if tuple(np.shape(eps))[-1] != density.output_dim:
        raise ShapeMismatchError("Base draw does not match density", np.shape(eps), (density.output_dim,))
    mu, log_sigma = density.encode(h_summary, params)
    mu_b = ops.expand_dims(mu, -2)
    sigma_b = ops.exp(ops.expand_dims(log_sigma, -2))
    base = mu_b + sigma_b * eps
    z = ops.concatenate([base, -base], axis=-2)
    w = ops.sign(z) * density.generate(ops.abs(z), params)
    d = density.output_dim // 2 if nonstationary else density.output_dim
    first, second = _split(w, d, nonstationary)
    kind = SampleKind.NONSTATIONARY_PAIR if nonstationary else SampleKind.STATIONARY
    return SpectralSample(
        first, head=head, kind=kind, points2=second, base=base, eps=eps,
        mu=mu, log_sigma=log_sigma, u=u,
    )


def sample_implicit(h_summary, density, R, rng, params=None, head=0, nonstationary=False):
    """
    Reparameterized draw of 2R mirrored points conditioned on ``h_summary``
    of shape (..., input_dim).
    """
    if R < 1:
        raise DomainError("R must be at least 1")
    batch = tuple(np.shape(h_summary))[:-1]
    eps = rng.standard_normal(batch + (R, density.output_dim))
    return implicit_points(h_summary, density, eps, params, head, nonstationary)


def direct_points(store, head=0, nonstationary=False):
    """Return the stored (R, d) or (R, 2d) points verbatim."""
    if nonstationary:
        d = store.shape[-1] // 2
        return SpectralSample(store[..., :d], head=head, kind=SampleKind.NONSTATIONARY_PAIR, points2=store[..., d:])
    return SpectralSample(store, head=head)


def couple(factor, draws):
    """V_m = sum_m' L[m, m'] E_m' applied coordinate-wise to per-head draws."""
    shape = tuple(np.shape(draws[0]))
    flat = np.stack([np.reshape(e, -1) for e in draws], axis=0)
    mixed = ops.matmul(factor, flat)
    return [ops.reshape(mixed[m], shape) for m in range(len(draws))]


def sample_copula_joint(spec, densities, h_summary, R, rng, params=None, raw_factor=None, nonstationary=False):
    """
    Jointly sample every head's base variable through the Gaussian copula.

    Each head draws E_m from its own ``head_stream``; V = L E couples heads
    per coordinate and u = Phi(V) is kept for diagnostics. With Gaussian
    marginals mu + sigma * Phi^-1(Phi(V)) reduces to mu + sigma * V, so
    Sigma = I reproduces independent ``sample_implicit`` calls bit for bit.
    """
    if spec.M != len(densities):
        raise ShapeMismatchError("Copula size does not match head count", (spec.M,), (len(densities),))
    batch = tuple(np.shape(h_summary))[:-1]
    draws = [head_stream(rng, m).standard_normal(batch + (R, densities[m].output_dim)) for m in range(spec.M)]
    return coupled_points(spec, densities, h_summary, draws, params, raw_factor, nonstationary)


def coupled_points(spec, densities, h_summary, draws, params=None, raw_factor=None, nonstationary=False):
    """Deterministic core of ``sample_copula_joint``."""
    factor = spec.factor(raw_factor)
    coupled = couple(factor, draws)
    samples = []
    for m, (density, v_m) in enumerate(zip(densities, coupled)):
        head_params = None if params is None else params[m]
        sample = implicit_points(
            h_summary, density, v_m, head_params, head=m, nonstationary=nonstationary,
            u=gauss_cdf(value_of(v_m)),
        )
        sample.eps = draws[m]
        sample.coupled = v_m
        samples.append(sample)
    return samples


class SpectralSampler:
    """Strategy interface; subclasses set ``name`` and ``latent``."""
    name = 'base'
    latent = False

    def __init__(self, M, d, R, nonstationary=False):
        self.M = int(M)
        self.d = int(d)
        self.R = int(R)
        self.nonstationary = bool(nonstationary)

    @property
    def base_dim(self):
        return 2 * self.d if self.nonstationary else self.d

    def parameters(self):
        """Ordered (name, array) pairs of learnable state."""
        return []

    def draw_noise(self, batch_shape, rng):
        return None

    def samples(self, params, h_summary, noise):
        raise NotImplementedError


class FixedGaussianSampler(SpectralSampler):
    """Points from N(0, I/(2 l^2)) redrawn every forward pass."""
    name = 'gaussian'

    def __init__(self, M, d, R, lengthscale, nonstationary=False):
        super().__init__(M, d, R, nonstationary)
        if not lengthscale > 0:
            raise DomainError(f"Lengthscale must be positive, got {lengthscale}")
        self.lengthscale = float(lengthscale)

    def draw_noise(self, batch_shape, rng):
        return [head_stream(rng, m).standard_normal((self.R, self.base_dim)) for m in range(self.M)]

    def samples(self, params, h_summary, noise):
        out = []
        for m, eps in enumerate(noise):
            w = eps / (math.sqrt(2.0) * self.lengthscale)
            first, second = _split(w, self.d, self.nonstationary)
            kind = SampleKind.NONSTATIONARY_PAIR if self.nonstationary else SampleKind.STATIONARY
            out.append(SpectralSample(first, head=m, kind=kind, points2=second))
        return out


class DirectSampler(SpectralSampler):
    """Spectral points held as parameters (a mixture of point masses)."""
    name = 'direct'

    def __init__(self, M, d, R, rng, d_k=None, nonstationary=False):
        super().__init__(M, d, R, nonstationary)
        scale = 1.0 / math.sqrt(2.0 * math.sqrt(d_k or d))
        self.initial = [rng.normal(0.0, scale, size=(self.R, self.base_dim)) for _ in range(self.M)]

    def parameters(self):
        return [(f'spectral.direct.{m}', self.initial[m]) for m in range(self.M)]

    def samples(self, params, h_summary, noise):
        return [
            direct_points(params[f'spectral.direct.{m}'], head=m, nonstationary=self.nonstationary)
            for m in range(self.M)
        ]


class ImplicitSampler(SpectralSampler):
    """Per-head implicit densities conditioned on the pooled layer input."""
    name = 'implicit'
    latent = True

    def __init__(self, M, d, R, input_dim, rng, d_k=None, nonstationary=False, hidden=None):
        super().__init__(M, d, R, nonstationary)
        kwargs = {'hidden': hidden} if hidden else {}
        self.densities = [
            ImplicitDensity(input_dim, self.base_dim, rng.child(f'density-{m}'), d_k=d_k or d, **kwargs)
            for m in range(self.M)
        ]

    def parameters(self):
        return [
            (f'spectral.head{m}.{field}', density.params[field])
            for m, density in enumerate(self.densities)
            for field in DENSITY_FIELDS
        ]

    def head_params(self, params, m):
        return {field: params[f'spectral.head{m}.{field}'] for field in DENSITY_FIELDS}

    def draw_noise(self, batch_shape, rng):
        return [
            head_stream(rng, m).standard_normal(tuple(batch_shape) + (self.R, self.base_dim))
            for m in range(self.M)
        ]

    def samples(self, params, h_summary, noise):
        return [
            implicit_points(h_summary, density, noise[m], self.head_params(params, m), head=m,
                            nonstationary=self.nonstationary)
            for m, density in enumerate(self.densities)
        ]


class CopulaSampler(ImplicitSampler):
    """Implicit heads whose base draws are coupled by a Gaussian copula."""
    name = 'copula'

    def __init__(self, M, d, R, input_dim, rng, copula=None, **kwargs):
        super().__init__(M, d, R, input_dim, rng, **kwargs)
        if self.M < 2:
            raise DomainError("A copula couples at least two heads")
        self.copula = copula or CopulaSpec.independent(self.M)

    def parameters(self):
        return super().parameters() + [('spectral.copula.raw_factor', self.copula.raw_factor)]

    def samples(self, params, h_summary, noise):
        return coupled_points(
            self.copula, self.densities, h_summary, noise,
            params=[self.head_params(params, m) for m in range(self.M)],
            raw_factor=params['spectral.copula.raw_factor'],
            nonstationary=self.nonstationary,
        )

    def factor(self, params):
        return self.copula.factor(params['spectral.copula.raw_factor'])
