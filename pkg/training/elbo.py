"""
Evidence lower bound for models with latent spectral base variables.

With p(y, z | h) = p(y | z, h) p(z), a standard normal prior on the unmirrored
base draw and the reparameterized posterior z~ = mu + sigma * v,

    elbo = log p(y | z, h) + log p(z~) - log q(z~ | h),

where log q sums the per-head Gaussian marginals and, for coupled heads,
the Gaussian copula log-density. Models without latent variables reduce to
the plain log-likelihood.
"""
import logging
import math
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from autodiff import ops
from autodiff.tape import value_of
from spectral.densities import copula_log_term

logger = logging.getLogger(__name__)

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass
class ElboTerms:
    log_lik: Any
    log_prior: Any = 0.0
    log_q: Any = 0.0
    copula: Any = 0.0
    kl: Optional[Any] = None

    @property
    def elbo(self):
        if self.kl is not None:
            return self.log_lik - self.kl
        return self.log_lik + self.log_prior - self.log_q

    def values(self):
        """Plain floats for logging."""
        out = {
            'log_lik': float(value_of(self.log_lik)),
            'log_prior': float(value_of(self.log_prior)),
            'log_q': float(value_of(self.log_q)),
            'copula': float(value_of(self.copula)),
            'elbo': float(value_of(self.elbo)),
        }
        if self.kl is not None:
            out['kl'] = float(value_of(self.kl))
        return out


def gaussian_log_prior(base):
    """sum log N(z; 0, I) over every entry of ``base``."""
    return -0.5 * ops.sum(ops.square(base)) - float(np.size(value_of(base))) * _HALF_LOG_2PI


def gaussian_log_q(standardized, log_sigma):
    """
    sum log N(mu + sigma v; mu, sigma^2) written in the standardized draw v
    of shape (..., R, d); ``log_sigma`` has shape (..., d).
    """
    draws = tuple(np.shape(value_of(standardized)))[-2]
    return (
        -0.5 * ops.sum(ops.square(standardized))
        - float(draws) * ops.sum(log_sigma)
        - float(np.size(value_of(standardized))) * _HALF_LOG_2PI
    )


def gaussian_kl(mu, log_sigma):
    """KL(N(mu, sigma^2) || N(0, 1)) summed over coordinates."""
    return 0.5 * ops.sum(ops.square(mu) + ops.exp(2.0 * log_sigma) - 1.0) - ops.sum(log_sigma)


def monte_carlo_kl(mu, log_sigma, standardized):
    """Single-sample estimate log q - log p for one draw per row of ``standardized``."""
    base = ops.expand_dims(mu, -2) + ops.exp(ops.expand_dims(log_sigma, -2)) * standardized
    return gaussian_log_q(standardized, log_sigma) - gaussian_log_prior(base)


def copula_expected_log_density(factor, draws_per_head):
    """E_q[log c] = -n sum log|L_ii| for unit-norm rows of L."""
    M = tuple(np.shape(value_of(factor)))[0]
    diag = ops.getitem(factor, (np.arange(M), np.arange(M)))
    return -float(draws_per_head) * ops.sum(ops.log(ops.abs(diag)))


def _standardized(sample):
    return sample.coupled if sample.coupled is not None else sample.eps


def elbo(model, params, batch, rng=None, noise=None, analytic_kl=False, counter=None):
    """
    Single-sample reparameterized ELBO and the forward output it came from.

    ``noise`` defaults to a fresh ``model.draw_noise(batch, rng)``. With
    ``analytic_kl`` the prior and posterior terms are replaced by the closed
    form KL (plus the expected copula log-density for coupled heads).
    """
    if noise is None and rng is not None:
        noise = model.draw_noise(batch, rng)
    output = model.forward(params, batch, noise, counter=counter)
    log_lik = model.log_likelihood(output, batch)
    latent = [s for s in output.samples if s.is_latent]
    if not latent:
        return ElboTerms(log_lik), output

    factor = model.copula_factor(params)
    if analytic_kl:
        kl = 0.0
        for sample in latent:
            draws = tuple(np.shape(value_of(sample.eps)))[-2]
            kl = kl + float(draws) * gaussian_kl(sample.mu, sample.log_sigma)
        copula = 0.0
        if factor is not None:
            copula = copula_expected_log_density(factor, np.size(value_of(latent[0].eps)))
            kl = kl + copula
        return ElboTerms(log_lik, copula=copula, kl=kl), output

    log_prior = 0.0
    log_q = 0.0
    for sample in latent:
        log_prior = log_prior + gaussian_log_prior(sample.base)
        log_q = log_q + gaussian_log_q(_standardized(sample), sample.log_sigma)
    copula = 0.0
    if factor is not None:
        copula = copula_log_term(factor, [s.eps for s in latent], [s.coupled for s in latent])
        log_q = log_q + copula
    return ElboTerms(log_lik, log_prior, log_q, copula), output


def evaluation_elbo(model, params, batch, rng, samples=64, analytic_kl=False):
    """Average of ``samples`` independent single-sample ELBOs on plain arrays."""
    values = [
        float(value_of(elbo(model, params, batch, rng.child(f'eval-{i}'), analytic_kl=analytic_kl)[0].elbo))
        for i in range(samples)
    ]
    return float(np.mean(values)), float(np.std(values) / math.sqrt(samples))
