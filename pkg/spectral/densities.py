"""
Learnable spectral densities.

``ImplicitDensity`` pairs an inference network (context -> mean and log
standard deviation of a Gaussian base variable) with a residual generator
applied to the base variable's absolute value. ``CopulaSpec`` holds the
Gaussian copula that couples heads coordinate-wise.

Methods taking ``params`` accept either plain arrays or tape Nodes so the
same code runs during evaluation and training.
"""
import math

import numpy as np
from scipy.linalg import cho_solve

from autodiff import ops
from core.exceptions import DomainError, ShapeMismatchError
from numerics.linalg import as_matrix, cholesky, log_det_from_cholesky
from numerics.special import gauss_quantile

HIDDEN_UNITS = 32

DENSITY_FIELDS = (
    'encoder_w1', 'encoder_b1', 'encoder_w2', 'encoder_b2',
    'generator_w1', 'generator_b1', 'generator_w2', 'generator_b2',
)


def rbf_log_sigma(d_k):
    """log of 1 / (sqrt(2) l) with l = d_k^(1/4): the N(0, I/(2l^2)) scale."""
    return -0.5 * math.log(2.0) - 0.25 * math.log(d_k)


class ImplicitDensity:
    """
    q(z | h) = N(mu(h), diag(sigma(h)^2)) pushed through
    w = sign(z) * psi(|z|), psi(a) = a + tanh(a V1 + c1) V2 + c2.

    The generator is the identity at initialization (V2 = 0, c2 = 0) and the
    encoder starts near mu = 0, sigma = 1/(sqrt(2) d_k^(1/4)), so a fresh
    density reproduces the RBF spectral measure of scaled dot-product
    attention.
    """

    def __init__(self, input_dim, output_dim, rng, hidden=HIDDEN_UNITS, d_k=None, params=None):
        if input_dim < 1 or output_dim < 1 or hidden < 1:
            raise DomainError("ImplicitDensity dimensions must be positive")
        self.input_dim = int(input_dim)
        self.output_dim = int(output_dim)
        self.hidden = int(hidden)
        self.d_k = int(d_k or output_dim)
        self.params = params if params is not None else self._initial_params(rng)

    def __repr__(self):
        return f"ImplicitDensity(input_dim={self.input_dim}, output_dim={self.output_dim}, hidden={self.hidden})"

    def _initial_params(self, rng):
        d_in, d_z, hidden = self.input_dim, self.output_dim, self.hidden
        b2 = np.zeros(2 * d_z)
        b2[d_z:] = rbf_log_sigma(self.d_k)
        return {
            'encoder_w1': rng.normal(0.0, 1.0 / math.sqrt(d_in), size=(d_in, hidden)),
            'encoder_b1': np.zeros(hidden),
            'encoder_w2': rng.normal(0.0, 1e-3, size=(hidden, 2 * d_z)),
            'encoder_b2': b2,
            'generator_w1': rng.normal(0.0, 1.0 / math.sqrt(d_z), size=(d_z, hidden)),
            'generator_b1': np.zeros(hidden),
            'generator_w2': np.zeros((hidden, d_z)),
            'generator_b2': np.zeros(d_z),
        }

    def ordered_params(self):
        return [(name, self.params[name]) for name in DENSITY_FIELDS]

    def encode(self, h_summary, params=None):
        """(mu, log_sigma), each of shape h_summary.shape[:-1] + (output_dim,)."""
        p = params or self.params
        shape = tuple(h_summary.shape)
        if shape[-1] != self.input_dim:
            raise ShapeMismatchError("Context does not match encoder input", shape, (self.input_dim,))
        flat = ops.reshape(h_summary, (-1, self.input_dim))
        hidden = ops.tanh(ops.matmul(flat, p['encoder_w1']) + p['encoder_b1'])
        out = ops.reshape(ops.matmul(hidden, p['encoder_w2']) + p['encoder_b2'], shape[:-1] + (2 * self.output_dim,))
        return out[..., :self.output_dim], out[..., self.output_dim:]

    def generate(self, magnitude, params=None):
        """Residual generator applied to |z| of shape (..., P, output_dim)."""
        p = params or self.params
        hidden = ops.tanh(ops.matmul(magnitude, p['generator_w1']) + p['generator_b1'])
        return magnitude + ops.matmul(hidden, p['generator_w2']) + p['generator_b2']


class CopulaSpec:
    """
    Gaussian copula over M heads parameterized by an unconstrained lower
    triangle: L = rows of tril(raw) scaled to unit norm, Sigma = L L^T.
    """

    def __init__(self, raw_factor):
        raw = as_matrix(raw_factor, 'copula factor')
        if raw.shape[0] != raw.shape[1] or raw.shape[0] < 2:
            raise ShapeMismatchError("Copula factor must be square with M >= 2", raw.shape, raw.shape[::-1])
        self.raw_factor = np.tril(raw)
        self.validate()

    def __repr__(self):
        return f"CopulaSpec(M={self.M})"

    @property
    def M(self):
        return self.raw_factor.shape[0]

    @classmethod
    def independent(cls, M):
        return cls(np.eye(M))

    @classmethod
    def from_correlation(cls, sigma):
        sigma = as_matrix(sigma, 'correlation')
        if not np.allclose(np.diag(sigma), 1.0, rtol=0, atol=1e-12):
            raise DomainError("Correlation matrix must have unit diagonal")
        return cls(cholesky(sigma))

    def factor(self, raw=None):
        """Row-normalized lower-triangular factor L (dual-mode in ``raw``)."""
        raw = self.raw_factor if raw is None else raw
        lower = ops.mul(raw, np.tril(np.ones((self.M, self.M))))
        norms = ops.sqrt(ops.sum(ops.square(lower), axis=1, keepdims=True))
        return ops.div(lower, norms)

    @property
    def correlation(self):
        L = self.factor()
        return L @ L.T

    def validate(self):
        L = self.factor()
        if not np.all(np.isfinite(L)):
            raise DomainError("Copula factor has an all-zero row")
        cholesky(L @ L.T)
        return self


def copula_log_term(factor, eps, coupled):
    """
    Summed log c(Phi(V)) for V = L E, written without an inverse:
    -n sum log|L_ii| - (|E|^2 - |V|^2) / 2 with n the number of draws per
    head. ``eps`` and ``coupled`` are per-head lists; the term is exactly
    zero when L = I.
    """
    draws = int(np.prod(np.shape(eps[0])))
    log_diag = ops.log(ops.abs(ops.getitem(factor, (np.arange(len(eps)), np.arange(len(eps))))))
    quad = 0.0
    for e_m, v_m in zip(eps, coupled):
        quad = quad + ops.sum(ops.square(e_m)) - ops.sum(ops.square(v_m))
    return -float(draws) * ops.sum(log_diag) - 0.5 * quad


def gaussian_copula_log_density(u, sigma):
    """
    log c(u) = -1/2 log det Sigma - 1/2 eta^T (Sigma^-1 - I) eta, eta = Phi^-1(u).

    ``u`` has shape (..., M); returns a float for a single point.
    """
    u = np.asarray(u, dtype=np.float64)
    sigma = as_matrix(sigma, 'correlation')
    if u.shape[-1] != sigma.shape[0]:
        raise ShapeMismatchError("Copula point does not match Sigma", u.shape, sigma.shape)
    eta = gauss_quantile(u)
    factor = cholesky(sigma)
    flat = eta.reshape(-1, sigma.shape[0])
    solved = cho_solve((factor, True), flat.T).T
    quad = np.sum(flat * solved, axis=-1) - np.sum(flat * flat, axis=-1)
    out = (-0.5 * log_det_from_cholesky(factor) - 0.5 * quad).reshape(u.shape[:-1])
    return float(out) if out.ndim == 0 else out
