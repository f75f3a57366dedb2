"""
Operation counting for attention-weight complexity.

Counts are multiply-accumulates tallied by the attention layers through
``counter.add(phase, amount)``; they depend on shapes only, so the fits below
are exact and machine independent.
"""
import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from attention.config import AttentionConfig, Variant, make_sampler
from attention.layers import attend_sequence
from core.exceptions import DomainError

logger = logging.getLogger(__name__)

PHASES = ('projection', 'scores', 'features', 'kernel', 'magnitude', 'normalization', 'context', 'copula')
# the context product is not part of computing the weights
WEIGHT_PHASES = tuple(phase for phase in PHASES if phase != 'context')

# name -> (monomial in (T, d, R, M), power of T)
TERMS = {
    'T^2 d': (lambda T, d, R, M: T * T * d, 2),
    'T d^2': (lambda T, d, R, M: T * d * d, 1),
    'T^2 R': (lambda T, d, R, M: T * T * R, 2),
    'T d R': (lambda T, d, R, M: T * d * R, 1),
    'T^2': (lambda T, d, R, M: T * T, 2),
    'T d': (lambda T, d, R, M: T * d, 1),
    'd M^3': (lambda T, d, R, M: d * M ** 3, 0),
    'd R': (lambda T, d, R, M: d * R, 0),
}

FIXED_BASIS = ('T^2 d', 'T d^2', 'T^2', 'T d')
KERNEL_BASIS = ('T^2 R', 'T d^2', 'T d R', 'T^2', 'T d')
COPULA_BASIS = KERNEL_BASIS + ('d M^3', 'd R')


class OpCounter:
    """Multiply-accumulate tally per phase."""

    def __init__(self):
        self.counts = Counter()

    def __repr__(self):
        return f"OpCounter({dict(self.counts)})"

    def add(self, phase, amount):
        if phase not in PHASES:
            raise DomainError(f"Unknown phase {phase!r}")
        amount = int(amount)
        if amount < 0:
            raise DomainError(f"Operation count must be non-negative, got {amount}")
        self.counts[phase] += amount

    def total(self, phases=WEIGHT_PHASES):
        return sum(self.counts[phase] for phase in phases)

    def as_row(self):
        return {phase: self.counts[phase] for phase in PHASES}


def copula_operations(M, d, R):
    """Cholesky of the head correlation per coordinate plus coupling R draws."""
    return d * M ** 3 + R * d * M * M


def basis_for(variant):
    variant = Variant(variant)
    if variant == Variant.MIKAN:
        return COPULA_BASIS
    if variant in (Variant.IKA_S, Variant.IKA_NS, Variant.IKAN, Variant.IKAN_DIRECT):
        return KERNEL_BASIS
    return FIXED_BASIS


def count_operations(variant, T, d, R, M, rng):
    """Run one self-attention pass over a (1, T, d) input and tally its operations."""
    config = AttentionConfig.for_variant(variant, M=M, R=R, d_k=d)
    counter = OpCounter()
    init = rng.child('params')
    h = init.normal(0.0, 1.0, size=(1, T, d))
    params = {name: init.normal(0.0, d ** -0.5, size=(M, d, d)) for name in ('W_Q', 'W_K', 'W_V')}
    samples = None
    sampler = make_sampler(config, d, d, rng.child('sampler'))
    if sampler is not None:
        params.update(sampler.parameters())
        samples = sampler.samples(params, h.mean(axis=(0, 1)), sampler.draw_noise((), rng.child('noise')))
    if config.variant == Variant.MIKAN:
        counter.add('copula', copula_operations(M, d, R))
    attend_sequence(h, params, config, samples, counter=counter)
    return counter


@dataclass
class ComplexityReport:
    variant: str
    basis: tuple
    coefficients: dict
    residual: float
    doubling: list = field(default_factory=list)
    points: list = field(default_factory=list)

    def passed(self, tolerance=0.01):
        exact = all(abs(ratio - 4.0) <= 1e-9 for _, ratio in self.doubling)
        return self.residual <= tolerance and exact

    def rows(self):
        return [{'variant': self.variant, 'term': name, 'coefficient': value} for name, value in self.coefficients.items()]


def _check_grid(t_grid):
    t_grid = sorted(int(t) for t in t_grid)
    doublings = [(a, b) for a, b in zip(t_grid, t_grid[1:]) if b == 2 * a]
    if len(doublings) < 3:
        raise DomainError(f"T grid needs at least three doublings, got {t_grid}")
    return t_grid, doublings


def attributed(coefficients, power, T, d, R, M):
    """Part of the fitted count carried by terms of the given power of T."""
    return sum(coef * TERMS[name][0](T, d, R, M) for name, coef in coefficients.items() if TERMS[name][1] == power)


def verify_complexity(variant, t_grid, d, R, M, rng):
    """
    Fit weight-phase counts to the variant's asymptotic terms by
    non-negative least squares over T x {d, 2d} x {R, 2R}.

    ``residual`` is the residual norm relative to the count norm; each T
    doubling must scale the T^2-attributed count by exactly 4.
    """
    variant = Variant(variant).value
    t_grid, doublings = _check_grid(t_grid)
    basis = basis_for(variant)
    points, design, totals = [], [], []
    for dd in (d, 2 * d):
        for rr in (R, 2 * R):
            for T in t_grid:
                counter = count_operations(variant, T, dd, rr, M, rng.child(f'{T}-{dd}-{rr}'))
                total = counter.total()
                points.append({'variant': variant, 'T': T, 'd': dd, 'R': rr, 'M': M, 'total': total, **counter.as_row()})
                design.append([TERMS[name][0](T, dd, rr, M) for name in basis])
                totals.append(total)

    design = np.asarray(design, dtype=np.float64)
    totals = np.asarray(totals, dtype=np.float64)
    scale = design.max(axis=0)
    solution, rnorm = nnls(design / scale, totals)
    coefficients = dict(zip(basis, (solution / scale).tolist()))
    residual = float(rnorm / np.linalg.norm(totals))

    doubling = [
        (b, attributed(coefficients, 2, b, d, R, M) / attributed(coefficients, 2, a, d, R, M))
        for a, b in doublings
    ]
    report = ComplexityReport(variant, basis, coefficients, residual, doubling, points)
    logger.info(f"{variant}: complexity fit residual {residual:.2e} over {len(points)} shapes")
    return report
