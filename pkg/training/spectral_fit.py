"""
Fit an implicit spectral density so that its Monte Carlo kernel matches a
target stationary kernel on a grid of offsets.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from autodiff import ops
from autodiff.tape import Tape, value_of
from core.exceptions import ShapeMismatchError
from spectral.densities import DENSITY_FIELDS
from spectral.samplers import implicit_points
from training.optim import SGD

logger = logging.getLogger(__name__)


@dataclass
class SpectralFit:
    params: Dict[str, np.ndarray]
    losses: List[float] = field(default_factory=list)


def density_kernel(density, params, context, eps, offsets):
    """f(delta) = mean_r cos(w_r . delta) over the density's mirrored points."""
    sample = implicit_points(context, density, eps, params)
    angles = ops.matmul(sample.points, np.asarray(offsets, dtype=np.float64).T)
    return ops.mean(ops.cos(angles), axis=0)


def fit_density(density, target, offsets, rng, steps=300, R=256, lr=0.05, momentum=0.9, context=None):
    """
    Minimize the mean squared gap between the density's kernel and
    ``target(offsets)`` with fresh base draws every step.

    ``offsets`` has shape (G, d) with d the density's output dimension.
    """
    offsets = np.asarray(offsets, dtype=np.float64)
    if offsets.ndim != 2 or offsets.shape[1] != density.output_dim:
        raise ShapeMismatchError("Offsets must be (G, d)", offsets.shape, (None, density.output_dim))
    context = np.ones(density.input_dim) if context is None else np.asarray(context, dtype=np.float64)
    targets = np.asarray(target(offsets), dtype=np.float64)
    params = {name: np.array(density.params[name]) for name in DENSITY_FIELDS}
    optimizer = SGD(lr, momentum)
    fit = SpectralFit(params)

    for step in range(steps):
        eps = rng.child(f'step-{step}').standard_normal((R, density.output_dim))
        tape = Tape()
        nodes = {name: tape.variable(value, name) for name, value in params.items()}
        gap = density_kernel(density, nodes, context, eps, offsets) - targets
        loss = ops.mean(ops.square(gap))
        grads = tape.backward(loss)
        fit.losses.append(float(value_of(loss)))
        params = optimizer.step(params, grads)

    fit.params = params
    logger.info(f"Spectral fit over {steps} steps: loss {fit.losses[0]:.4f} -> {fit.losses[-1]:.4f}")
    return fit
