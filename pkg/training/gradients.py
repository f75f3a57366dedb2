import logging

import numpy as np

from autodiff.gradcheck import FD_STEP, gradcheck
from training.trainer import compute_loss

logger = logging.getLogger(__name__)

PERTURBATION = 0.3


def perturbed_params(model, rng, scale=PERTURBATION):
    """Initial parameters plus N(0, scale^2) noise, one sub-stream per name."""
    params = model.initial_params()
    if not scale:
        return params
    return {
        name: value + scale * rng.child(f'perturb-{name}').standard_normal(np.shape(value))
        for name, value in params.items()
    }


def check_model_gradients(model, batch, rng, scale=PERTURBATION, analytic_kl=False, step=FD_STEP):
    """
    Gradcheck of the per-example negative ELBO through the model's full
    forward path, at a perturbed parameter point and one fixed noise draw.
    """
    params = perturbed_params(model, rng, scale)
    noise = model.draw_noise(batch, rng.child('noise'))

    def loss_fn(values):
        loss, _, _ = compute_loss(model, values, batch, noise, analytic_kl)
        return loss

    report = gradcheck(loss_fn, params, step=step)
    logger.info(f"{model!r}: max relative gradient error {report.max_relative_error:.3e}")
    return report
