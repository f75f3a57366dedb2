"""
Deterministic full-batch training loop.

Each epoch draws its noise from ``rng.child('epoch-<n>')``, so a run is a
pure function of (model initialization, data, seed, config). Checkpoints are
written through ``spectral.checkpoint`` in parameter registration order.
"""
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from attention.diagnostics import diagnostics
from autodiff.tape import Tape, value_of
from core.exceptions import DivergenceError, DomainError, NonFiniteError
from spectral.checkpoint import save_checkpoint
from training.elbo import elbo
from training.optim import SGD

logger = logging.getLogger(__name__)

LOG_COLUMNS = (
    'epoch', 'loss', 'log_lik', 'log_prior', 'log_q', 'copula', 'elbo', 'metric', 'eval_metric',
    'max_similarity', 'mean_log_magnitude', 'cross_head_std',
)


@dataclass
class TrainConfig:
    epochs: int = 200
    lr: float = 0.05
    momentum: float = 0.9
    analytic_kl: bool = False
    checkpoint_dir: Optional[Path] = None
    checkpoint_every: int = 50
    log_every: int = 25

    def __post_init__(self):
        if self.epochs < 0:
            raise DomainError(f"epochs must be non-negative, got {self.epochs}")
        if self.checkpoint_every < 1:
            raise DomainError("checkpoint_every must be at least 1")


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    log_lik: float
    log_prior: float
    log_q: float
    copula: float
    elbo: float
    metric: float
    eval_metric: Optional[float] = None
    max_similarity: Optional[float] = None
    mean_log_magnitude: Optional[float] = None
    cross_head_std: Optional[float] = None

    def as_row(self):
        return asdict(self)


@dataclass
class TrainingResult:
    records: List[EpochRecord]
    params: Dict[str, np.ndarray]
    parameter_count: int
    checkpoint_path: Optional[Path] = None
    initial_params: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def final(self):
        return self.records[-1] if self.records else None

    def rows(self):
        return [record.as_row() for record in self.records]


def compute_loss(model, params, batch, noise, analytic_kl=False):
    """Per-example negative ELBO with its terms and the forward output."""
    terms, output = elbo(model, params, batch, noise=noise, analytic_kl=analytic_kl)
    return -terms.elbo / float(len(batch)), terms, output


def loss_and_grads(model, params, batch, noise, analytic_kl=False):
    tape = Tape()
    nodes = {name: tape.variable(value, name) for name, value in params.items()}
    loss, terms, output = compute_loss(model, nodes, batch, noise, analytic_kl)
    grads = tape.backward(loss)
    return float(value_of(loss)), grads, terms, output


def evaluate(model, params, batch, rng):
    """Metric and forward output on plain arrays with one noise draw."""
    output = model.forward(params, batch, model.draw_noise(batch, rng))
    return model.metric(output, batch), output


def _checkpoint(model, params, config, epoch, name):
    if config.checkpoint_dir is None:
        return None
    path = Path(config.checkpoint_dir) / f'{name}-epoch{epoch:04d}.json'
    ordered = [(key, params[key]) for key, _ in model.parameters()]
    return save_checkpoint(path, ordered, {'epoch': epoch, 'model': repr(model)})


def _diagnostic_columns(output):
    if output.attention is None:
        return {}
    summary = diagnostics(output.attention).summary()
    return {
        'max_similarity': summary['max_similarity'],
        'mean_log_magnitude': summary['mean_log_magnitude'],
        'cross_head_std': summary['cross_head_std'],
    }


def train(model, batch, config, rng, eval_batch=None, name='model'):
    """
    Optimize ``model`` on ``batch`` for ``config.epochs`` full-batch steps.

    Raises DivergenceError carrying the last good checkpoint path when the
    loss or a gradient stops being finite.
    """
    params = model.initial_params()
    initial = {key: np.array(value) for key, value in params.items()}
    optimizer = SGD(config.lr, config.momentum)
    last_good = _checkpoint(model, params, config, 0, name)
    records = []
    logger.info(f"Training {model!r} for {config.epochs} epochs with {optimizer!r}")

    for epoch in range(1, config.epochs + 1):
        noise = model.draw_noise(batch, rng.child(f'epoch-{epoch}'))
        try:
            loss, grads, terms, output = loss_and_grads(model, params, batch, noise, config.analytic_kl)
            eval_metric = None
            if eval_batch is not None:
                eval_metric, _ = evaluate(model, params, eval_batch, rng.child(f'eval-{epoch}'))
        except NonFiniteError as e:
            logger.error(f"{name} diverged at epoch {epoch}: {e}")
            raise DivergenceError(epoch, last_good) from e

        values = terms.values()
        records.append(EpochRecord(
            epoch=epoch, loss=loss, log_lik=values['log_lik'], log_prior=values['log_prior'],
            log_q=values['log_q'], copula=values['copula'], elbo=values['elbo'],
            metric=model.metric(output, batch), eval_metric=eval_metric,
            **_diagnostic_columns(output),
        ))
        params = optimizer.step(params, grads)
        if not all(np.all(np.isfinite(value)) for value in params.values()):
            logger.error(f"{name} produced non-finite parameters at epoch {epoch}")
            raise DivergenceError(epoch, last_good)
        if epoch % config.checkpoint_every == 0 or epoch == config.epochs:
            last_good = _checkpoint(model, params, config, epoch, name) or last_good
        if epoch % config.log_every == 0:
            logger.info(f"{name} epoch {epoch}: loss {loss:.4f}, {model.metric_name} {records[-1].metric:.4f}")

    return TrainingResult(records, params, model.parameter_count(), last_good, initial)
