"""
Single-layer attention models used by the desk-scale tasks.

Every model exposes the same protocol: ``parameters()`` lists (name, array)
pairs in registration order (model weights first, then the spectral
sampler's), ``draw_noise`` consumes randomness, and ``forward`` is a
deterministic function of (params, batch, noise) that accepts plain arrays
or tape Nodes.
"""
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass
from typing import Any, Optional, Sequence

import numpy as np

from attention.config import Mode, make_sampler
from attention.layers import attend_graph, attend_sequence
from autodiff import ops
from autodiff.tape import value_of
from core.exceptions import DomainError

logger = logging.getLogger(__name__)

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass
class ModelOutput:
    prediction: Any
    attention: Optional[Any] = None
    samples: Sequence = ()


def _categorical_log_likelihood(logits, labels, rows=None):
    """Summed log p(label) over ``rows`` (every row by default)."""
    rows = np.arange(len(labels)) if rows is None else np.asarray(rows)
    log_probs = ops.log_softmax(logits)
    return ops.sum(ops.getitem(log_probs, (rows, labels[rows])))


def _gaussian_log_likelihood(prediction, target, noise_std):
    residual = (prediction - target) / noise_std
    count = np.size(target)
    return -0.5 * ops.sum(ops.square(residual)) - count * (math.log(noise_std) + _LOG_SQRT_2PI)


class AttentionModel:
    """Shared plumbing: parameter registry, spectral sampler and noise."""
    metric_name = 'accuracy'
    higher_is_better = True

    def __init__(self, config, rng, spectral_dim, context_dim):
        self.config = config
        self._params = OrderedDict()
        self.sampler = make_sampler(config, spectral_dim, context_dim, rng.child('sampler'))

    def __repr__(self):
        return f"{type(self).__name__}(variant={self.config.variant.value}, M={self.config.M})"

    @property
    def variant(self):
        return self.config.variant

    def register(self, name, value):
        self._params[name] = np.asarray(value, dtype=np.float64)

    def parameters(self):
        extra = self.sampler.parameters() if self.sampler is not None else []
        return list(self._params.items()) + list(extra)

    def initial_params(self):
        return OrderedDict((name, np.array(value)) for name, value in self.parameters())

    def parameter_count(self):
        return int(sum(np.size(value) for _, value in self.parameters()))

    def draw_noise(self, batch, rng):
        if self.sampler is None:
            return None
        return self.sampler.draw_noise(self.context_summary_shape(batch), rng)

    def context_summary_shape(self, batch):
        """Batch shape of the pooled input that conditions the spectral density."""
        return ()

    def spectral_samples(self, params, summary, noise):
        if self.sampler is None:
            return None
        return self.sampler.samples(params, summary, noise)

    def copula_factor(self, params):
        factor = getattr(self.sampler, 'factor', None)
        return factor(params) if factor is not None else None

    def forward(self, params, batch, noise, counter=None):
        raise NotImplementedError

    def log_likelihood(self, output, batch):
        raise NotImplementedError

    def metric(self, output, batch):
        raise NotImplementedError


class SequenceClassifier(AttentionModel):
    """
    Attention pooling over token embeddings: one learned query attends over
    the sequence and the concatenated head contexts feed a linear classifier.
    """

    def __init__(self, config, rng, vocab_size=16, d_model=16, n_classes=2):
        if config.mode != Mode.SEQUENCE:
            raise DomainError("SequenceClassifier needs a sequence-mode config")
        super().__init__(config, rng, config.d_k, d_model)
        init = rng.child('model')
        M, d_k = config.M, config.d_k
        self.register('embedding', init.normal(0.0, 1.0, size=(vocab_size, d_model)))
        self.register('query', init.normal(0.0, 1.0, size=(1, d_model)))
        for name in ('W_Q', 'W_K', 'W_V'):
            self.register(name, init.normal(0.0, 1.0 / math.sqrt(d_model), size=(M, d_model, d_k)))
        self.register('out_w', init.normal(0.0, 1.0 / math.sqrt(M * d_k), size=(M * d_k, n_classes)))
        self.register('out_b', np.zeros(n_classes))

    def context_summary_shape(self, batch):
        return (len(batch),)

    def _summary(self, h, mask):
        weights = mask[..., None].astype(np.float64)
        return ops.sum(h * weights, axis=-2) / np.sum(weights, axis=-2)

    def forward(self, params, batch, noise, counter=None):
        h = ops.getitem(params['embedding'], batch.tokens)
        samples = self.spectral_samples(params, self._summary(h, batch.mask), noise)
        attention = attend_sequence(
            params['query'], params, self.config, samples,
            mask=batch.mask[:, None, :], memory=h, counter=counter,
        )
        pooled = ops.reshape(attention.context, (len(batch), -1))
        logits = ops.matmul(pooled, params['out_w']) + params['out_b']
        return ModelOutput(logits, attention, samples or ())

    def log_likelihood(self, output, batch):
        return _categorical_log_likelihood(output.prediction, batch.labels)

    def metric(self, output, batch):
        predicted = np.argmax(value_of(output.prediction), axis=-1)
        return float(np.mean(predicted == batch.labels))

    def attended_positions(self, output):
        """Key position with the largest head-averaged weight, per sequence."""
        weights = np.asarray(value_of(output.attention.weights))
        return np.argmax(weights.mean(axis=-3)[..., 0, :], axis=-1)


class GraphClassifier(AttentionModel):
    """GAT layer, concatenated heads, tanh, then a linear node classifier."""

    def __init__(self, config, rng, n_features, n_classes, d_head=None):
        if config.mode != Mode.GRAPH:
            raise DomainError("GraphClassifier needs a graph-mode config")
        d_head = d_head or config.d_k
        super().__init__(config, rng, 2 * d_head, n_features)
        init = rng.child('model')
        M = config.M
        self.register('W', init.normal(0.0, 1.0 / math.sqrt(n_features), size=(M, n_features, d_head)))
        self.register('a', init.normal(0.0, 1.0 / math.sqrt(2 * d_head), size=(M, 2 * d_head)))
        self.register('out_w', init.normal(0.0, 1.0 / math.sqrt(M * d_head), size=(M * d_head, n_classes)))
        self.register('out_b', np.zeros(n_classes))

    def forward(self, params, batch, noise, counter=None):
        summary = np.mean(batch.features, axis=0)
        samples = self.spectral_samples(params, summary, noise)
        attention = attend_graph(batch.features, params, batch.mask, self.config, samples, counter=counter)
        n = batch.features.shape[0]
        heads = ops.reshape(ops.swapaxes(attention.context, 0, 1), (n, -1))
        logits = ops.matmul(ops.tanh(heads), params['out_w']) + params['out_b']
        return ModelOutput(logits, attention, samples or ())

    def log_likelihood(self, output, batch):
        return _categorical_log_likelihood(output.prediction, batch.labels, batch.index)

    def metric(self, output, batch):
        predicted = np.argmax(value_of(output.prediction), axis=-1)[batch.index]
        return float(np.mean(predicted == batch.labels[batch.index]))


class SetRegressor(AttentionModel):
    """
    Attention regression: embedded query inputs attend over embedded context
    inputs and average the context targets; heads are mixed linearly.
    """
    metric_name = 'rmse'
    higher_is_better = False

    def __init__(self, config, rng, d_model=8, noise_std=0.1):
        if config.mode != Mode.SEQUENCE:
            raise DomainError("SetRegressor needs a sequence-mode config")
        super().__init__(config, rng, config.d_k, d_model)
        init = rng.child('model')
        M, d_k = config.M, config.d_k
        self.noise_std = float(noise_std)
        self.register('embed_w', init.normal(0.0, 1.0, size=(1, d_model)))
        self.register('embed_b', init.normal(0.0, 1.0, size=d_model))
        for name in ('W_Q', 'W_K'):
            self.register(name, init.normal(0.0, 1.0 / math.sqrt(d_model), size=(M, d_model, d_k)))
        self.register('head_w', np.full(M, 1.0 / M))
        self.register('head_b', np.zeros(1))

    def _embed(self, params, x):
        column = np.asarray(x, dtype=np.float64)[:, None]
        return ops.tanh(ops.matmul(column, params['embed_w']) + params['embed_b'])

    def forward(self, params, batch, noise, counter=None):
        queries = self._embed(params, batch.x_query)
        keys = self._embed(params, batch.x_keys)
        samples = self.spectral_samples(params, ops.mean(keys, axis=0), noise)
        attention = attend_sequence(
            queries, params, self.config, samples, mask=batch.mask, memory=keys,
            values=np.asarray(batch.y_keys, dtype=np.float64)[:, None], counter=counter,
        )
        per_head = ops.reshape(attention.context, (self.config.M, -1))
        mixed = ops.sum(per_head * ops.expand_dims(params['head_w'], -1), axis=0)
        return ModelOutput(mixed + params['head_b'], attention, samples or ())

    def log_likelihood(self, output, batch):
        return _gaussian_log_likelihood(output.prediction, np.asarray(batch.y_query, dtype=np.float64), self.noise_std)

    def metric(self, output, batch):
        residual = np.asarray(value_of(output.prediction)) - batch.y_query
        return float(np.sqrt(np.mean(residual ** 2)))


class LinearRegression:
    """y = x w + b with a unit-variance Gaussian likelihood."""
    metric_name = 'rmse'
    higher_is_better = False
    sampler = None

    def __init__(self, n_features, rng):
        init = rng.child('model')
        self._params = OrderedDict([
            ('w', init.normal(0.0, 1.0, size=n_features)),
            ('b', np.zeros(1)),
        ])

    def parameters(self):
        return list(self._params.items())

    def initial_params(self):
        return OrderedDict((name, np.array(value)) for name, value in self.parameters())

    def parameter_count(self):
        return int(sum(np.size(v) for v in self._params.values()))

    def draw_noise(self, batch, rng):
        return None

    def copula_factor(self, params):
        return None

    def forward(self, params, batch, noise, counter=None):
        prediction = ops.matmul(np.asarray(batch.x, dtype=np.float64), ops.reshape(params['w'], (-1, 1)))
        return ModelOutput(ops.reshape(prediction, (-1,)) + params['b'])

    def log_likelihood(self, output, batch):
        return _gaussian_log_likelihood(output.prediction, np.asarray(batch.y, dtype=np.float64), 1.0)

    def metric(self, output, batch):
        residual = np.asarray(value_of(output.prediction)) - batch.y
        return float(np.sqrt(np.mean(residual ** 2)))
