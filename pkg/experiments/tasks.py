"""
Desk-scale synthetic tasks.

Each task is a small frozen description; ``generate(rng)`` returns the
train and test batches and is a pure function of the task and the stream.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from attention.layers import GraphMask
from core.exceptions import DomainError
from training.batches import GraphBatch, RegressionBatch, SequenceBatch

logger = logging.getLogger(__name__)

MAX_GRAPH_ATTEMPTS = 100


@dataclass(frozen=True)
class SyntheticSeqTask:
    """Label 1 iff the marker token occurs somewhere in the sequence."""
    vocab_size: int = 16
    min_length: int = 8
    max_length: int = 32
    marker: int = 7
    n_train: int = 200
    n_test: int = 200
    d_model: int = 16

    name = 'seq'

    def __post_init__(self):
        if not 0 <= self.marker < self.vocab_size:
            raise DomainError(f"Marker {self.marker} is outside the vocabulary")
        if not 1 <= self.min_length <= self.max_length:
            raise DomainError("Sequence lengths must satisfy 1 <= min <= max")

    def _sequences(self, n, rng):
        tokens = np.zeros((n, self.max_length), dtype=np.int64)
        mask = np.zeros((n, self.max_length), dtype=bool)
        # alternate then shuffle so every split is balanced
        labels = rng.permutation(np.arange(n) % 2)
        for i in range(n):
            length = int(rng.integers(self.min_length, self.max_length + 1))
            seq = rng.integers(0, self.vocab_size - 1, size=length)
            seq = np.where(seq >= self.marker, seq + 1, seq)
            if labels[i]:
                seq[int(rng.integers(0, length))] = self.marker
            tokens[i, :length] = seq
            mask[i, :length] = True
        return SequenceBatch(tokens, mask, labels)

    def generate(self, rng):
        return self._sequences(self.n_train, rng.child('train')), self._sequences(self.n_test, rng.child('test'))

    def marker_positions(self, batch):
        """First marker position per sequence, -1 when absent."""
        hits = (batch.tokens == self.marker) & batch.mask
        return np.where(hits.any(axis=1), np.argmax(hits, axis=1), -1)


def sbm_adjacency(sizes, p_in, p_out, rng):
    """Symmetric two-block stochastic block model adjacency without self-loops."""
    communities = np.repeat(np.arange(len(sizes)), sizes)
    n = len(communities)
    probability = np.where(communities[:, None] == communities[None, :], p_in, p_out)
    upper = np.triu(rng.random((n, n)) < probability, 1)
    return upper | upper.T, communities


def is_connected(adjacency):
    count, _ = connected_components(csr_matrix(adjacency), directed=False)
    return count == 1


@dataclass(frozen=True)
class SyntheticGraphTask:
    """Two-community SBM; features are the community mean plus Gaussian noise."""
    n_nodes: int = 60
    p_in: float = 0.3
    p_out: float = 0.02
    n_features: int = 8
    noise: float = 1.0
    n_train: int = 30

    name = 'graph'
    n_classes = 2

    def generate(self, rng):
        sizes = (self.n_nodes // 2, self.n_nodes - self.n_nodes // 2)
        for attempt in range(MAX_GRAPH_ATTEMPTS):
            adjacency, labels = sbm_adjacency(sizes, self.p_in, self.p_out, rng.child(f'graph-{attempt}'))
            if is_connected(adjacency):
                break
            logger.info(f"SBM draw {attempt} is disconnected; redrawing")
        else:
            raise DomainError(f"No connected SBM graph in {MAX_GRAPH_ATTEMPTS} draws")

        features_rng = rng.child('features')
        means = features_rng.normal(0.0, 1.0, size=(2, self.n_features))
        features = means[labels] + self.noise * features_rng.normal(0.0, 1.0, size=(self.n_nodes, self.n_features))
        order = rng.child('split').permutation(self.n_nodes)
        batch = GraphBatch(features, GraphMask.from_adjacency(adjacency), labels, np.sort(order[:self.n_train]))
        return batch, batch.with_index(np.sort(order[self.n_train:]))


def sinc(x):
    return np.sinc(np.asarray(x, dtype=np.float64) / np.pi)


@dataclass(frozen=True)
class ToyRegressionTask:
    """
    y = sin(x) / x + N(0, noise^2) on a grid over [-3, 3]. Even grid points
    train, odd ones test; training queries never attend to themselves.
    """
    n_points: int = 120
    low: float = -3.0
    high: float = 3.0
    noise: float = 0.05

    name = 'regression'

    def generate(self, rng):
        x = np.linspace(self.low, self.high, self.n_points)
        y = sinc(x) + self.noise * rng.child('noise').standard_normal(self.n_points)
        x_train, y_train = x[0::2], y[0::2]
        x_test, y_test = x[1::2], y[1::2]
        train = RegressionBatch(x_train, y_train, x_train, y_train, mask=~np.eye(len(x_train), dtype=bool))
        test = RegressionBatch(x_test, y_test, x_train, y_train)
        return train, test
