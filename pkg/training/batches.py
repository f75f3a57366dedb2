from dataclasses import dataclass
from typing import Optional

import numpy as np

from attention.layers import GraphMask
from core.exceptions import ShapeMismatchError


@dataclass
class SequenceBatch:
    """Padded token ids (B, T) with a validity mask and one label per row."""
    tokens: np.ndarray
    mask: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.tokens = np.asarray(self.tokens, dtype=np.int64)
        self.mask = np.asarray(self.mask, dtype=bool)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.tokens.shape != self.mask.shape or self.labels.shape != self.tokens.shape[:1]:
            raise ShapeMismatchError("Sequence batch parts disagree", self.tokens.shape, self.labels.shape)

    def __len__(self):
        return len(self.labels)

    def subset(self, rows):
        return SequenceBatch(self.tokens[rows], self.mask[rows], self.labels[rows])


@dataclass
class GraphBatch:
    """Node features with the graph mask; ``index`` selects the scored nodes."""
    features: np.ndarray
    mask: GraphMask
    labels: np.ndarray
    index: np.ndarray

    def __len__(self):
        return len(self.index)

    def with_index(self, index):
        return GraphBatch(self.features, self.mask, self.labels, np.asarray(index, dtype=np.int64))


@dataclass
class RegressionBatch:
    """
    Query inputs regressed against a context set of (x, y) pairs; ``mask``
    of shape (T, S) hides pairs such as a point attending to itself.
    """
    x_query: np.ndarray
    y_query: np.ndarray
    x_keys: np.ndarray
    y_keys: np.ndarray
    mask: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.y_query)


@dataclass
class LinearBatch:
    x: np.ndarray
    y: np.ndarray

    def __len__(self):
        return len(self.y)
