"""scikit-learn style wrappers around the readouts and the toy MPNN.

``X`` is always a :class:`GraphBatch` or a list of graphs
``(node_features, edges[, edge_features])``; ``y`` has one entry per graph.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .batch import build_batch
from .grad import backward
from .mpnn import MpnnModel
from .optim import AdamState
from .readout import Classic, Family, ReadoutParams, classic_forward, readout
from .train import GraphDataset, predict, train
from .validation import check_family, check_graphs, check_readout, check_targets, graph_list


class GeneralizedReadout(TransformerMixin, BaseEstimator):
    """Pool each graph's node features into one row.

    Parameters
    ----------
    family : {"softmax", "powermean", "mean", "max", "sum", "min"}
    beta, p : float
        Ignored by the classic pools.

    Nothing is learned in ``fit``; it checks the input and records
    ``n_features_in_``.
    """

    def __init__(self, family="softmax", beta=1.0, p=1.0):
        self.family = family
        self.beta = beta
        self.p = p

    def _params(self):
        family = check_family(self.family)
        if isinstance(family, Classic):
            return family
        return ReadoutParams(family, self.beta, self.p)

    def fit(self, X, y=None):
        self._params()
        batch = check_graphs(X)
        self.n_features_in_ = batch.feature_dim
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        batch = check_graphs(X)
        if batch.feature_dim != self.n_features_in_:
            raise ValueError(f"X has {batch.feature_dim} features, fitted with {self.n_features_in_}")
        params = self._params()
        if isinstance(params, Classic):
            return classic_forward(batch.node_features, batch.offsets, params)
        return readout(batch, params)

    def gradient(self, X, upstream):
        """Analytic gradients of ``sum(upstream * transform(X))``."""
        check_is_fitted(self, "n_features_in_")
        params = self._params()
        if isinstance(params, Classic):
            raise ValueError("gradient() is only defined for the generalized families")
        return backward(check_graphs(X), params, upstream)


class _BaseMPNN(BaseEstimator):
    _classification = False

    def __init__(self, readout="Softmax1", hidden_dim=32, num_steps=3, epochs=100,
                 batch_size=32, lr=1e-4, validation_fraction=0.1, random_state=0):
        self.readout = readout
        self.hidden_dim = hidden_dim
        self.num_steps = num_steps
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def _fit(self, X, y):
        graphs = graph_list(X)
        y = check_targets(y, len(graphs))
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in (0, 1)")
        edge_dim = 0 if graphs[0][2] is None else graphs[0][2].shape[1]
        self.n_features_in_ = graphs[0][0].shape[1]
        rng = np.random.default_rng(self.random_state)
        order = rng.permutation(len(graphs))
        n_val = max(1, int(round(self.validation_fraction * len(graphs))))
        if n_val >= len(graphs):
            raise ValueError("need at least two graphs to hold out a validation split")
        examples = [(graphs[i], float(y[i])) for i in order]
        data = GraphDataset("custom", self._classification,
                            train=examples[n_val:], val=examples[:n_val], test=examples[:n_val])
        self.model_ = MpnnModel(
            self.n_features_in_, self.hidden_dim, 1, self.num_steps,
            edge_dim=edge_dim, readout=check_readout(self.readout), seed=self.random_state,
        )
        self.result_ = train(self.model_, data, self.epochs, self.batch_size, self.random_state,
                             AdamState(lr=self.lr), preset=str(self.readout))
        if self.result_.status != "ok":
            raise RuntimeError(f"training aborted: {self.result_.message}")
        self.readout_params_ = self.model_.readout_values()
        return self

    def _decision(self, X):
        check_is_fitted(self, "model_")
        return predict(self.model_, check_graphs(X))[:, 0]


class MPNNRegressor(RegressorMixin, _BaseMPNN):
    """Graph-level regression with a generalized (optionally learned) readout.

    After ``fit``: ``model_``, ``result_`` (per-epoch record) and
    ``readout_params_`` (final ``(beta, p)``, or ``(None, None)`` for a
    classic pool).
    """

    def fit(self, X, y):
        return self._fit(X, y)

    def predict(self, X):
        return self._decision(X)


class MPNNClassifier(ClassifierMixin, _BaseMPNN):
    """Binary graph classification trained with BCE on logits."""

    _classification = True

    def fit(self, X, y):
        y = np.asarray(y).reshape(-1)
        self.classes_ = np.unique(y)
        if len(self.classes_) != 2:
            raise ValueError(f"binary labels required, got classes {self.classes_}")
        return self._fit(X, (y == self.classes_[1]).astype(np.float64))

    def decision_function(self, X):
        return self._decision(X)

    def predict_proba(self, X):
        z = self._decision(X)
        pos = 1.0 / (1.0 + np.exp(-z))
        return np.stack([1.0 - pos, pos], axis=1)

    def predict(self, X):
        return self.classes_[(self._decision(X) > 0).astype(int)]


__all__ = ["GeneralizedReadout", "MPNNRegressor", "MPNNClassifier", "Family", "build_batch"]
