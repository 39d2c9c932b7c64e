"""scikit-learn style surface so the engine composes with the wider
ecosystem: smoothing operators as transformers, the full train/predict
pipeline as an estimator.

The estimator's X is a DynamicGraph (snapshot sequence), not a feature
matrix; y is unused because link-prediction labels are sampled from the
graph itself.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .dist import train_distributed
from .dtdg import DynamicGraph, apply_edge_life, build_m_matrix, m_transform_graph
from .errors import InputError
from .models import ModelConfig, link_pred_forward, model_forward
from .training import prepare_training_data, sample_link_prediction_sets

__all__ = [
    "check_dynamic_graph",
    "EdgeLifeSmoother",
    "MProductSmoother",
    "DynamicLinkPredictor",
]


def check_dynamic_graph(X) -> DynamicGraph:
    """Validation helper: the estimator API accepts only DynamicGraph inputs."""
    if not isinstance(X, DynamicGraph):
        raise InputError(f"expected a DynamicGraph, got {type(X).__name__}")
    return X


class EdgeLifeSmoother(BaseEstimator, TransformerMixin):
    """Stateless transformer carrying each edge into the next life-1 snapshots."""

    def __init__(self, life=2):
        self.life = life

    def fit(self, X, y=None):
        check_dynamic_graph(X)
        return self

    def transform(self, X):
        return apply_edge_life(check_dynamic_graph(X), self.life)


class MProductSmoother(BaseEstimator, TransformerMixin):
    """Stateless transformer applying the windowed temporal average to the
    adjacency tensor."""

    def __init__(self, window=2):
        self.window = window

    def fit(self, X, y=None):
        check_dynamic_graph(X)
        return self

    def transform(self, X):
        g = check_dynamic_graph(X)
        return m_transform_graph(g, build_m_matrix(g.num_timesteps, self.window))


class DynamicLinkPredictor(BaseEstimator):
    """Link-prediction estimator over a snapshot sequence.

    fit(X) samples train/test pairs from the graph, runs the (optionally
    distributed, checkpointed) training loop and keeps the final
    parameters; predict(pairs) classifies vertex pairs against the last
    embedding frame.  Ledgers and the loss trace are exposed as fitted
    attributes.
    """

    def __init__(self, architecture="tm-gcn", epochs=10, lr=0.01, theta=0.1,
                 window=2, edge_life=2, layers=2, hidden_features=6,
                 embed_features=6, workers=1, blocks=1,
                 scheduler="round-robin", seed=0):
        self.architecture = architecture
        self.epochs = epochs
        self.lr = lr
        self.theta = theta
        self.window = window
        self.edge_life = edge_life
        self.layers = layers
        self.hidden_features = hidden_features
        self.embed_features = embed_features
        self.workers = workers
        self.blocks = blocks
        self.scheduler = scheduler
        self.seed = seed

    def _config(self) -> ModelConfig:
        return ModelConfig(
            architecture=self.architecture,
            in_features=2,
            hidden_features=self.hidden_features,
            embed_features=self.embed_features,
            layers=self.layers,
            window=self.window,
            edge_life=self.edge_life,
        )

    def fit(self, X, y=None):
        graph = check_dynamic_graph(X)
        if graph.num_timesteps < 2:
            raise InputError("need at least two snapshots (final one is held out)")
        cfg = self._config()
        train_labels, test_labels = sample_link_prediction_sets(
            graph, self.theta, self.seed + 1000003
        )
        data = prepare_training_data(cfg, graph)
        trace, params, comm, transfer, act = train_distributed(
            cfg, data, train_labels, test_labels,
            epochs=self.epochs, seed=self.seed,
            workers=self.workers, nblk=self.blocks,
            scheduler=self.scheduler, lr=self.lr,
        )
        self.config_ = cfg
        self.params_ = params
        self.loss_trace_ = [r["loss"] for r in trace]
        self.test_accuracy_ = trace[-1]["test_accuracy"] if trace else None
        self.comm_ledger_ = comm
        self.transfer_ledger_ = transfer
        embeddings = model_forward(cfg, data.laps, data.feats, params)
        self.embeddings_ = embeddings.frames
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("call fit before predict")

    def decision_frame(self, at=-1) -> np.ndarray:
        self._check_fitted()
        return self.embeddings_[at]

    def predict_proba(self, pairs, at=-1) -> np.ndarray:
        self._check_fitted()
        z = self.embeddings_[at]
        logits = link_pred_forward(z, np.asarray(pairs, dtype=np.int64),
                                   self.params_["head.w"], self.params_["head.b"])
        shifted = logits - logits.max(axis=1, keepdims=True)
        expd = np.exp(shifted)
        return expd / expd.sum(axis=1, keepdims=True)

    def predict(self, pairs, at=-1) -> np.ndarray:
        return self.predict_proba(pairs, at=at).argmax(axis=1)

    def score(self, pairs, labels, at=-1) -> float:
        preds = self.predict(pairs, at=at)
        labels = np.asarray(labels, dtype=np.int64)
        return float((preds == labels).mean())
