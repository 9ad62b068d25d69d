"""Scikit-learn style front door for the embedding pipeline.

``TemporalViewEmbedder`` follows the fit/transform contract so the trained
embeddings can feed any downstream sklearn pipeline; hyperparameters are
stored verbatim for ``get_params``/``clone`` compatibility.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator

from .objectives import InteractionSplit
from .training import EmbeddingModel, Hyperparams, compute_embeddings, train
from .validation import check_labels, check_views


# TransformerMixin is deliberately not mixed in: its set_output wrapper makes
# X a required transform argument, while this transform returns embeddings
# computed at fit time.
class TemporalViewEmbedder(BaseEstimator):
    """Learns per-node embeddings from meta-path proximity time series.

    Parameters mirror the training hyperparameters. ``fit`` accepts a list
    of ViewSeries as X and, optionally, classification labels (array or
    ClassificationLabels) or an InteractionSplit as y.
    """

    def __init__(
        self,
        dim: int = 128,
        cell: str = "gru",
        fusion: str = "attention",
        alpha: float = 10.0,
        beta: float = 1.0,
        learning_rate: float = 0.005,
        batch_size: int = 500,
        epochs: int = 50,
        window: Optional[int] = None,
        neg_per_pos_train: int = 4,
        neg_per_pos_eval: int = 99,
        seed: int = 0,
    ):
        self.dim = dim
        self.cell = cell
        self.fusion = fusion
        self.alpha = alpha
        self.beta = beta
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.window = window
        self.neg_per_pos_train = neg_per_pos_train
        self.neg_per_pos_eval = neg_per_pos_eval
        self.seed = seed

    def _hyper(self) -> Hyperparams:
        return Hyperparams(
            dim=self.dim,
            window=self.window,
            alpha=self.alpha,
            beta=self.beta,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            epochs=self.epochs,
            neg_per_pos_train=self.neg_per_pos_train,
            neg_per_pos_eval=self.neg_per_pos_eval,
            seed=self.seed,
            cell=self.cell,
            fusion=self.fusion,
        )

    def fit(self, X, y=None):
        views = check_views(X)
        task_data = check_labels(y, views)
        hyper = self._hyper()
        rng = np.random.default_rng(self.seed)
        n_classes = task_data.n_classes if hasattr(task_data, "n_classes") else None
        model = EmbeddingModel(views, hyper, rng, n_classes=n_classes)
        result = train(model, views, task_data, hyper, rng)

        self.model_: EmbeddingModel = model
        self.views_ = [
            v if hyper.window is None else v.truncate_to_last(hyper.window) for v in views
        ]
        self.loss_trace_ = result.trace
        self.best_epoch_ = result.best_epoch
        self.anchor_types_ = list(model.anchor_types)
        self.embeddings_: dict[str, np.ndarray] = {}
        self.attention_weights_: dict[str, Optional[np.ndarray]] = {}
        for anchor in self.anchor_types_:
            emb, att = compute_embeddings(model, self.views_, anchor)
            self.embeddings_[anchor] = emb
            self.attention_weights_[anchor] = att
        if isinstance(task_data, InteractionSplit):
            self.eval_negatives_ = result.eval_negatives
        return self

    def transform(self, X=None, anchor: Optional[str] = None) -> np.ndarray:
        """Embeddings learned during fit; X is accepted for pipeline compatibility."""
        if not hasattr(self, "embeddings_"):
            raise RuntimeError("estimator is not fitted")
        if anchor is None:
            if len(self.anchor_types_) != 1:
                raise ValueError(
                    f"multiple anchor types {self.anchor_types_}; pass anchor="
                )
            anchor = self.anchor_types_[0]
        return self.embeddings_[anchor]

    def fit_transform(self, X, y=None, **fit_params) -> np.ndarray:
        return self.fit(X, y).transform()
