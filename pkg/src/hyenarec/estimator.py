"""scikit-learn style wrapper around model construction, training and ranking."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .data import SequenceDataset, pad_histories
from .evaluation import rank_targets, recall_at_k
from .model import HyenaConfig, HyenaRecModel
from .train import TrainConfig, Trainer
from .validation import check_k, check_sequences, check_targets


class HyenaRecommender(BaseEstimator):
    """Next-item recommender over integer item ids.

    ``fit`` takes full user sequences; the last item of each becomes its
    test target and the one before it the validation target, as in
    :class:`SequenceDataset`. ``predict`` returns the top ``k`` item ids that
    follow each given history.
    """

    def __init__(self, num_items=None, d_model=64, max_len=200, num_layers=2, order=2,
                 basis_size=64, basis="legendre", dropout=0.2, glu=True, pk=True, mixer="hyena",
                 lr=1e-3, weight_decay=1e-4, batch_size=128, max_steps=1000, eval_interval=500,
                 patience=10, monitor="recall@10", mask_seen=True, seed=0):
        self.num_items = num_items
        self.d_model = d_model
        self.max_len = max_len
        self.num_layers = num_layers
        self.order = order
        self.basis_size = basis_size
        self.basis = basis
        self.dropout = dropout
        self.glu = glu
        self.pk = pk
        self.mixer = mixer
        self.lr = lr
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.max_steps = max_steps
        self.eval_interval = eval_interval
        self.patience = patience
        self.monitor = monitor
        self.mask_seen = mask_seen
        self.seed = seed

    def _model_config(self, num_items: int) -> HyenaConfig:
        return HyenaConfig(num_items=num_items, d_model=self.d_model, max_len=self.max_len,
                           num_layers=self.num_layers, order=self.order, basis_size=self.basis_size,
                           basis=self.basis, dropout=self.dropout, glu=self.glu, pk=self.pk, mixer=self.mixer)

    def fit(self, X, y=None):
        seqs = check_sequences(X, self.num_items, min_length=2)
        n_items = self.num_items or int(max(s.max() for s in seqs)) + 1
        ds = SequenceDataset([str(u) for u in range(len(seqs))], [str(i) for i in range(n_items)], seqs, "fit")
        tc = TrainConfig(lr=self.lr, weight_decay=self.weight_decay, batch_size=self.batch_size,
                         max_steps=self.max_steps, eval_interval=self.eval_interval, patience=self.patience,
                         monitor=self.monitor, mask_seen=self.mask_seen, seed=self.seed)
        trainer = Trainer(HyenaRecModel(self._model_config(n_items), seed=self.seed), ds, tc)
        state = trainer.fit()
        self.model_ = trainer.model
        self.n_items_ = n_items
        self.history_ = state.history
        self.n_steps_ = state.step
        return self

    def _batch(self, X):
        seqs = check_sequences(X, self.n_items_)
        items, mask = pad_histories(seqs, self.max_len, self.n_items_)
        return seqs, items, mask

    def decision_function(self, X) -> np.ndarray:
        """Scores [n, num_items] for the item after each history."""
        check_is_fitted(self, "model_")
        _, items, mask = self._batch(X)
        batch = type("Batch", (), {"items": items, "mask": mask})()
        return self.model_.score(batch)

    def predict(self, X, k: int = 10) -> np.ndarray:
        check_is_fitted(self, "model_")
        k = check_k(k, self.n_items_)
        z = self.decision_function(X)
        # stable sort on negated scores: ties go to the lower item id
        return np.argsort(-z, axis=1, kind="stable")[:, :k]

    def score(self, X, y, k: int = 10) -> float:
        """Mean Recall@k of next items ``y`` given histories ``X`` over the full catalog."""
        check_is_fitted(self, "model_")
        z = self.decision_function(X)
        y = check_targets(y, z.shape[0], self.n_items_)
        return float(recall_at_k(rank_targets(z, y), k).mean())
