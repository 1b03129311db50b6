"""Estimator facade over the dual encoder, in scikit-learn style.

fit consumes corpus records, transform maps captions to the joint space, and
predict answers option-ranking records. Hyperparameters mirror TrainConfig so
get_params/set_params round-trip cleanly for grid sweeps.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .losses import LossWeights
from .model import encode_images, encode_texts, logic_scores
from .training import PRESETS, TrainConfig, TrainingError, train


class DualEncoder(BaseEstimator, TransformerMixin):
    """Two-tower caption/image encoder trained with the three-part objective."""

    def __init__(self, preset="full", epochs=16, batch_size=64,
                 learning_rate=3e-3, warmup_steps=None, weight_decay=0.2,
                 seed=0, joint_dim=64, text_embed_dim=64, hidden_dim=0,
                 raw_cosine=False, negatives_as_distractors=False,
                 dtype="float64"):
        self.preset = preset
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.warmup_steps = warmup_steps
        self.weight_decay = weight_decay
        self.seed = seed
        self.joint_dim = joint_dim
        self.text_embed_dim = text_embed_dim
        self.hidden_dim = hidden_dim
        self.raw_cosine = raw_cosine
        self.negatives_as_distractors = negatives_as_distractors
        self.dtype = dtype

    def _config(self) -> TrainConfig:
        if self.preset not in PRESETS:
            raise TrainingError(
                f"unknown preset {self.preset!r}; choose from {sorted(PRESETS)}")
        return TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size,
            learning_rate=self.learning_rate, warmup_steps=self.warmup_steps,
            weight_decay=self.weight_decay, seed=self.seed,
            weights=PRESETS[self.preset], raw_cosine=self.raw_cosine,
            negatives_as_distractors=self.negatives_as_distractors,
            joint_dim=self.joint_dim, text_embed_dim=self.text_embed_dim,
            hidden_dim=self.hidden_dim, dtype=self.dtype)

    def fit(self, X, y=None):
        """Train on a list of corpus records; y is ignored."""
        result = train(self._config(), list(X))
        self.result_ = result
        self.params_ = result.params
        self.vocab_ = result.vocab
        self.dims_ = result.dims
        self.log_ = result.log
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("this DualEncoder instance is not fitted yet")

    def transform(self, X):
        """Captions to unit vectors in the joint space, shape (n, joint_dim)."""
        self._check_fitted()
        tokens = [self.vocab_.encode(t) for t in X]
        return encode_texts(self.params_, tokens)

    def transform_images(self, X):
        """Image feature rows to unit vectors in the joint space."""
        self._check_fitted()
        return encode_images(self.params_, np.asarray(X, dtype=np.float64))

    def category_logits(self, texts):
        """Raw 9-way multi-label scores for captions."""
        self._check_fitted()
        return logic_scores(self.params_, self.transform(texts))

    def predict(self, records):
        """Chosen option index per record (0 = stored positive, unshuffled)."""
        self._check_fitted()
        out = []
        for r in records:
            v = self.transform_images(r.features()[None, :])[0]
            t = self.transform(r.options())
            out.append(int(np.argmax(t @ v)))
        return np.array(out, dtype=np.int64)

    def score(self, records, y=None):
        """Seeded-shuffle option-ranking accuracy on records."""
        from .evaluation import mcq_accuracy
        self._check_fitted()
        return mcq_accuracy(self, records, shuffle_seed=0).rate
