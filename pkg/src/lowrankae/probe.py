"""Classification probe trained on frozen encoder outputs.

The probe is a one-hidden-layer perceptron over latent codes, trained
with softmax cross-entropy. It never touches the encoder: callers embed
images first and hand the probe plain latent matrices, which makes the
frozen-encoder contract structural rather than a promise.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .autodiff import Tensor, add, cross_entropy, matmul, relu
from .optim import Adam

__all__ = ["EncoderProbe"]


class EncoderProbe(ClassifierMixin, BaseEstimator):
    """One hidden ReLU layer plus a linear head to ``n_classes`` logits."""

    def __init__(
        self,
        hidden_width: int = 64,
        n_classes: int = 10,
        epochs: int = 200,
        batch_size: int = 32,
        learning_rate: float = 1e-3,
        seed: int = 0,
    ):
        self.hidden_width = hidden_width
        self.n_classes = n_classes
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.seed = seed

    def fit(self, z: np.ndarray, y: np.ndarray) -> "EncoderProbe":
        z = np.asarray(z, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if z.ndim != 2 or z.shape[0] != y.shape[0]:
            raise ValueError("fit needs matching latent rows and labels")
        if y.min() < 0 or y.max() >= self.n_classes:
            raise ValueError(f"labels must lie in 0..{self.n_classes - 1}")
        rng = np.random.default_rng(self.seed)
        dims = (z.shape[1], self.hidden_width, self.n_classes)
        self.layers_ = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            self.layers_.append(
                (
                    Tensor(rng.uniform(-limit, limit, size=(fan_in, fan_out)), True),
                    Tensor(np.zeros(fan_out), True),
                )
            )
        named = [
            (f"probe.{i}.{kind}", t)
            for i, pair in enumerate(self.layers_)
            for kind, t in zip(("weight", "bias"), pair)
        ]
        adam = Adam(alpha=self.learning_rate)
        self.history_ = []
        n = z.shape[0]
        for _ in range(self.epochs):
            perm = rng.permutation(n)
            for start in range(0, n, self.batch_size):
                rows = perm[start : start + self.batch_size]
                for _, p in named:
                    p.zero_grad()
                loss = cross_entropy(self._logits_graph(z[rows]), y[rows])
                loss.backward()
                adam.step(named)
            self.history_.append(float(np.mean(self.predict(z) == y)))
        self.classes_ = np.arange(self.n_classes)
        self.n_features_in_ = z.shape[1]
        return self

    def _logits_graph(self, z: np.ndarray) -> Tensor:
        h = Tensor(z)
        (w0, b0), (w1, b1) = self.layers_
        h = relu(add(matmul(h, w0), b0))
        return add(matmul(h, w1), b1)

    def decision_function(self, z: np.ndarray) -> np.ndarray:
        self._check_fitted()
        return self._logits_graph(np.asarray(z, dtype=np.float64)).data

    def predict_proba(self, z: np.ndarray) -> np.ndarray:
        logits = self.decision_function(z)
        shifted = logits - logits.max(axis=1, keepdims=True)
        expd = np.exp(shifted)
        return expd / expd.sum(axis=1, keepdims=True)

    def predict(self, z: np.ndarray) -> np.ndarray:
        # np.argmax breaks ties toward the lowest class index.
        return np.argmax(self.decision_function(z), axis=1)

    def _check_fitted(self) -> None:
        if not hasattr(self, "layers_"):
            raise RuntimeError("EncoderProbe is not fitted yet")
