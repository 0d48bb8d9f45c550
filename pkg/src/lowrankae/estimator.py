"""Scikit-learn style front end.

``LowRankAutoencoder`` wraps parameter initialization, the training
loop, and the inference-time collapse of the bottleneck matrix behind
the familiar fit/transform API, so the model drops into sklearn
pipelines and hyperparameter searches. Rows of X are flattened images
scaled to [-1, 1]; ``transform`` maps them to latent codes and
``inverse_transform`` decodes latent rows back to images.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import network
from .optim import TrainConfig, train
from .validation import check_image_matrix, check_latent_matrix

__all__ = ["LowRankAutoencoder", "load_estimator"]


class LowRankAutoencoder(TransformerMixin, BaseEstimator):
    """Deterministic autoencoder whose bottleneck matrix carries a nuclear-norm penalty.

    Parameters
    ----------
    latent_dim : width of the latent code (and of the square bottleneck matrix).
    penalty : weight of the nuclear-norm term; 0 trains a plain autoencoder.
    encoder_widths : hidden widths of the encoder; the decoder mirrors them.
    epochs, batch_size, learning_rate, seed : training-loop knobs.
    deterministic : feed the full dataset every step instead of shuffled
        minibatches (one step per epoch), the regime the step-size
        analysis in the test suite covers.
    bias_correction : switch the optimizer to the bias-corrected variant.
    """

    def __init__(
        self,
        latent_dim: int = 32,
        penalty: float = 1e-3,
        encoder_widths: tuple[int, ...] = (256, 64),
        epochs: int = 10,
        batch_size: int = 32,
        learning_rate: float = 1e-3,
        seed: int = 0,
        deterministic: bool = False,
        bias_correction: bool = False,
    ):
        self.latent_dim = latent_dim
        self.penalty = penalty
        self.encoder_widths = encoder_widths
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.seed = seed
        self.deterministic = deterministic
        self.bias_correction = bias_correction

    def fit(self, X, y=None) -> "LowRankAutoencoder":
        X = check_image_matrix(X)
        config = network.ModelConfig(
            input_dim=X.shape[1],
            latent_dim=self.latent_dim,
            encoder_widths=tuple(self.encoder_widths),
            penalty=self.penalty,
            seed=self.seed,
        )
        self.params_ = network.init_params(config)
        self.metrics_ = train(
            self.params_,
            X,
            TrainConfig(
                epochs=self.epochs,
                batch_size=self.batch_size,
                alpha=self.learning_rate,
                penalty=self.penalty,
                seed=self.seed,
                deterministic=self.deterministic,
                bias_correction=self.bias_correction,
            ),
        )
        self.encoder_ = network.collapse(self.params_)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X) -> np.ndarray:
        self._check_fitted()
        return self.encoder_(check_image_matrix(X))

    def inverse_transform(self, Z) -> np.ndarray:
        self._check_fitted()
        return network.decode(self.params_, check_latent_matrix(Z, self.latent_dim))

    def reconstruct(self, X) -> np.ndarray:
        return self.inverse_transform(self.transform(X))

    def reconstruction_error(self, X) -> float:
        """Mean per-sample squared reconstruction error."""
        X = check_image_matrix(X)
        diff = self.reconstruct(X) - X
        return float((diff * diff).sum() / X.shape[0])

    def save_checkpoint(self, path) -> None:
        self._check_fitted()
        network.save_checkpoint(path, self.params_)

    def _check_fitted(self) -> None:
        if not hasattr(self, "params_"):
            raise RuntimeError("LowRankAutoencoder is not fitted yet")


def load_estimator(path) -> LowRankAutoencoder:
    """Rebuild a fitted estimator from a checkpoint (training knobs keep defaults)."""
    params = network.load_checkpoint(path)
    est = LowRankAutoencoder(
        latent_dim=params.config.latent_dim,
        penalty=params.config.penalty,
        encoder_widths=params.config.encoder_widths,
        seed=params.config.seed,
    )
    est.params_ = params
    est.encoder_ = network.collapse(params)
    est.n_features_in_ = params.config.input_dim
    est.metrics_ = []
    return est
