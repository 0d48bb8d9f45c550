"""The low-rank-bottleneck autoencoder: parameters, forward pass, loss, checkpoints.

A dense encoder maps flattened images in [-1, 1] to a pre-latent vector,
a trainable square matrix ``m`` mixes it into the latent code
(z = m @ encoder(x)), and a mirrored decoder with a Tanh head
reconstructs the input. The training objective is the batch-mean squared
reconstruction error plus ``penalty`` times the nuclear norm of ``m``;
the nuclear-norm term is what pushes the latent space toward low rank.
At inference time ``m`` is folded into the encoder's final dense layer.
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass

import numpy as np

from . import linalg
from .autodiff import Tensor, add, matmul, mse, relu, row_blocked_matmul, scale, tanh, transpose
from .errors import ShapeError

__all__ = [
    "AutoencoderParams",
    "CollapsedEncoder",
    "LossInfo",
    "ModelConfig",
    "batch_loss_value",
    "collapse",
    "compute_loss_and_grads",
    "decode",
    "forward",
    "init_params",
    "load_checkpoint",
    "save_checkpoint",
]

CHECKPOINT_FORMAT = "lowrankae-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    latent_dim: int
    encoder_widths: tuple[int, ...] = (256, 64)
    penalty: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.input_dim <= 0 or self.latent_dim <= 0:
            raise ValueError("input_dim and latent_dim must be positive")
        if any(w <= 0 for w in self.encoder_widths):
            raise ValueError("encoder widths must be positive")
        if self.penalty < 0:
            raise ValueError("penalty must be non-negative")
        object.__setattr__(self, "encoder_widths", tuple(self.encoder_widths))

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "latent_dim": self.latent_dim,
            "encoder_widths": list(self.encoder_widths),
            "penalty": self.penalty,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(
            input_dim=int(d["input_dim"]),
            latent_dim=int(d["latent_dim"]),
            encoder_widths=tuple(int(w) for w in d["encoder_widths"]),
            penalty=float(d["penalty"]),
            seed=int(d["seed"]),
        )


@dataclass
class AutoencoderParams:
    """Trainable buffers: encoder layers, the bottleneck matrix, decoder layers."""

    config: ModelConfig
    encoder: list[tuple[Tensor, Tensor]]
    m: Tensor
    decoder: list[tuple[Tensor, Tensor]]

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        named: list[tuple[str, Tensor]] = []
        for i, (w, b) in enumerate(self.encoder):
            named.append((f"encoder.{i}.weight", w))
            named.append((f"encoder.{i}.bias", b))
        named.append(("m", self.m))
        for i, (w, b) in enumerate(self.decoder):
            named.append((f"decoder.{i}.weight", w))
            named.append((f"decoder.{i}.bias", b))
        return named

    def zero_grad(self) -> None:
        for _, p in self.named_parameters():
            p.zero_grad()

    def clone(self) -> "AutoencoderParams":
        return AutoencoderParams(
            config=self.config,
            encoder=[
                (Tensor(w.data.copy(), True), Tensor(b.data.copy(), True))
                for w, b in self.encoder
            ],
            m=Tensor(self.m.data.copy(), True),
            decoder=[
                (Tensor(w.data.copy(), True), Tensor(b.data.copy(), True))
                for w, b in self.decoder
            ],
        )

    def checksum(self) -> str:
        """SHA-256 over all buffers, for frozen-parameter contracts."""
        h = hashlib.sha256()
        for name, p in self.named_parameters():
            h.update(name.encode())
            h.update(np.ascontiguousarray(p.data).tobytes())
        return h.hexdigest()


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(config: ModelConfig) -> AutoencoderParams:
    """Seeded Glorot-uniform weights, zero biases, identity bottleneck matrix."""
    rng = np.random.default_rng(config.seed)
    enc_dims = [config.input_dim, *config.encoder_widths, config.latent_dim]
    dec_dims = [config.latent_dim, *reversed(config.encoder_widths), config.input_dim]
    encoder = [
        (Tensor(_glorot(rng, fi, fo), True), Tensor(np.zeros(fo), True))
        for fi, fo in zip(enc_dims[:-1], enc_dims[1:])
    ]
    m = Tensor(np.eye(config.latent_dim), True)
    decoder = [
        (Tensor(_glorot(rng, fi, fo), True), Tensor(np.zeros(fo), True))
        for fi, fo in zip(dec_dims[:-1], dec_dims[1:])
    ]
    return AutoencoderParams(config=config, encoder=encoder, m=m, decoder=decoder)


def forward(params: AutoencoderParams, x) -> tuple[Tensor, Tensor, Tensor]:
    """Run a batch through the network.

    Returns (z_pre, z, x_hat): the encoder output, the latent code after
    the bottleneck matrix, and the Tanh reconstruction.
    """
    h = x if isinstance(x, Tensor) else Tensor(x)
    if h.data.ndim != 2 or h.data.shape[1] != params.config.input_dim:
        raise ShapeError(
            f"forward: expected batch of shape (n, {params.config.input_dim}), "
            f"got {h.data.shape}"
        )
    last = len(params.encoder) - 1
    for i, (w, b) in enumerate(params.encoder):
        h = add(matmul(h, w), b)
        if i < last:
            h = relu(h)
    z_pre = h
    z = matmul(z_pre, transpose(params.m))
    h = z
    last = len(params.decoder) - 1
    for i, (w, b) in enumerate(params.decoder):
        h = add(matmul(h, w), b)
        h = relu(h) if i < last else tanh(h)
    return z_pre, z, h


@dataclass(frozen=True)
class CollapsedEncoder:
    """Inference-time encoder with the bottleneck matrix folded into its last layer."""

    layers: tuple[tuple[np.ndarray, np.ndarray], ...]
    latent_dim: int

    def __call__(self, x: np.ndarray) -> np.ndarray:
        h = np.asarray(x, dtype=np.float64)
        squeeze = h.ndim == 1
        if squeeze:
            h = h[None, :]
        last = len(self.layers) - 1
        for i, (w, b) in enumerate(self.layers):
            h = row_blocked_matmul(h, w) + b
            if i < last:
                h = np.maximum(h, 0.0)
        return h[0] if squeeze else h


def collapse(params: AutoencoderParams) -> CollapsedEncoder:
    """Fold ``m`` into the final encoder layer: weight -> weight @ m.T, bias -> bias @ m.T."""
    layers = [(w.data.copy(), b.data.copy()) for w, b in params.encoder]
    w_last, b_last = layers[-1]
    mt = params.m.data.T
    layers[-1] = (w_last @ mt, b_last @ mt)
    return CollapsedEncoder(layers=tuple(layers), latent_dim=params.config.latent_dim)


def decode(params: AutoencoderParams, z: np.ndarray) -> np.ndarray:
    """Map latent rows back to image rows."""
    h = np.asarray(z, dtype=np.float64)
    squeeze = h.ndim == 1
    if squeeze:
        h = h[None, :]
    last = len(params.decoder) - 1
    for i, (w, b) in enumerate(params.decoder):
        h = row_blocked_matmul(h, w.data) + b.data
        h = np.maximum(h, 0.0) if i < last else np.tanh(h)
    return h[0] if squeeze else h


@dataclass(frozen=True)
class LossInfo:
    loss: float
    recon: float
    penalty: float
    grad_norm: float
    nuclear_norm_m: float


def batch_loss_value(params: AutoencoderParams, batch: np.ndarray, penalty: float) -> float:
    """Objective value only (batch-mean reconstruction + penalty); no gradients."""
    batch = np.asarray(batch, dtype=np.float64)
    x = Tensor(batch)
    _, _, x_hat = forward(params, x)
    recon = float(np.sum((x_hat.data - batch) ** 2)) / batch.shape[0]
    pen = penalty * linalg.nuclear_norm(params.m.data) if penalty != 0 else 0.0
    return recon + pen


def compute_loss_and_grads(
    params: AutoencoderParams,
    batch: np.ndarray,
    penalty: float,
    svd_state: dict | None = None,
) -> LossInfo:
    """One forward/backward pass of the penalized objective.

    Gradients are left on the parameter tensors: the reconstruction part
    comes from reverse-mode autodiff, the penalty part is the analytic
    nuclear-norm subgradient added onto ``m``. ``svd_state`` (a dict)
    carries the right singular basis between calls to warm-start the
    Jacobi factorization.
    """
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[0] == 0:
        raise ValueError(f"compute_loss_and_grads: need a non-empty batch, got {batch.shape}")
    params.zero_grad()
    x = Tensor(batch)
    _, _, x_hat = forward(params, x)
    recon = scale(mse(x_hat, x), 1.0 / batch.shape[0])
    recon.backward()

    v0 = svd_state.get("v") if svd_state is not None else None
    svd = linalg.jacobi_svd(params.m.data, v0=v0)
    if svd_state is not None:
        svd_state["v"] = svd.v
    nn_m = float(svd.sigma.sum())
    pen = penalty * nn_m
    if penalty != 0:
        sub = linalg.subgradient_from_svd(svd)
        if params.m.grad is None:
            params.m.grad = np.zeros_like(params.m.data)
        params.m.grad += penalty * sub

    sq = 0.0
    for _, p in params.named_parameters():
        if p.grad is not None:
            sq += float(np.sum(p.grad * p.grad))
    return LossInfo(
        loss=recon.item() + pen,
        recon=recon.item(),
        penalty=pen,
        grad_norm=float(np.sqrt(sq)),
        nuclear_norm_m=nn_m,
    )


def _encode_array(arr: np.ndarray) -> dict:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    return {
        "shape": list(arr.shape),
        "data": base64.b64encode(arr.astype("<f8").tobytes()).decode("ascii"),
    }


def _decode_array(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(d["shape"])


def save_checkpoint(path, params: AutoencoderParams) -> None:
    """Write a versioned JSON checkpoint; float64 buffers round-trip bitwise."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": params.config.to_dict(),
        "params": {name: _encode_array(p.data) for name, p in params.named_parameters()},
    }
    with open(path, "w", encoding="ascii") as fh:
        json.dump(payload, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_checkpoint(path) -> AutoencoderParams:
    with open(path, "r", encoding="ascii") as fh:
        payload = json.load(fh)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {payload.get('version')}")
    config = ModelConfig.from_dict(payload["config"])
    params = init_params(config)
    buffers = payload["params"]
    for name, p in params.named_parameters():
        if name not in buffers:
            raise ValueError(f"{path}: checkpoint missing buffer {name}")
        arr = _decode_array(buffers[name])
        if tuple(arr.shape) != p.data.shape:
            raise ValueError(
                f"{path}: buffer {name} has shape {arr.shape}, expected {p.data.shape}"
            )
        p.data = arr
    return params
