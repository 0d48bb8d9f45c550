"""Training loop and the ADAM variant used for the penalized autoencoder.

The optimizer keeps exponential moving averages of gradients and squared
gradients and applies per-coordinate steps

    theta <- theta - alpha * m_t / (sqrt(v_t) + epsilon)

with NO bias correction: the convergence checks shipped in the test
suite are for exactly this recurrence. ``bias_correction=True`` switches
to the common corrected variant for practical runs; every theory check
forces it off.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .errors import TrainingError
from .network import AutoencoderParams, compute_loss_and_grads

__all__ = [
    "Adam",
    "StepMetrics",
    "TrainConfig",
    "convergence_step_size",
    "estimate_gradient_bound",
    "read_metrics_csv",
    "train",
    "write_metrics_csv",
]

METRICS_HEADER = ("step", "loss", "recon", "penalty", "grad_norm", "nuclear_norm_m")


@dataclass
class Adam:
    """First/second-moment optimizer state for a set of named tensors."""

    alpha: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    bias_correction: bool = False
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if self.epsilon <= 0 or self.alpha <= 0:
            raise ValueError("alpha and epsilon must be positive")

    def step(self, named_params: list[tuple[str, Tensor]]) -> None:
        """Apply one update in place; parameters with no grad are skipped."""
        self.t += 1
        for name, p in named_params:
            g = p.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise TrainingError(f"non-finite gradient for parameter {name!r}")
            if name not in self.m:
                self.m[name] = np.zeros_like(p.data)
                self.v[name] = np.zeros_like(p.data)
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            if self.bias_correction:
                m_hat = m / (1.0 - self.beta1**self.t)
                v_hat = v / (1.0 - self.beta2**self.t)
                p.data = p.data - self.alpha * m_hat / (np.sqrt(v_hat) + self.epsilon)
            else:
                p.data = p.data - self.alpha * m / (np.sqrt(v) + self.epsilon)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    alpha: float = 1e-3
    penalty: float = 1e-3
    seed: int = 0
    deterministic: bool = False
    bias_correction: bool = False
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


@dataclass(frozen=True)
class StepMetrics:
    step: int
    loss: float
    recon: float
    penalty: float
    grad_norm: float
    nuclear_norm_m: float


def train(
    params: AutoencoderParams,
    images: np.ndarray,
    config: TrainConfig,
) -> list[StepMetrics]:
    """Run the optimizer over ``images`` and return per-step metrics.

    Stochastic mode reshuffles the dataset every epoch with a generator
    seeded from ``config.seed`` and slices it into ``batch_size`` chunks;
    deterministic mode feeds the full dataset every step (one step per
    configured epoch), the regime the step-size analysis applies to.
    """
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 2 or images.shape[0] == 0:
        raise ValueError("train: need a non-empty (n, d) image matrix")
    rng = np.random.default_rng(config.seed)
    adam = Adam(
        alpha=config.alpha,
        beta1=config.beta1,
        beta2=config.beta2,
        epsilon=config.epsilon,
        bias_correction=config.bias_correction,
    )
    named = params.named_parameters()
    svd_state: dict = {}
    metrics: list[StepMetrics] = []
    step = 0
    for _ in range(config.epochs):
        if config.deterministic:
            batches = [images]
        else:
            perm = rng.permutation(images.shape[0])
            batches = [
                images[perm[start : start + config.batch_size]]
                for start in range(0, images.shape[0], config.batch_size)
            ]
        for batch in batches:
            info = compute_loss_and_grads(params, batch, config.penalty, svd_state)
            if not np.isfinite(info.loss):
                raise TrainingError(f"loss diverged at step {step}: {info.loss}")
            adam.step(named)
            metrics.append(
                StepMetrics(
                    step=step,
                    loss=info.loss,
                    recon=info.recon,
                    penalty=info.penalty,
                    grad_norm=info.grad_norm,
                    nuclear_norm_m=info.nuclear_norm_m,
                )
            )
            step += 1
    return metrics


def write_metrics_csv(path, metrics: list[StepMetrics]) -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_HEADER)
        for row in metrics:
            writer.writerow(
                [row.step]
                + [repr(v) for v in (row.loss, row.recon, row.penalty, row.grad_norm, row.nuclear_norm_m)]
            )


def read_metrics_csv(path) -> list[StepMetrics]:
    with open(path, "r", newline="", encoding="ascii") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != METRICS_HEADER:
            raise ValueError(f"{path}: unexpected metrics header {header}")
        return [
            StepMetrics(int(r[0]), float(r[1]), float(r[2]), float(r[3]), float(r[4]), float(r[5]))
            for r in reader
        ]


def convergence_step_size(
    initial_loss: float,
    lipschitz: float,
    delta: float,
    horizon: int,
) -> float:
    """Prescribed constant step size sqrt(2 * initial_loss / (lipschitz * delta^2 * horizon)).

    The unknown optimum loss is lower-bounded by 0 (valid for any sum of
    a squared norm and a nuclear norm), which can only loosen the step.
    ``delta`` is the gradient-norm bound divided by the optimizer's
    epsilon.
    """
    if initial_loss <= 0 or lipschitz <= 0 or delta <= 0 or horizon <= 0:
        raise ValueError("convergence_step_size: all inputs must be positive")
    return float(np.sqrt(2.0 * initial_loss / (lipschitz * delta * delta * horizon)))


def estimate_gradient_bound(
    params: AutoencoderParams,
    images: np.ndarray,
    penalty: float,
    warmup_steps: int = 20,
    alpha: float = 1e-3,
) -> float:
    """Empirical gradient-norm bound: twice the max norm over a short warmup.

    Runs full-batch steps on a throwaway copy of the parameters so the
    caller's model is untouched.
    """
    probe = params.clone()
    adam = Adam(alpha=alpha)
    named = probe.named_parameters()
    svd_state: dict = {}
    worst = 0.0
    for _ in range(warmup_steps):
        info = compute_loss_and_grads(probe, images, penalty, svd_state)
        worst = max(worst, info.grad_norm)
        adam.step(named)
    return 2.0 * worst
