"""Latent density models, sampling, interpolation, and a proxy Frechet metric.

Two samplers are provided for a trained model's latent space: a single
multivariate Gaussian and a full-covariance Gaussian mixture fitted by
EM inside the numerically live latent subspace. Generated batches are
scored with the Frechet distance between Gaussians fitted to PCA-feature
embeddings; that proxy preserves orderings between models but its
absolute values are NOT comparable to published scores computed with a
pretrained feature network, so reports must label it "proxy".
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from . import linalg
from .errors import NumericalError

__all__ = [
    "LatentGaussian",
    "LatentMixture",
    "PcaBasis",
    "fit_pca_basis",
    "frechet_distance",
    "interpolate",
    "proxy_fid",
    "write_pgm_grid",
]

#: Ridge added to fitted covariances, as a fraction of their mean eigenvalue.
RIDGE_SCALE = 1e-6


def _ridged(cov: np.ndarray, ridge_scale: float) -> tuple[np.ndarray, float]:
    ridge = ridge_scale * float(np.trace(cov)) / max(cov.shape[0], 1)
    if ridge <= 0.0:
        ridge = ridge_scale
    return cov + ridge * np.eye(cov.shape[0]), ridge


class LatentGaussian(BaseEstimator):
    """Single multivariate Gaussian fitted to latent rows."""

    def __init__(self, ridge_scale: float = RIDGE_SCALE):
        self.ridge_scale = ridge_scale

    def fit(self, z: np.ndarray, y=None) -> "LatentGaussian":
        z = np.asarray(z, dtype=np.float64)
        if z.ndim != 2 or z.shape[0] < 2:
            raise ValueError("LatentGaussian.fit needs at least 2 latent rows")
        self.mean_ = z.mean(axis=0)
        self.cov_ = linalg.covariance(z)
        ridged, self.ridge_ = _ridged(self.cov_, self.ridge_scale)
        self.chol_ = linalg.cholesky(ridged)
        return self

    def sample(self, count: int, seed: int = 0) -> np.ndarray:
        if count < 1:
            raise ValueError("count must be >= 1")
        rng = np.random.default_rng(seed)
        u = rng.standard_normal((count, self.mean_.shape[0]))
        return self.mean_ + u @ self.chol_.T


class LatentMixture(BaseEstimator):
    """Full-covariance Gaussian mixture fitted by EM in the live latent subspace.

    Latents are first projected onto the top-r directions of their
    covariance (r = numerical rank, but at least ``n_components``):
    full-covariance EM directly in a mostly-dead latent space would be
    singular, and the discarded directions are numerically zero anyway.
    """

    def __init__(
        self,
        n_components: int = 4,
        seed: int = 0,
        max_iter: int = 200,
        tol: float = 1e-6,
        ridge_scale: float = RIDGE_SCALE,
        rank_tau: float = 1e-3,
    ):
        self.n_components = n_components
        self.seed = seed
        self.max_iter = max_iter
        self.tol = tol
        self.ridge_scale = ridge_scale
        self.rank_tau = rank_tau

    # -- fitting ---------------------------------------------------------

    def fit(self, z: np.ndarray, y=None) -> "LatentMixture":
        z = np.asarray(z, dtype=np.float64)
        k = self.n_components
        if z.ndim != 2 or z.shape[0] < 10 * k:
            raise ValueError(f"LatentMixture.fit needs at least {10 * k} latent rows")
        rng = np.random.default_rng(self.seed)

        self.center_ = z.mean(axis=0)
        cov = linalg.covariance(z)
        eig = linalg.sym_eig(cov)
        values = np.maximum(eig.eigenvalues, 0.0)
        top = values[0] if values[0] > 0 else 1.0
        rank = int(np.sum(values / top > self.rank_tau))
        r = min(max(rank, k), z.shape[1])
        self.projection_ = eig.eigenvectors[:, :r]
        proj = (z - self.center_) @ self.projection_

        weights, means, covs, history = self._em(proj, rng)
        self.weights_ = weights
        self.means_ = means
        self.covs_ = covs
        self.log_likelihoods_ = history
        self.chols_ = [linalg.cholesky(c) for c in covs]
        return self

    def _em(self, y: np.ndarray, rng: np.random.Generator):
        n, r = y.shape
        k = self.n_components
        global_cov, ridge = _ridged(linalg.covariance(y), self.ridge_scale)
        self.ridge_ = ridge
        means = y[_kmeanspp_indices(y, k, rng)].copy()
        covs = [global_cov.copy() for _ in range(k)]
        weights = np.full(k, 1.0 / k)

        history: list[float] = []
        reinits = 0
        previous = -np.inf
        for _ in range(self.max_iter):
            log_resp = np.empty((n, k))
            for c in range(k):
                log_resp[:, c] = np.log(weights[c]) + _gaussian_logpdf(y, means[c], covs[c])
            row_max = log_resp.max(axis=1, keepdims=True)
            log_norm = row_max[:, 0] + np.log(np.exp(log_resp - row_max).sum(axis=1))
            ll = float(log_norm.sum())
            history.append(ll)
            resp = np.exp(log_resp - log_norm[:, None])

            mass = resp.sum(axis=0)
            dead = np.flatnonzero(mass < 1e-8)
            if dead.size:
                if reinits >= 3:
                    raise NumericalError(
                        f"degenerate mixture fit: component(s) {dead.tolist()} kept dying"
                    )
                reinits += 1
                worst = int(np.argmin(log_norm))
                for c in dead:
                    means[c] = y[worst]
                    covs[c] = global_cov.copy()
                    weights[c] = 1.0 / n
                weights /= weights.sum()
                # Reinitialization starts a fresh ascent; the recorded
                # sequence covers only the final run.
                history.clear()
                previous = -np.inf
                continue

            weights = mass / n
            for c in range(k):
                means[c] = (resp[:, c] @ y) / mass[c]
                diff = y - means[c]
                cov = (diff * resp[:, c : c + 1]).T @ diff / mass[c]
                covs[c] = (cov + cov.T) / 2.0 + self.ridge_ * np.eye(r)
            if ll - previous < self.tol and np.isfinite(previous):
                break
            previous = ll
        return weights, means, covs, history

    def predict_proba(self, z: np.ndarray) -> np.ndarray:
        """Component responsibilities for latent rows (each row sums to 1)."""
        y = (np.asarray(z, dtype=np.float64) - self.center_) @ self.projection_
        log_resp = np.empty((y.shape[0], self.n_components))
        for c in range(self.n_components):
            log_resp[:, c] = np.log(self.weights_[c]) + _gaussian_logpdf(
                y, self.means_[c], self.covs_[c]
            )
        row_max = log_resp.max(axis=1, keepdims=True)
        log_norm = row_max[:, 0] + np.log(np.exp(log_resp - row_max).sum(axis=1))
        return np.exp(log_resp - log_norm[:, None])

    # -- sampling --------------------------------------------------------

    def sample(self, count: int, seed: int = 0) -> np.ndarray:
        if count < 1:
            raise ValueError("count must be >= 1")
        rng = np.random.default_rng(seed)
        components = rng.choice(self.n_components, size=count, p=self.weights_)
        r = self.means_.shape[1]
        draws = np.empty((count, r))
        for c in range(self.n_components):
            rows = np.flatnonzero(components == c)
            if rows.size == 0:
                continue
            u = rng.standard_normal((rows.size, r))
            draws[rows] = self.means_[c] + u @ self.chols_[c].T
        return self.center_ + draws @ self.projection_.T


def _kmeanspp_indices(y: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Spread-out seeding: squared-distance-weighted center choices."""
    n = y.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = ((y - y[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            chosen.append(int(rng.integers(n)))
            continue
        nxt = int(rng.choice(n, p=d2 / total))
        chosen.append(nxt)
        d2 = np.minimum(d2, ((y - y[nxt]) ** 2).sum(axis=1))
    return np.asarray(chosen)


def _gaussian_logpdf(y: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    r = mean.shape[0]
    chol = linalg.cholesky(cov)
    diff = y - mean
    # Solve L w = diff^T by forward substitution, column-block at a time.
    w = _forward_substitution(chol, diff.T)
    maha = (w * w).sum(axis=0)
    log_det = 2.0 * np.log(np.diag(chol)).sum()
    return -0.5 * (maha + log_det + r * np.log(2.0 * np.pi))


def _forward_substitution(lower: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    n = lower.shape[0]
    out = np.empty_like(rhs, dtype=np.float64)
    for i in range(n):
        out[i] = (rhs[i] - lower[i, :i] @ out[:i]) / lower[i, i]
    return out


def interpolate(encode, decode, x1: np.ndarray, x2: np.ndarray, steps: int) -> np.ndarray:
    """Decode the straight latent line between two inputs.

    Frames 0 and steps-1 are exactly decode(z1) and decode(z2); the
    midpoint latent is exactly (z1 + z2) / 2.
    """
    if steps < 2:
        raise ValueError("steps must be >= 2")
    pair = np.vstack([np.asarray(x1, dtype=np.float64), np.asarray(x2, dtype=np.float64)])
    z = np.asarray(encode(pair))
    t = np.linspace(0.0, 1.0, steps)[:, None]
    path = (1.0 - t) * z[0] + t * z[1]
    return np.asarray(decode(path))


def _psd_sqrt(cov: np.ndarray) -> np.ndarray:
    eig = linalg.sym_eig(cov)
    roots = np.sqrt(np.maximum(eig.eigenvalues, 0.0))
    return (eig.eigenvectors * roots) @ eig.eigenvectors.T


def frechet_distance(
    mu1: np.ndarray, cov1: np.ndarray, mu2: np.ndarray, cov2: np.ndarray
) -> float:
    """Frechet distance between two Gaussians.

    ||mu1 - mu2||^2 + tr(cov1 + cov2 - 2 (cov1^(1/2) cov2 cov1^(1/2))^(1/2)),
    with matrix square roots taken through the symmetric eigensolver and
    eigenvalues clamped at zero.
    """
    mu1 = np.asarray(mu1, dtype=np.float64)
    mu2 = np.asarray(mu2, dtype=np.float64)
    cov1 = np.asarray(cov1, dtype=np.float64)
    cov2 = np.asarray(cov2, dtype=np.float64)
    root1 = _psd_sqrt(cov1)
    inner = root1 @ cov2 @ root1
    cross = _psd_sqrt((inner + inner.T) / 2.0)
    value = float(
        ((mu1 - mu2) ** 2).sum()
        + np.trace(cov1)
        + np.trace(cov2)
        - 2.0 * np.trace(cross)
    )
    return max(value, 0.0)


@dataclass(frozen=True)
class PcaBasis:
    """Mean and top principal directions of a reference image set."""

    mean: np.ndarray
    basis: np.ndarray  # (d, feature_dim), orthonormal columns

    def embed(self, images: np.ndarray) -> np.ndarray:
        return (np.asarray(images, dtype=np.float64) - self.mean) @ self.basis


def fit_pca_basis(
    images: np.ndarray, feature_dim: int = 64, iterations: int = 100, seed: int = 0
) -> PcaBasis:
    """Top principal directions via seeded subspace iteration.

    The image dimension is too large for the dense Jacobi eigensolver,
    so the dominant subspace is found by orthogonal iteration on the
    covariance, finished with a small Rayleigh-Ritz rotation.
    """
    images = np.asarray(images, dtype=np.float64)
    n, d = images.shape
    if feature_dim < 1 or feature_dim > d:
        raise ValueError(f"feature_dim must be in 1..{d}")
    if n < feature_dim + 2:
        raise ValueError(f"need at least feature_dim+2={feature_dim + 2} images, got {n}")
    mean = images.mean(axis=0)
    centered = images - mean
    cov = (centered.T @ centered) / n
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((d, feature_dim)))
    for _ in range(iterations):
        q, _ = np.linalg.qr(cov @ q)
    small = q.T @ cov @ q
    rot = linalg.sym_eig((small + small.T) / 2.0)
    return PcaBasis(mean=mean, basis=q @ rot.eigenvectors)


def proxy_fid(
    real_images: np.ndarray,
    generated_images: np.ndarray,
    feature_dim: int = 64,
    basis: PcaBasis | None = None,
    seed: int = 0,
) -> float:
    """Frechet distance between Gaussians of PCA-feature embeddings.

    The basis is fitted on the real set only (or passed in, so sweeps
    can reuse one basis across models).
    """
    real_images = np.asarray(real_images, dtype=np.float64)
    if basis is None:
        basis = fit_pca_basis(real_images, feature_dim=feature_dim, seed=seed)
    real = basis.embed(real_images)
    fake = basis.embed(generated_images)
    return frechet_distance(
        real.mean(axis=0),
        linalg.covariance(real),
        fake.mean(axis=0),
        linalg.covariance(fake),
    )


def write_pgm_grid(path, images: np.ndarray, height: int, width: int, grid_cols: int = 8) -> None:
    """Write images as one 8-bit binary PGM grid, row-major, [-1,1] -> [0,255]."""
    images = np.asarray(images, dtype=np.float64)
    count = images.shape[0]
    rows = (count + grid_cols - 1) // grid_cols
    canvas = np.zeros((rows * height, grid_cols * width), dtype=np.uint8)
    levels = np.rint((np.clip(images, -1.0, 1.0) + 1.0) * 127.5).astype(np.uint8)
    for i in range(count):
        r, c = divmod(i, grid_cols)
        canvas[r * height : (r + 1) * height, c * width : (c + 1) * width] = levels[
            i
        ].reshape(height, width)
    header = f"P5\n{canvas.shape[1]} {canvas.shape[0]}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(canvas.tobytes())
