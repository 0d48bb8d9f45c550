"""Latent-space spectrum, numerical rank, and distance-ratio diagnostics."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import linalg

__all__ = [
    "LatentSpectrum",
    "latent_spectrum",
    "matrix_numerical_rank",
    "minmax_distance_ratio",
    "rank_penalty_bound",
    "write_spectrum_csv",
]

#: Default threshold on max-normalized singular values when counting the
#: "non-zero" part of a spectrum. Chosen so visually flat spectrum tails
#: fall below it; adjustable everywhere it is used.
DEFAULT_TAU = 1e-3


@dataclass(frozen=True)
class LatentSpectrum:
    """Spectrum of the empirical latent covariance with a thresholded rank."""

    singular_values: np.ndarray
    normalized: np.ndarray
    rank: int
    tau: float


def latent_spectrum(encode, images: np.ndarray, tau: float = DEFAULT_TAU) -> LatentSpectrum:
    """Spectrum of the covariance of ``encode(images)`` rows.

    The covariance is symmetric PSD, so its eigenvalues (clamped at 0)
    are its singular values. The rank counts max-normalized values
    above ``tau``.
    """
    latents = np.asarray(encode(np.asarray(images, dtype=np.float64)))
    cov = linalg.covariance(latents)
    values = np.maximum(linalg.sym_eig(cov).eigenvalues, 0.0)
    top = values[0] if values.size else 0.0
    normalized = values / top if top > 0 else np.zeros_like(values)
    rank = int(np.sum(normalized > tau))
    return LatentSpectrum(singular_values=values, normalized=normalized, rank=rank, tau=tau)


def write_spectrum_csv(path, spectrum: LatentSpectrum) -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(("index", "singular_value", "normalized"))
        for i, (value, norm) in enumerate(zip(spectrum.singular_values, spectrum.normalized)):
            writer.writerow((i, repr(float(value)), repr(float(norm))))


def matrix_numerical_rank(m: np.ndarray, rel_tol: float = linalg.RANK_REL_TOL) -> int:
    """Count of singular values above ``rel_tol`` times the largest."""
    sigma = linalg.jacobi_svd(m).sigma
    if sigma.size == 0 or sigma[0] == 0.0:
        return 0
    return int(np.sum(sigma > rel_tol * sigma[0]))


def minmax_distance_ratio(
    encode,
    query: np.ndarray,
    references: np.ndarray,
    matrix_rank: int,
) -> float:
    """(d_max - d_min) / d_min over rank-normalized latent distances.

    Distances are Euclidean distances between the embedded query and
    each embedded reference row, divided by ``matrix_rank`` (the
    numerical rank of the bottleneck matrix). A zero minimum distance
    (duplicate embedding) is rejected.
    """
    references = np.atleast_2d(np.asarray(references, dtype=np.float64))
    if references.shape[0] < 1:
        raise ValueError("need at least one reference sample")
    if matrix_rank < 1:
        raise ValueError(f"matrix_rank must be >= 1, got {matrix_rank}")
    z_query = np.asarray(encode(np.asarray(query, dtype=np.float64)[None, :]))[0]
    z_refs = np.asarray(encode(references))
    dists = np.sqrt(((z_refs - z_query) ** 2).sum(axis=1)) / matrix_rank
    d_min = float(dists.min())
    d_max = float(dists.max())
    if d_min == 0.0:
        raise ValueError("duplicate embedding: minimum latent distance is zero")
    return (d_max - d_min) / d_min


def rank_penalty_bound(
    penalty: float,
    initial_mse: float,
    initial_nuclear: float,
    final_mse: float = 0.0,
) -> float:
    """Trend-level upper bound (1/penalty)(initial_mse - final_mse) + initial_nuclear.

    The unknown final reconstruction loss is lower-bounded by 0 when not
    supplied, and the unspecified positive proportionality constant is
    taken as 1, so this is reported for its scaling in ``penalty`` only,
    never asserted as tight.
    """
    if penalty <= 0:
        raise ValueError("penalty must be positive")
    return (initial_mse - final_mse) / penalty + initial_nuclear
