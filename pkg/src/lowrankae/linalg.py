"""Dense linear algebra for the nuclear-norm machinery and latent analysis.

Jacobi-type iterations are used for both the SVD and the symmetric
eigenproblem: they are compact, deliver high relative accuracy for
small singular values (which the latent spectrum reports depend on),
and are fast enough at the matrix sizes this package works with.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ShapeError

__all__ = [
    "EigSymResult",
    "SvdResult",
    "cholesky",
    "covariance",
    "jacobi_svd",
    "nuclear_norm",
    "nuclear_norm_subgradient",
    "subgradient_from_svd",
    "sym_eig",
]

#: Singular values below this fraction of the largest one are treated as
#: zero when picking the subgradient's column space.
RANK_REL_TOL = 1e-10


@dataclass(frozen=True)
class SvdResult:
    """Factorization m = u @ diag(sigma) @ v.T with sigma descending."""

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray


@dataclass(frozen=True)
class EigSymResult:
    """Eigenpairs of a symmetric matrix, eigenvalues descending."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _check_square(m: np.ndarray, name: str) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeError(f"{name}: expected a square matrix, got shape {m.shape}")
    if m.size and not np.all(np.isfinite(m)):
        raise ValueError(f"{name}: input contains non-finite entries")
    return m


def _complete_orthonormal(u: np.ndarray, filled: int) -> None:
    """Fill columns filled..n-1 of ``u`` with an orthonormal completion."""
    n = u.shape[0]
    col = filled
    for candidate in range(n):
        if col == n:
            return
        vec = np.zeros(n)
        vec[candidate] = 1.0
        for _ in range(2):  # two projection passes for stability
            vec -= u[:, :col] @ (u[:, :col].T @ vec)
        norm = np.sqrt(vec @ vec)
        if norm > 0.5:
            u[:, col] = vec / norm
            col += 1
    if col != n:
        raise NumericalError("failed to complete an orthonormal basis")


def jacobi_svd(
    m: np.ndarray,
    tol: float = 1e-12,
    max_sweeps: int = 100,
    v0: np.ndarray | None = None,
) -> SvdResult:
    """One-sided Jacobi SVD of a square matrix.

    Rotations are applied until the off-diagonal norm of the implicit
    Gram matrix drops below ``tol`` times the Frobenius norm of ``m``
    (or until a sweep performs no rotations, i.e. the machine-precision
    fixed point). ``v0`` optionally warm-starts the right basis, which
    cuts the sweep count dramatically when factoring a slowly changing
    matrix, as the training loop does.
    """
    m = _check_square(m, "jacobi_svd")
    n = m.shape[0]
    frob = float(np.linalg.norm(m))
    if n == 0 or frob == 0.0:
        eye = np.eye(n)
        return SvdResult(eye.copy(), np.zeros(n), eye.copy())

    if v0 is not None:
        a = np.asfortranarray(m @ v0)
        v = np.asfortranarray(v0.copy())
    else:
        a = np.asfortranarray(m.copy())
        v = np.asfortranarray(np.eye(n))

    threshold = tol * frob
    converged = False
    for _ in range(max_sweeps):
        col_sq = np.einsum("ij,ij->j", a, a)
        off_sq = 0.0
        rotations = 0
        for p in range(n - 1):
            for q in range(p + 1, n):
                gamma = a[:, p] @ a[:, q]
                off_sq += gamma * gamma
                # Pairs whose coupling sits at the rounding floor of the
                # column norms cannot be improved; rotating them just
                # churns noise.
                if gamma * gamma <= 1e-32 * col_sq[p] * col_sq[q]:
                    continue
                rotations += 1
                zeta = (col_sq[q] - col_sq[p]) / (2.0 * gamma)
                t = np.sign(zeta) / (abs(zeta) + np.hypot(1.0, zeta)) if zeta != 0 else 1.0
                c = 1.0 / np.hypot(1.0, t)
                s = c * t
                ap = a[:, p].copy()
                a[:, p] = c * ap - s * a[:, q]
                a[:, q] = s * ap + c * a[:, q]
                vp = v[:, p].copy()
                v[:, p] = c * vp - s * v[:, q]
                v[:, q] = s * vp + c * v[:, q]
                col_sq[p] -= t * gamma
                col_sq[q] += t * gamma
        if np.sqrt(off_sq) <= threshold or rotations == 0:
            converged = True
            break
    if not converged:
        raise NumericalError(
            f"jacobi_svd did not converge in {max_sweeps} sweeps "
            f"(off-diagonal norm {np.sqrt(off_sq):.3e}, target {threshold:.3e})"
        )

    sigma = np.sqrt(np.einsum("ij,ij->j", a, a))
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    a = a[:, order]
    v = np.ascontiguousarray(v[:, order])

    u = np.zeros((n, n))
    floor = sigma[0] * n * np.finfo(np.float64).eps
    filled = 0
    for j in range(n):
        if sigma[j] > floor:
            u[:, j] = a[:, j] / sigma[j]
            filled += 1
        else:
            break
    _complete_orthonormal(u, filled)
    return SvdResult(u, sigma, v)


def nuclear_norm(m: np.ndarray) -> float:
    """Sum of singular values (the trace norm)."""
    return float(jacobi_svd(m).sigma.sum())


def subgradient_from_svd(svd: SvdResult, rank_rel_tol: float = RANK_REL_TOL) -> np.ndarray:
    """Subgradient element u_r @ v_r.T of the nuclear norm from a factorization.

    Only singular directions with sigma above ``rank_rel_tol`` times the
    largest singular value contribute; for the zero matrix this returns
    the zero matrix, which is a valid subgradient element.
    """
    sigma_max = svd.sigma[0] if svd.sigma.size else 0.0
    r = int(np.sum(svd.sigma > rank_rel_tol * sigma_max)) if sigma_max > 0 else 0
    if r == 0:
        return np.zeros_like(svd.u)
    return svd.u[:, :r] @ svd.v[:, :r].T


def nuclear_norm_subgradient(m: np.ndarray, rank_rel_tol: float = RANK_REL_TOL) -> np.ndarray:
    return subgradient_from_svd(jacobi_svd(m), rank_rel_tol)


def sym_eig(
    a: np.ndarray,
    tol: float = 1e-12,
    max_sweeps: int = 100,
    symmetry_rel_tol: float = 1e-10,
) -> EigSymResult:
    """Cyclic Jacobi eigendecomposition of a symmetric matrix."""
    a = _check_square(a, "sym_eig")
    n = a.shape[0]
    frob = float(np.linalg.norm(a))
    if frob > 0 and float(np.linalg.norm(a - a.T)) > symmetry_rel_tol * frob:
        raise ValueError("sym_eig: input is not symmetric within tolerance")
    s = (a + a.T) / 2.0
    vecs = np.eye(n)
    if n == 0 or frob == 0.0:
        return EigSymResult(np.zeros(n), vecs)

    threshold = tol * frob
    converged = False
    for _ in range(max_sweeps):
        off_sq = 0.0
        rotations = 0
        for p in range(n - 1):
            for q in range(p + 1, n):
                spq = s[p, q]
                off_sq += 2.0 * spq * spq
                if spq * spq <= 1e-32 * abs(s[p, p] * s[q, q]) or spq == 0.0:
                    continue
                rotations += 1
                tau = (s[q, q] - s[p, p]) / (2.0 * spq)
                t = np.sign(tau) / (abs(tau) + np.hypot(1.0, tau)) if tau != 0 else 1.0
                c = 1.0 / np.hypot(1.0, t)
                w = c * t
                spp, sqq = s[p, p], s[q, q]
                sp = s[:, p].copy()
                s[:, p] = c * sp - w * s[:, q]
                s[:, q] = w * sp + c * s[:, q]
                sp = s[p, :].copy()
                s[p, :] = c * sp - w * s[q, :]
                s[q, :] = w * sp + c * s[q, :]
                # Analytic values for the rotated 2x2 block beat the
                # rounded results of the vector updates.
                s[p, p] = spp - t * spq
                s[q, q] = sqq + t * spq
                s[p, q] = 0.0
                s[q, p] = 0.0
                vp = vecs[:, p].copy()
                vecs[:, p] = c * vp - w * vecs[:, q]
                vecs[:, q] = w * vp + c * vecs[:, q]
        if np.sqrt(off_sq) <= threshold or rotations == 0:
            converged = True
            break
    if not converged:
        raise NumericalError(
            f"sym_eig did not converge in {max_sweeps} sweeps "
            f"(off-diagonal norm {np.sqrt(off_sq):.3e}, target {threshold:.3e})"
        )

    values = np.diag(s).copy()
    order = np.argsort(-values, kind="stable")
    return EigSymResult(values[order], np.ascontiguousarray(vecs[:, order]))


def cholesky(sigma: np.ndarray) -> np.ndarray:
    """Lower-triangular factor L with L @ L.T == sigma (sigma must be SPD)."""
    sigma = _check_square(sigma, "cholesky")
    n = sigma.shape[0]
    lower = np.zeros((n, n))
    for j in range(n):
        d = sigma[j, j] - lower[j, :j] @ lower[j, :j]
        if d <= 0.0:
            raise NumericalError(f"cholesky: matrix not positive definite at pivot {j}")
        lower[j, j] = np.sqrt(d)
        if j + 1 < n:
            lower[j + 1 :, j] = (
                sigma[j + 1 :, j] - lower[j + 1 :, :j] @ lower[j, :j]
            ) / lower[j, j]
    return lower


def covariance(samples: np.ndarray) -> np.ndarray:
    """Biased (1/n) empirical covariance of sample rows."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2:
        raise ShapeError(f"covariance: expected a sample matrix, got shape {samples.shape}")
    n = samples.shape[0]
    if n < 2:
        raise ValueError(f"covariance: need at least 2 samples, got {n}")
    centered = samples - samples.mean(axis=0)
    cov = (centered.T @ centered) / n
    return (cov + cov.T) / 2.0
