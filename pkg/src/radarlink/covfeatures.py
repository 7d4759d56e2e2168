"""Covariance featurization: Toeplitz-PSD projection, APS, covariance vectors.

The three feature maps feeding the translation networks: an angular power
spectrum over DFT directions, the dominant-structure-preserving projection
onto the Toeplitz-Hermitian-PSD cone, and the first-column (covariance
vector) representation of Toeplitz covariances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .covariance import SpatialCovariance
from .numerics import chebyshev_window, dft_matrix

APS_WINDOW_ATTENUATION_DB = 35.0


@dataclass(frozen=True)
class ProjectionResult:
    """Outcome of the alternating-projections Toeplitz-PSD fit."""

    cov: SpatialCovariance
    converged: bool
    iterations: int


def _toeplitz_average(x: np.ndarray) -> np.ndarray:
    """Nearest Hermitian Toeplitz matrix: average each diagonal."""
    n = x.shape[0]
    h = 0.5 * (x + x.conj().T)
    col = np.zeros(n, dtype=complex)
    for d in range(n):
        col[d] = np.mean(np.diagonal(h, offset=-d))
    col[0] = col[0].real
    return _toeplitz_from_column(col)


def _toeplitz_from_column(col: np.ndarray) -> np.ndarray:
    n = len(col)
    idx = np.subtract.outer(np.arange(n), np.arange(n))
    full = np.concatenate([np.conj(col[:0:-1]), col])
    return full[idx + n - 1]


def _psd_clip(x: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(0.5 * (x + x.conj().T))
    vals = np.maximum(vals, 0.0)
    return (vecs * vals) @ vecs.conj().T


def toeplitz_psd_project(
    r_hat: SpatialCovariance,
    noise_power_w: float = 0.0,
    tol: float = 1e-8,
    max_iter: int = 200,
) -> ProjectionResult:
    """Alternating projections of (R - sigma^2 I) onto the Toeplitz-PSD cone.

    Alternates per-diagonal averaging with eigenvalue clipping until the
    iterate stops moving and its Toeplitz form is PSD within tol.  The
    returned matrix is exactly Toeplitz; converged is False if max_iter
    passes without reaching tol (best iterate still returned).
    """
    a = r_hat.matrix - noise_power_w * np.eye(r_hat.n)
    scale = max(float(np.linalg.norm(a)), 1e-300)
    x = _toeplitz_average(a)
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        min_eig = float(np.linalg.eigvalsh(x).min())
        if min_eig >= -tol * scale:
            converged = True
            break
        x_next = _toeplitz_average(_psd_clip(x))
        moved = float(np.linalg.norm(x_next - x))
        x = x_next
        if moved <= tol * scale:
            # fixed point of the pair; PSD-ness is checked on re-entry
            min_eig = float(np.linalg.eigvalsh(x).min())
            converged = min_eig >= -tol * scale
            break
    # Zero-scale inputs (e.g. R = sigma^2 I exactly) are already done.
    if np.linalg.norm(x) == 0.0:
        converged = True
    return ProjectionResult(
        cov=SpatialCovariance(x), converged=converged, iterations=iterations
    )


def aps_diag(r: SpatialCovariance) -> np.ndarray:
    """Unclamped diag(F^H R F); may be negative for indefinite matrices."""
    f = dft_matrix(r.n)
    return np.real(np.einsum("ij,ik,kj->j", np.conj(f), r.matrix, f))


def aps_from_covariance(r: SpatialCovariance) -> np.ndarray:
    """Angular power spectrum diag(F^H R F) over the unitary DFT directions.

    Real by Hermitian symmetry; numerical negatives are clamped at 0.
    """
    return np.maximum(aps_diag(r), 0.0)


def aps_from_vector(v: np.ndarray, window: bool = True) -> np.ndarray:
    """Windowed periodogram |FFT(c .* v)|^2 of a length-N complex vector.

    c is the 35 dB Chebyshev window (peak 1); window=False uses c = 1.
    """
    v = np.asarray(v, dtype=complex)
    if v.ndim != 1:
        raise ValueError(f"expected a vector, got shape {v.shape}")
    if window:
        c = chebyshev_window(len(v), APS_WINDOW_ATTENUATION_DB)
        v = c * v
    return np.abs(np.fft.fft(v)) ** 2


def cov_vector(r_tilde: SpatialCovariance, tol: float = 1e-8) -> np.ndarray:
    """First column of a Toeplitz covariance (determines the whole matrix)."""
    m = r_tilde.matrix
    scale = max(float(np.abs(m).max()), 1e-300)
    t = _toeplitz_from_column(m[:, 0])
    err = float(np.abs(m - t).max())
    if err > tol * scale:
        raise ValueError(
            f"matrix is not Toeplitz within tolerance (deviation {err:.3e} "
            f"at scale {scale:.3e})"
        )
    col = m[:, 0].copy()
    col[0] = col[0].real
    return col


def reconstruct_toeplitz(r: np.ndarray) -> SpatialCovariance:
    """Hermitian Toeplitz matrix with first column r (PSD not enforced).

    The diagonal uses Re(r[0]) so the result is exactly Hermitian even for
    unconstrained network outputs.
    """
    r = np.asarray(r, dtype=complex)
    if r.ndim != 1:
        raise ValueError(f"expected a vector, got shape {r.shape}")
    col = r.copy()
    col[0] = col[0].real
    return SpatialCovariance(_toeplitz_from_column(col))


def toeplitz_aps_matrices(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Linear map from a covariance vector to its Toeplitz APS.

    diag(F^H T(r) F) = J_re @ Re(r) + J_im @ Im(r) for Hermitian Toeplitz
    T(r) with first column r; used for closed-form loss gradients.
    """
    k = np.arange(n)[:, np.newaxis]
    d = np.arange(n)[np.newaxis, :]
    weight = 2.0 * (n - d) / n
    ang = 2.0 * np.pi * k * d / n
    j_re = weight * np.cos(ang)
    j_im = weight * np.sin(ang)
    j_re[:, 0] = 1.0
    j_im[:, 0] = 0.0
    return j_re, j_im
