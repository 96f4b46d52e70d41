"""
Numerics - dense symmetric linear algebra and kernel-matrix primitives
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import scipy.linalg
from scipy.spatial.distance import cdist, pdist

from errors import NumericalError, ShapeError

logger = logging.getLogger(__name__)

KERNEL_KINDS = ('gaussian', 'linear', 'delta')

# Eigenvalues above this are clamped to zero; below it is an upstream bug
CLAMP_TOLERANCE = 1e-10
PSD_FAILURE = 1e-6
SYMMETRY_TOLERANCE = 1e-8

# Singular values at or below this fraction of the largest are structural zeros
NUCLEAR_ZERO_RTOL = 1e-10


@dataclass(frozen=True)
class KernelSpec:
    """Kernel on samples.

    Args:
        kind: 'gaussian', 'linear' or 'delta'
        bandwidth: gaussian width sigma in exp(-||a-b||^2 / sigma^2);
            None resolves to the median heuristic at use
        delta_tolerance: labels closer than this (max-abs) count as equal
    """
    kind: str = 'gaussian'
    bandwidth: Optional[float] = None
    delta_tolerance: float = 0.0

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ShapeError(f"unknown kernel kind '{self.kind}', expected one of {KERNEL_KINDS}")
        if self.bandwidth is not None:
            if not np.isfinite(self.bandwidth) or self.bandwidth <= 0:
                raise ShapeError(f"kernel bandwidth must be positive, got {self.bandwidth}")
        if self.delta_tolerance < 0:
            raise ShapeError(f"delta_tolerance must be nonnegative, got {self.delta_tolerance}")

    @property
    def resolved(self) -> bool:
        return self.kind != 'gaussian' or self.bandwidth is not None

    def to_dict(self) -> dict:
        return {'kind': self.kind, 'bandwidth': self.bandwidth, 'delta_tolerance': self.delta_tolerance}

    @classmethod
    def from_dict(cls, data: dict) -> 'KernelSpec':
        bandwidth = data.get('bandwidth')
        if isinstance(bandwidth, str):
            if bandwidth.lower() != 'median':
                raise ShapeError(f"kernel bandwidth must be a number or 'median', got '{bandwidth}'")
            bandwidth = None
        return cls(
            kind=data.get('kind', 'gaussian'),
            bandwidth=None if bandwidth is None else float(bandwidth),
            delta_tolerance=float(data.get('delta_tolerance', 0.0)),
        )


def as_matrix(values, name: str = 'matrix') -> np.ndarray:
    """Validate and return a finite 2-D float64 array (1-D input becomes a column)."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got {arr.ndim}-D")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ShapeError(f"{name} must have positive dimensions, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ShapeError(f"{name} contains NaN or Inf entries")
    return arr


def _require_square(M: np.ndarray, name: str) -> None:
    if M.shape[0] != M.shape[1]:
        raise ShapeError(f"{name} must be square, got {M.shape}")


def _require_symmetric(M: np.ndarray, name: str) -> None:
    _require_square(M, name)
    scale = max(1.0, float(np.max(np.abs(M))))
    if np.max(np.abs(M - M.T)) > SYMMETRY_TOLERANCE * scale:
        raise ShapeError(f"{name} is not symmetric")


def centering_matrix(n: int) -> np.ndarray:
    """H_n = I - (1/n) 1 1^T"""
    return np.eye(n) - np.full((n, n), 1.0 / n)


def kernel_matrix(spec: KernelSpec, A, B) -> np.ndarray:
    """Kernel matrix with entry (i, j) = k(a_i, b_j).

    Args:
        spec: KernelSpec with a concrete bandwidth (see resolve_kernel)
        A: samples n x d
        B: samples m x d

    Returns:
        n x m kernel matrix
    """
    A = as_matrix(A, 'A')
    B = as_matrix(B, 'B')
    if A.shape[1] != B.shape[1]:
        raise ShapeError(f"column counts differ: {A.shape[1]} vs {B.shape[1]}")

    if spec.kind == 'linear':
        return A @ B.T
    if spec.kind == 'delta':
        return (cdist(A, B, 'chebyshev') <= spec.delta_tolerance).astype(np.float64)

    if spec.bandwidth is None:
        raise ShapeError("gaussian kernel needs a bandwidth; call resolve_kernel first")
    sq = cdist(A, B, 'sqeuclidean')
    return np.exp(-sq / spec.bandwidth ** 2)


def center_gram(K) -> np.ndarray:
    """Centered Gram matrix G = H K H (double centering, no explicit H product)."""
    K = as_matrix(K, 'K')
    _require_square(K, 'K')
    G = K - K.mean(axis=0, keepdims=True)
    return G - G.mean(axis=1, keepdims=True)


def sym_eig(M) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and orthonormal eigenvectors of a symmetric matrix."""
    M = as_matrix(M, 'M')
    _require_symmetric(M, 'M')
    try:
        w, V = scipy.linalg.eigh(0.5 * (M + M.T))
    except (scipy.linalg.LinAlgError, ValueError) as e:
        raise NumericalError(f"eigendecomposition failed to converge: {e}") from e
    return w[::-1], V[:, ::-1]


def _clamped_eig(M, name: str) -> tuple[np.ndarray, np.ndarray]:
    w, V = sym_eig(M)
    if w.size and w[-1] < -PSD_FAILURE:
        raise NumericalError(f"{name} is not PSD: smallest eigenvalue {w[-1]:.3e}")
    return np.where(w < CLAMP_TOLERANCE, np.maximum(w, 0.0), w), V


def psd_sqrt(M) -> np.ndarray:
    """Symmetric square root of a PSD matrix, small negative eigenvalues clamped to 0."""
    w, V = _clamped_eig(M, 'M')
    R = (V * np.sqrt(w)) @ V.T
    return 0.5 * (R + R.T)


def nuclear_norm(M) -> float:
    """Sum of singular values."""
    M = as_matrix(M, 'M')
    try:
        s = scipy.linalg.svd(M, compute_uv=False)
    except (scipy.linalg.LinAlgError, ValueError) as e:
        raise NumericalError(f"SVD failed: {e}") from e
    return float(np.sum(s))


def nuclear_norm_subgradient(M) -> tuple[float, np.ndarray, float]:
    """Nuclear norm with its (sub)gradient U_r V_r^T.

    Singular values at or below NUCLEAR_ZERO_RTOL * s_max are structural
    zeros (centering, low-rank kernels) and are left out of U_r V_r^T.

    Returns:
        (value, gradient with the shape of M, smallest retained s / s_max)
    """
    M = as_matrix(M, 'M')
    try:
        U, s, Vt = scipy.linalg.svd(M, full_matrices=False)
    except (scipy.linalg.LinAlgError, ValueError) as e:
        raise NumericalError(f"SVD failed: {e}") from e
    value = float(np.sum(s))
    s_max = float(s[0]) if s.size else 0.0
    if s_max == 0.0:
        return value, np.zeros_like(M), 0.0
    keep = s > NUCLEAR_ZERO_RTOL * s_max
    grad = U[:, keep] @ Vt[keep, :]
    gap = float(s[keep][-1] / s_max)
    return value, grad, gap


def reg_inverse(M, rho: float) -> np.ndarray:
    """(M + rho I)^-1 for symmetric PSD M."""
    if not rho > 0:
        raise ShapeError(f"ridge must be positive, got {rho}")
    M = as_matrix(M, 'M')
    _require_symmetric(M, 'M')
    n = M.shape[0]
    try:
        factor = scipy.linalg.cho_factor(M + rho * np.eye(n))
        inv = scipy.linalg.cho_solve(factor, np.eye(n))
    except scipy.linalg.LinAlgError:
        # M can carry rounding-level negative eigenvalues larger than rho
        logger.debug("Cholesky failed in reg_inverse, falling back to LU solve")
        inv = scipy.linalg.solve(M + rho * np.eye(n), np.eye(n), assume_a='sym')
    return 0.5 * (inv + inv.T)


def median_heuristic(X) -> float:
    """Bandwidth sigma with sigma^2 = median pairwise squared distance (1.0 if that is 0)."""
    X = as_matrix(X, 'X')
    if X.shape[0] < 2:
        raise ShapeError(f"median heuristic needs at least 2 samples, got {X.shape[0]}")
    med = float(np.median(pdist(X, 'sqeuclidean')))
    if med <= 0.0:
        return 1.0
    return float(np.sqrt(med))


def resolve_kernel(spec: KernelSpec, *samples) -> KernelSpec:
    """Return spec with a concrete bandwidth, taking the median heuristic over the pooled samples."""
    if spec.resolved:
        return spec
    pooled = np.vstack([as_matrix(s, 'samples') for s in samples])
    return replace(spec, bandwidth=median_heuristic(pooled))
