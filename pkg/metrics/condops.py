"""
Conditional moment statistics in RKHS: the B matrix, its factor A, and
the trace / nuclear-norm blocks of the empirical conditional discrepancy.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from errors import NumericalError, ShapeError
from metrics.numerics import (
    PSD_FAILURE,
    _require_symmetric,
    as_matrix,
    center_gram,
    centering_matrix,
    kernel_matrix,
    nuclear_norm,
    resolve_kernel,
    sym_eig,
)


@dataclass(frozen=True)
class GramBundle:
    """Kernel matrices of one source/target batch pair.

    KXts and KYts are target-rows x source-cols. G* are the centered
    counterparts of the within-domain kernels.
    """
    KXss: np.ndarray
    KXtt: np.ndarray
    KXts: np.ndarray
    KYss: np.ndarray
    KYtt: np.ndarray
    KYts: np.ndarray
    GXs: np.ndarray
    GXt: np.ndarray
    GYs: np.ndarray
    GYt: np.ndarray

    def __post_init__(self):
        n = self.KXss.shape[0]
        for name in ('KXss', 'KXtt', 'KXts', 'KYss', 'KYtt', 'KYts', 'GXs', 'GXt', 'GYs', 'GYt'):
            if getattr(self, name).shape != (n, n):
                raise ShapeError(f"GramBundle.{name} has shape {getattr(self, name).shape}, expected ({n}, {n})")

    @property
    def n(self) -> int:
        return self.KXss.shape[0]

    @classmethod
    def from_kernels(cls, KXss, KXtt, KXts, KYss, KYtt, KYts) -> 'GramBundle':
        return cls(
            KXss=KXss, KXtt=KXtt, KXts=KXts,
            KYss=KYss, KYtt=KYtt, KYts=KYts,
            GXs=center_gram(KXss), GXt=center_gram(KXtt),
            GYs=center_gram(KYss), GYt=center_gram(KYtt),
        )

    def swapped(self) -> 'GramBundle':
        """The same batch pair with source and target exchanged."""
        return GramBundle(
            KXss=self.KXtt, KXtt=self.KXss, KXts=self.KXts.T,
            KYss=self.KYtt, KYtt=self.KYss, KYts=self.KYts.T,
            GXs=self.GXt, GXt=self.GXs, GYs=self.GYt, GYt=self.GYs,
        )


@dataclass(frozen=True)
class ConditionalStats:
    """Per-domain B = eps*n*(G_Y + eps*n*I)^-1 and its factor A with B = A A^T."""
    B: np.ndarray
    A: np.ndarray
    epsilon: float


def build_bundle(Xs, Xt, ys, yt, cfg) -> GramBundle:
    """Kernel matrices for a batch pair; unresolved bandwidths use the pooled median heuristic."""
    Xs, Xt = as_matrix(Xs, 'Xs'), as_matrix(Xt, 'Xt')
    ys, yt = as_matrix(ys, 'ys'), as_matrix(yt, 'yt')
    n = Xs.shape[0]
    if Xt.shape[0] != n or ys.shape[0] != n or yt.shape[0] != n:
        raise ShapeError(
            f"source and target batches must share one size n: "
            f"Xs {Xs.shape[0]}, Xt {Xt.shape[0]}, ys {ys.shape[0]}, yt {yt.shape[0]}"
        )
    kx = resolve_kernel(cfg.x_kernel, Xs, Xt)
    ky = resolve_kernel(cfg.y_kernel, ys, yt)
    return GramBundle.from_kernels(
        KXss=kernel_matrix(kx, Xs, Xs),
        KXtt=kernel_matrix(kx, Xt, Xt),
        KXts=kernel_matrix(kx, Xt, Xs),
        KYss=kernel_matrix(ky, ys, ys),
        KYtt=kernel_matrix(ky, yt, yt),
        KYts=kernel_matrix(ky, yt, ys),
    )


def _check_epsilon(epsilon: float) -> None:
    if not epsilon > 0:
        raise ShapeError(f"epsilon must be positive, got {epsilon}")


def _resolvent(GY: np.ndarray, epsilon: float) -> np.ndarray:
    """(G_Y + eps*n*I)^-1"""
    n = GY.shape[0]
    try:
        inv = scipy.linalg.solve(GY + epsilon * n * np.eye(n), np.eye(n), assume_a='sym')
    except (scipy.linalg.LinAlgError, ValueError) as e:
        raise NumericalError(f"resolvent solve failed for G_Y + {epsilon:g}*n*I: {e}") from e
    return 0.5 * (inv + inv.T)


def compute_B(GY, epsilon: float) -> np.ndarray:
    """B = I - (1/(n eps)) [G - G (G + eps n I)^-1 G], computed as eps*n*(G + eps*n*I)^-1."""
    GY = as_matrix(GY, 'GY')
    _require_symmetric(GY, 'GY')
    _check_epsilon(epsilon)
    return epsilon * GY.shape[0] * _resolvent(GY, epsilon)


def compute_B_textbook(GY, epsilon: float) -> np.ndarray:
    """Literal form of B; kept to cross-check compute_B."""
    GY = as_matrix(GY, 'GY')
    _require_symmetric(GY, 'GY')
    _check_epsilon(epsilon)
    n = GY.shape[0]
    inner = GY - GY @ _resolvent(GY, epsilon) @ GY
    return np.eye(n) - inner / (n * epsilon)


def factor_A(B) -> np.ndarray:
    """Symmetric eigen factor A = V diag(sqrt(w)) with B = A A^T."""
    w, V = sym_eig(B)
    if w.size and w[-1] < -PSD_FAILURE:
        raise NumericalError(f"B is not PSD: smallest eigenvalue {w[-1]:.3e}")
    return V * np.sqrt(np.maximum(w, 0.0))


def conditional_stats(GY, epsilon: float) -> ConditionalStats:
    B = compute_B(GY, epsilon)
    return ConditionalStats(B=B, A=factor_A(B), epsilon=epsilon)


def conditional_trace_term(GX, GY, epsilon: float) -> float:
    """eps * tr[G_X (eps n I + G_Y)^-1], equal to (1/n) tr(G_X B)."""
    GX = as_matrix(GX, 'GX')
    GY = as_matrix(GY, 'GY')
    if GX.shape != GY.shape or GX.shape[0] != GX.shape[1]:
        raise ShapeError(f"GX {GX.shape} and GY {GY.shape} must be the same square shape")
    _check_epsilon(epsilon)
    return float(epsilon * np.sum(GX * _resolvent(GY, epsilon)))


def centered_cross_factor(KXts, As, At) -> np.ndarray:
    """(H A^t)^T K_X^ts (H A^s)"""
    KXts = as_matrix(KXts, 'KXts')
    As = as_matrix(As, 'As')
    At = as_matrix(At, 'At')
    n_t, n_s = KXts.shape
    if At.shape[0] != n_t or As.shape[0] != n_s:
        raise ShapeError(f"factors {At.shape}, {As.shape} do not conform with KXts {KXts.shape}")
    Ct = centering_matrix(n_t) @ At
    Cs = centering_matrix(n_s) @ As
    return Ct.T @ KXts @ Cs


def cross_conditional_term(KXts, As, At) -> float:
    """(2/n) || (H A^t)^T K_X^ts (H A^s) ||_*"""
    M = centered_cross_factor(KXts, As, At)
    return 2.0 / np.asarray(KXts).shape[0] * nuclear_norm(M)
