"""
Analytic gradients of the discrepancy family with respect to the source and
target representation batches.

Every metric is a function of three x-kernel matrices, KXss = k(Zs, Zs),
KXtt = k(Zt, Zt) and KXts = k(Zt, Zs). Each metric supplies dL/dK for those
three (label kernels are constants: source labels are ground truth, target
pseudo-labels are detached), and kernel_backward carries dL/dK to dL/dZ.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from errors import DegenerateSpectrumError, NumericalError, ShapeError, UsageError
from metrics.condops import GramBundle, build_bundle, conditional_stats
from metrics.discrepancy import MetricConfig, compute_metric, mean_block_weights, metric_names
from metrics.numerics import (
    KernelSpec,
    as_matrix,
    centering_matrix,
    kernel_matrix,
    nuclear_norm_subgradient,
    resolve_kernel,
)

logger = logging.getLogger(__name__)

# A retained singular value this close to the structural zeros is a kink
DEGENERATE_GAP = 1e-9
PERTURBATION = 1e-8


@dataclass(frozen=True)
class GradPair:
    """Gradients with respect to the source and target representations."""
    dZs: np.ndarray
    dZt: np.ndarray
    spectral_gap: float = float('inf')


def kernel_backward(spec: KernelSpec, A: np.ndarray, B: np.ndarray, dK: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vector-Jacobian product of K = kernel_matrix(spec, A, B).

    Returns:
        (dA, dB) with dA = sum_j dK_ij dk(a_i, b_j)/da_i and likewise for B
    """
    if spec.kind == 'linear':
        return dK @ B, dK.T @ A
    if spec.kind == 'delta':
        raise ShapeError("the delta kernel is not differentiable in its inputs")
    if spec.bandwidth is None:
        raise ShapeError("gaussian kernel needs a bandwidth; call resolve_kernel first")
    P = dK * kernel_matrix(spec, A, B)
    c = -2.0 / spec.bandwidth ** 2
    dA = c * (P.sum(axis=1)[:, None] * A - P @ B)
    dB = c * (P.sum(axis=0)[:, None] * B - P.T @ A)
    return dA, dB


class _KernelGrads:
    """Accumulator of dL/dKXss, dL/dKXtt, dL/dKXts."""

    def __init__(self, n: int):
        self.ss = np.zeros((n, n))
        self.tt = np.zeros((n, n))
        self.ts = np.zeros((n, n))
        self.gap = float('inf')

    def add(self, ss=None, tt=None, ts=None, scale: float = 1.0) -> None:
        if ss is not None:
            self.ss += scale * ss
        if tt is not None:
            self.tt += scale * tt
        if ts is not None:
            self.ts += scale * ts

    def nuclear(self, M: np.ndarray) -> np.ndarray:
        _, grad, gap = nuclear_norm_subgradient(M)
        self.gap = min(self.gap, gap)
        return grad


def _mmd_grads(acc: _KernelGrads, n: int, scale: float = 1.0) -> None:
    ones = np.full((n, n), 1.0 / n ** 2)
    acc.add(ss=ones, tt=ones, ts=-2.0 * ones, scale=scale)


def _bures_grads(acc: _KernelGrads, bundle: GramBundle, scale: float = 1.0) -> None:
    n = bundle.n
    H = centering_matrix(n)
    W = acc.nuclear(H @ bundle.KXts @ H)
    acc.add(ss=H / n, tt=H / n, ts=-2.0 / n * (H @ W @ H), scale=scale)


def _mean_block_grads(acc: _KernelGrads, bundle: GramBundle, cfg: MetricConfig,
                      signs: tuple[float, float, float], scale: float = 1.0) -> None:
    """signs multiply (within-source, within-target, cross)."""
    Ms, Mt, Mc = mean_block_weights(bundle, cfg)
    acc.add(ss=signs[0] * Ms, tt=signs[1] * Mt, ts=signs[2] * Mc, scale=scale)


def _covariance_grads(acc: _KernelGrads, bundle: GramBundle, cfg: MetricConfig, scale: float = 1.0) -> None:
    n = bundle.n
    H = centering_matrix(n)
    stats_s = conditional_stats(bundle.GYs, cfg.epsilon)
    stats_t = conditional_stats(bundle.GYt, cfg.epsilon)
    Cs, Ct = H @ stats_s.A, H @ stats_t.A
    W = acc.nuclear(Ct.T @ bundle.KXts @ Cs)
    acc.add(
        ss=H @ stats_s.B @ H / n,
        tt=H @ stats_t.B @ H / n,
        ts=-2.0 / n * (Ct @ W @ Cs.T),
        scale=scale,
    )


def _mod_signs(cfg: MetricConfig) -> tuple[float, float, float]:
    if cfg.mod_variant == 'printed':
        return 0.0, -2.0, -2.0
    return -1.0, -1.0, -2.0


def kernel_gradients(name: str, bundle: GramBundle, cfg: MetricConfig) -> _KernelGrads:
    """dL/dK for the three x-kernel matrices of metric `name`."""
    acc = _KernelGrads(bundle.n)
    if name == 'mmd2':
        _mmd_grads(acc, bundle.n)
    elif name == 'kgw2':
        _mmd_grads(acc, bundle.n)
        _bures_grads(acc, bundle)
    elif name == 'cmmd2':
        _mean_block_grads(acc, bundle, cfg, (1.0, 1.0, -2.0))
    elif name == 'cmmd_mod':
        _mean_block_grads(acc, bundle, cfg, _mod_signs(cfg))
    elif name == 'cod2':
        _mean_block_grads(acc, bundle, cfg, (1.0, 1.0, -2.0))
        _covariance_grads(acc, bundle, cfg)
    elif name == 'cod_mod':
        _mean_block_grads(acc, bundle, cfg, _mod_signs(cfg))
        _covariance_grads(acc, bundle, cfg)
    else:
        raise UsageError(f"unknown metric '{name}', expected one of {metric_names()}")
    return acc


def _resolve(cfg: MetricConfig, Zs, Zt, ys, yt) -> MetricConfig:
    if cfg.x_kernel.kind == 'delta':
        raise ShapeError("metric gradients need a gaussian or linear x-kernel")
    return replace(
        cfg,
        x_kernel=resolve_kernel(cfg.x_kernel, Zs, Zt),
        y_kernel=resolve_kernel(cfg.y_kernel, ys, yt),
    )


def _value_and_grad(name, Zs, Zt, ys, yt, cfg):
    bundle = build_bundle(Zs, Zt, ys, yt, cfg)
    value = compute_metric(name, bundle, cfg)
    acc = kernel_gradients(name, bundle, cfg)

    dZs_a, dZs_b = kernel_backward(cfg.x_kernel, Zs, Zs, acc.ss)
    dZt_a, dZt_b = kernel_backward(cfg.x_kernel, Zt, Zt, acc.tt)
    dZt_c, dZs_c = kernel_backward(cfg.x_kernel, Zt, Zs, acc.ts)
    grads = GradPair(dZs=dZs_a + dZs_b + dZs_c, dZt=dZt_a + dZt_b + dZt_c, spectral_gap=acc.gap)
    return value, grads


def metric_grad(name: str, Zs, Zt, ys, yt, cfg: MetricConfig, strict: bool = True, seed: int = 0):
    """Metric value and its exact gradient with respect to Zs and Zt.

    Unresolved bandwidths are fixed from the given batch before
    differentiating (the bandwidth itself is not differentiated).

    Args:
        name: one of mmd2, kgw2, cmmd2, cmmd_mod, cod2, cod_mod
        strict: raise DegenerateSpectrumError when a nuclear-norm site sits
            at a kink, after one retry at a PERTURBATION-sized random shift;
            False returns the subgradient as-is
        seed: seed of the retry perturbation

    Returns:
        (MetricValue, GradPair)
    """
    if name not in metric_names():
        raise UsageError(f"unknown metric '{name}', expected one of {metric_names()}")
    Zs, Zt = as_matrix(Zs, 'Zs'), as_matrix(Zt, 'Zt')
    ys, yt = as_matrix(ys, 'ys'), as_matrix(yt, 'yt')
    if Zs.shape != Zt.shape:
        raise ShapeError(f"Zs {Zs.shape} and Zt {Zt.shape} must have the same shape")
    cfg = _resolve(cfg, Zs, Zt, ys, yt)

    value, grads = _value_and_grad(name, Zs, Zt, ys, yt, cfg)
    if not strict or grads.spectral_gap > DEGENERATE_GAP:
        return value, grads

    logger.warning("%s: singular value gap %.2e at a nuclear-norm site, retrying perturbed",
                   name, grads.spectral_gap)
    rng = np.random.default_rng(seed)
    Zs_p = Zs + PERTURBATION * rng.standard_normal(Zs.shape)
    Zt_p = Zt + PERTURBATION * rng.standard_normal(Zt.shape)
    _, grads_p = _value_and_grad(name, Zs_p, Zt_p, ys, yt, cfg)
    if grads_p.spectral_gap <= DEGENERATE_GAP:
        raise DegenerateSpectrumError(
            f"{name} is not differentiable here: a nuclear-norm site has singular "
            f"values within {DEGENERATE_GAP:g} of its zero cluster (gap {grads_p.spectral_gap:.2e})"
        )
    return value, grads_p


def finite_diff_check(name: str, Zs, Zt, ys, yt, cfg: MetricConfig, h: float = 1e-5) -> float:
    """Max relative error between metric_grad and central differences over every entry of Zs and Zt.

    The relative error of an entry is |a - f| / max(|a|, |f|, 1e-8).
    """
    if not h > 0:
        raise ShapeError(f"finite-difference step must be positive, got {h}")
    Zs, Zt = as_matrix(Zs, 'Zs').copy(), as_matrix(Zt, 'Zt').copy()
    ys, yt = as_matrix(ys, 'ys'), as_matrix(yt, 'yt')
    cfg = _resolve(cfg, Zs, Zt, ys, yt)
    _, grads = metric_grad(name, Zs, Zt, ys, yt, cfg, strict=False)

    def f(a, b):
        v = compute_metric(name, build_bundle(a, b, ys, yt, cfg), cfg).total
        if not np.isfinite(v):
            raise NumericalError(f"{name} is nonfinite at a perturbed point")
        return v

    worst = 0.0
    for Z, analytic, which in ((Zs, grads.dZs, 0), (Zt, grads.dZt, 1)):
        for idx in np.ndindex(Z.shape):
            orig = Z[idx]
            Z[idx] = orig + h
            plus = f(Zs, Zt)
            Z[idx] = orig - h
            minus = f(Zs, Zt)
            Z[idx] = orig
            numeric = (plus - minus) / (2.0 * h)
            a = analytic[idx]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return float(worst)
