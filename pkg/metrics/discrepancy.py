"""
Discrepancy family: MMD, kernel Bures, KGW, CMMD (generic and delta-kernel
forms), modified CMMD, COD and modified COD.

All block functions take kernel matrices already built for one batch pair
(see condops.build_bundle); evaluate_metric goes from raw samples.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

import config
from errors import DataError, ShapeError, UsageError
from metrics.condops import (
    GramBundle,
    build_bundle,
    conditional_stats,
    conditional_trace_term,
    cross_conditional_term,
)
from metrics.numerics import (
    KernelSpec,
    as_matrix,
    centering_matrix,
    kernel_matrix,
    nuclear_norm,
    reg_inverse,
    resolve_kernel,
)

MOD_VARIANTS = ('corrected', 'printed')


@dataclass(frozen=True)
class MetricConfig:
    """Kernels and regularizers of the conditional statistics."""
    x_kernel: KernelSpec = field(default_factory=lambda: KernelSpec(config.X_KERNEL, config.X_BANDWIDTH))
    y_kernel: KernelSpec = field(default_factory=lambda: KernelSpec(config.Y_KERNEL, config.Y_BANDWIDTH))
    epsilon: float = config.EPSILON
    ridge_lambda: float = config.RIDGE_LAMBDA
    mod_variant: str = config.MOD_VARIANT

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ShapeError(f"epsilon must be positive, got {self.epsilon}")
        if not self.ridge_lambda > 0:
            raise ShapeError(f"ridge_lambda must be positive, got {self.ridge_lambda}")
        if self.mod_variant not in MOD_VARIANTS:
            raise ShapeError(f"mod_variant must be one of {MOD_VARIANTS}, got '{self.mod_variant}'")

    def to_dict(self) -> dict:
        return {
            'x_kernel': self.x_kernel.to_dict(),
            'y_kernel': self.y_kernel.to_dict(),
            'epsilon': self.epsilon,
            'ridge_lambda': self.ridge_lambda,
            'mod_variant': self.mod_variant,
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'MetricConfig':
        defaults = cls()
        return cls(
            x_kernel=KernelSpec.from_dict(data['x_kernel']) if 'x_kernel' in data else defaults.x_kernel,
            y_kernel=KernelSpec.from_dict(data['y_kernel']) if 'y_kernel' in data else defaults.y_kernel,
            epsilon=float(data.get('epsilon', defaults.epsilon)),
            ridge_lambda=float(data.get('ridge_lambda', defaults.ridge_lambda)),
            mod_variant=data.get('mod_variant', defaults.mod_variant),
        )


@dataclass(frozen=True)
class MetricValue:
    """Metric total with its named blocks; total is the sum of components."""
    total: float
    components: dict

    @classmethod
    def of(cls, **components) -> 'MetricValue':
        comps = {k: float(v) for k, v in components.items()}
        return cls(total=float(sum(comps.values())), components=comps)

    def to_dict(self) -> dict:
        return {'total': self.total, 'components': dict(self.components)}


def _check_conformable(*mats) -> int:
    n = mats[0].shape[0]
    for M in mats:
        if M.shape != (n, n):
            raise ShapeError(f"expected {n}x{n} matrices, got {M.shape}")
    return n


def mmd2(KXss, KXtt, KXts) -> float:
    """Squared MMD, (1/n^2)[1'Kss1 + 1'Ktt1 - 2*1'Kts1], clamped at 0 within -1e-12."""
    KXss, KXtt, KXts = (np.asarray(K, dtype=np.float64) for K in (KXss, KXtt, KXts))
    n = _check_conformable(KXss, KXtt, KXts)
    value = (KXss.sum() + KXtt.sum() - 2.0 * KXts.sum()) / n ** 2
    if -1e-12 < value < 0.0:
        return 0.0
    return float(value)


def kernel_bures(GXs, GXt, KXts) -> float:
    """(1/n)tr(G_s) + (1/n)tr(G_t) - (2/n)||H K_ts H||_*"""
    GXs, GXt, KXts = (np.asarray(K, dtype=np.float64) for K in (GXs, GXt, KXts))
    n = _check_conformable(GXs, GXt, KXts)
    H = centering_matrix(n)
    return float((np.trace(GXs) + np.trace(GXt) - 2.0 * nuclear_norm(H @ KXts @ H)) / n)


def kgw2(bundle: GramBundle) -> MetricValue:
    """Kernel Gaussian Wasserstein distance: MMD block plus kernel Bures block."""
    return MetricValue.of(
        mean=mmd2(bundle.KXss, bundle.KXtt, bundle.KXts),
        covariance=kernel_bures(bundle.GXs, bundle.GXt, bundle.KXts),
    )


def mean_block_weights(bundle: GramBundle, cfg: MetricConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Weights (Ms, Mt, Mc) with within-source = <KXss, Ms>, within-target = <KXtt, Mt>
    and cross = <KXts, Mc>.

    Ms = R_s KYss R_s, Mt = R_t KYtt R_t, Mc = R_t KYts R_s with R = (K_Y + lambda I)^-1.
    """
    Rs = reg_inverse(bundle.KYss, cfg.ridge_lambda)
    Rt = reg_inverse(bundle.KYtt, cfg.ridge_lambda)
    return Rs @ bundle.KYss @ Rs, Rt @ bundle.KYtt @ Rt, Rt @ bundle.KYts @ Rs


def cmmd_terms(bundle: GramBundle, cfg: MetricConfig) -> tuple[float, float, float]:
    """(within-source, within-target, cross) terms of the conditional mean block."""
    Ms, Mt, Mc = mean_block_weights(bundle, cfg)
    return (
        float(np.sum(bundle.KXss * Ms)),
        float(np.sum(bundle.KXtt * Mt)),
        float(np.sum(bundle.KXts * Mc)),
    )


def cmmd2(bundle: GramBundle, cfg: MetricConfig) -> float:
    """tr(KYss Rs KXss Rs) + tr(KYtt Rt KXtt Rt) - 2 tr(KYts Rs KXst Rt)"""
    within_s, within_t, cross = cmmd_terms(bundle, cfg)
    return within_s + within_t - 2.0 * cross


def cmmd_mod(bundle: GramBundle, cfg: MetricConfig) -> float:
    """Modified conditional mean block: every similarity term enters negated."""
    within_s, within_t, cross = cmmd_terms(bundle, cfg)
    if cfg.mod_variant == 'printed':
        return -2.0 * within_t - 2.0 * cross
    return -within_s - within_t - 2.0 * cross


def _label_groups(Y: np.ndarray) -> dict:
    groups = {}
    for i, row in enumerate(Y):
        groups.setdefault(tuple(row.tolist()), []).append(i)
    return groups


def cmmd2_delta(source, target, x_kernel: KernelSpec, ridge_lambda: float) -> float:
    """Conditional mean block under the Kronecker-delta label kernel, as class-grouped sums.

    Each label value p contributes
        S_p / (lambda + n_p^s)^2 + T_p / (lambda + n_p^t)^2 - 2 C_p / ((lambda + n_p^s)(lambda + n_p^t))
    where S_p, T_p, C_p sum the x-kernel over same-label pairs within source,
    within target and across domains.
    """
    if not ridge_lambda > 0:
        raise ShapeError(f"ridge_lambda must be positive, got {ridge_lambda}")
    Xs, Xt = as_matrix(source.X, 'source.X'), as_matrix(target.X, 'target.X')
    ys, yt = as_matrix(source.Y, 'source.Y'), as_matrix(target.Y, 'target.Y')
    groups_s, groups_t = _label_groups(ys), _label_groups(yt)
    only = set(groups_s).symmetric_difference(groups_t)
    if only:
        raise DataError(f"label values present in one domain only: {sorted(only)[:5]}")

    kx = resolve_kernel(x_kernel, Xs, Xt)
    total = 0.0
    for label in sorted(groups_s):
        xs, xt = Xs[groups_s[label]], Xt[groups_t[label]]
        ws = 1.0 / (ridge_lambda + len(xs))
        wt = 1.0 / (ridge_lambda + len(xt))
        total += ws ** 2 * kernel_matrix(kx, xs, xs).sum()
        total += wt ** 2 * kernel_matrix(kx, xt, xt).sum()
        total -= 2.0 * ws * wt * kernel_matrix(kx, xs, xt).sum()
    return float(total)


def covariance_block(bundle: GramBundle, cfg: MetricConfig) -> tuple[float, float]:
    """(trace block, cross block) of the conditional covariance discrepancy."""
    stats_s = conditional_stats(bundle.GYs, cfg.epsilon)
    stats_t = conditional_stats(bundle.GYt, cfg.epsilon)
    trace = (conditional_trace_term(bundle.GXs, bundle.GYs, cfg.epsilon)
             + conditional_trace_term(bundle.GXt, bundle.GYt, cfg.epsilon))
    cross = cross_conditional_term(bundle.KXts, stats_s.A, stats_t.A)
    return trace, cross


def cod2(bundle: GramBundle, cfg: MetricConfig) -> MetricValue:
    """Empirical conditional operator discrepancy."""
    trace, cross = covariance_block(bundle, cfg)
    return MetricValue.of(mean=cmmd2(bundle, cfg), trace=trace, cross=-cross)


def cod_mod(bundle: GramBundle, cfg: MetricConfig) -> MetricValue:
    """Modified COD: modified conditional mean block plus the covariance block of cod2."""
    trace, cross = covariance_block(bundle, cfg)
    return MetricValue.of(mean=cmmd_mod(bundle, cfg), trace=trace, cross=-cross)


def _as_value(fn):
    def wrapped(bundle, cfg):
        return MetricValue.of(mean=fn(bundle, cfg))
    return wrapped


METRICS = {
    'mmd2': lambda bundle, cfg: MetricValue.of(mean=mmd2(bundle.KXss, bundle.KXtt, bundle.KXts)),
    'kgw2': lambda bundle, cfg: kgw2(bundle),
    'cmmd2': _as_value(cmmd2),
    'cmmd_mod': _as_value(cmmd_mod),
    'cod2': cod2,
    'cod_mod': cod_mod,
}


def metric_names() -> tuple:
    return tuple(METRICS)


def compute_metric(name: str, bundle: GramBundle, cfg: MetricConfig) -> MetricValue:
    if name not in METRICS:
        raise UsageError(f"unknown metric '{name}', expected one of {metric_names()}")
    return METRICS[name](bundle, cfg)


def evaluate_metric(name: str, Xs, Xt, ys, yt, cfg: MetricConfig) -> MetricValue:
    """Metric between two labelled batches of equal size."""
    if name not in METRICS:
        raise UsageError(f"unknown metric '{name}', expected one of {metric_names()}")
    return compute_metric(name, build_bundle(Xs, Xt, ys, yt, cfg), cfg)
