from types import SimpleNamespace

import numpy as np
import pytest

from errors import DataError, UsageError
from metrics.condops import GramBundle, build_bundle
from metrics.discrepancy import (
    MetricConfig,
    cmmd2,
    cmmd2_delta,
    cmmd_mod,
    cmmd_terms,
    cod2,
    cod_mod,
    compute_metric,
    evaluate_metric,
    kernel_bures,
    kgw2,
    metric_names,
    mmd2,
)
from metrics.numerics import KernelSpec, center_gram, kernel_matrix, psd_sqrt
from tests.helpers import random_batch, random_psd


def _identical_bundle(rng, cfg, n=8, d=2):
    X = rng.standard_normal((n, d))
    y = rng.uniform(size=(n, 1))
    return build_bundle(X, X.copy(), y, y.copy(), cfg)


def _random_bundle(rng, cfg, n=8, d=2):
    return build_bundle(*random_batch(rng, n, d), cfg)


class TestMMD:
    def test_identical(self, rng):
        X = rng.standard_normal((6, 2))
        K = kernel_matrix(KernelSpec('gaussian', 1.0), X, X)
        assert abs(mmd2(K, K, K)) < 1e-12

    def test_single_points_linear(self):
        spec = KernelSpec('linear')
        xs, xt = np.array([[0.0]]), np.array([[3.0]])
        value = mmd2(kernel_matrix(spec, xs, xs), kernel_matrix(spec, xt, xt), kernel_matrix(spec, xt, xs))
        assert value == pytest.approx(9.0)

    def test_double_loop(self, rng):
        n = 20
        k = KernelSpec('gaussian', 1.2)
        Xs, Xt = rng.standard_normal((n, 2)), rng.standard_normal((n, 2)) + 0.3

        def kv(a, b):
            return np.exp(-np.sum((a - b) ** 2) / 1.2 ** 2)

        expected = sum(kv(Xs[i], Xs[j]) + kv(Xt[i], Xt[j]) - 2 * kv(Xt[i], Xs[j])
                       for i in range(n) for j in range(n)) / n ** 2
        value = mmd2(kernel_matrix(k, Xs, Xs), kernel_matrix(k, Xt, Xt), kernel_matrix(k, Xt, Xs))
        assert value == pytest.approx(expected, rel=1e-10)


class TestKernelBures:
    def test_identical(self, rng):
        X = rng.standard_normal((7, 2))
        K = kernel_matrix(KernelSpec('gaussian', 1.0), X, X)
        G = center_gram(K)
        assert abs(kernel_bures(G, G, K)) < 1e-8

    def test_collapsed_target(self, rng):
        Xs = rng.standard_normal((6, 2))
        Xt = np.ones((6, 2))
        k = KernelSpec('gaussian', 1.0)
        GXs = center_gram(kernel_matrix(k, Xs, Xs))
        GXt = center_gram(kernel_matrix(k, Xt, Xt))
        value = kernel_bures(GXs, GXt, kernel_matrix(k, Xt, Xs))
        assert value == pytest.approx(np.trace(GXs) / 6, abs=1e-10)

    def test_linear_matches_covariance_bures(self, rng):
        n = 10
        Xs = rng.standard_normal((n, 2))
        Xt = rng.standard_normal((n, 2)) @ np.array([[1.5, 0.3], [0.0, 0.6]]) + 1.0
        k = KernelSpec('linear')
        value = kernel_bures(center_gram(kernel_matrix(k, Xs, Xs)), center_gram(kernel_matrix(k, Xt, Xt)),
                             kernel_matrix(k, Xt, Xs))
        Ss = np.cov(Xs.T, bias=True)
        St = np.cov(Xt.T, bias=True)
        root = psd_sqrt(Ss)
        expected = np.trace(Ss + St - 2 * psd_sqrt(root @ St @ root))
        assert value == pytest.approx(expected, abs=1e-8)


class TestKGW:
    def test_identical(self, rng, cfg):
        value = kgw2(_identical_bundle(rng, cfg))
        assert abs(value.total) < 1e-8
        assert set(value.components) == {'mean', 'covariance'}

    def test_swap_symmetry(self, rng, cfg):
        bundle = _random_bundle(rng, cfg)
        assert kgw2(bundle.swapped()).total == pytest.approx(kgw2(bundle).total, abs=1e-10)

    def test_nonnegative(self, rng, cfg):
        for _ in range(20):
            assert kgw2(_random_bundle(rng, cfg)).total >= -1e-8

    @pytest.mark.slow
    def test_gaussian_closed_form(self):
        cfg = MetricConfig(x_kernel=KernelSpec('linear'))
        values = []
        for seed in range(5):
            r = np.random.default_rng(seed)
            xs = r.normal(0.0, 1.0, size=(2000, 1))
            xt = r.normal(1.0, 2.0, size=(2000, 1))
            y = np.zeros((2000, 1))
            values.append(evaluate_metric('kgw2', xs, xt, y, y, cfg).total)
        assert np.median(values) == pytest.approx(2.0, rel=0.1)


class TestCMMD:
    def test_identical(self, rng, cfg):
        assert abs(cmmd2(_identical_bundle(rng, cfg), cfg)) < 1e-8

    def test_large_ridge_vanishes(self, rng):
        cfg = MetricConfig(ridge_lambda=1e6)
        assert abs(cmmd2(_random_bundle(rng, cfg), cfg)) < 1e-6

    def test_mod_identity(self, rng, cfg):
        bundle = _random_bundle(rng, cfg)
        within_s, within_t, _ = cmmd_terms(bundle, cfg)
        expected = cmmd2(bundle, cfg) - 2 * within_s - 2 * within_t
        assert cmmd_mod(bundle, cfg) == pytest.approx(expected, rel=1e-10, abs=1e-10)

    def test_mod_printed_variant(self, rng):
        cfg = MetricConfig(mod_variant='printed')
        bundle = _random_bundle(rng, cfg)
        _, within_t, cross = cmmd_terms(bundle, cfg)
        assert cmmd_mod(bundle, cfg) == pytest.approx(-2 * within_t - 2 * cross)

    def test_mod_identical_domains_negative(self, rng, cfg):
        bundle = _identical_bundle(rng, cfg)
        within_s, within_t, _ = cmmd_terms(bundle, cfg)
        value = cmmd_mod(bundle, cfg)
        assert value == pytest.approx(-2 * (within_s + within_t))
        assert value < 0

    def test_mod_zero_kernels(self, rng, cfg):
        n = 5
        KY = random_psd(rng, n)
        Z = np.zeros((n, n))
        bundle = GramBundle.from_kernels(Z, Z, Z, KY, KY, KY)
        assert cmmd_mod(bundle, cfg) == 0.0


def _counts_with_full_support(n, c):
    """Every way to split n items into c nonempty label groups, as count vectors."""
    if c == 1:
        yield (n,)
        return
    for first in range(1, n - c + 2):
        for rest in _counts_with_full_support(n - first, c - 1):
            yield (first,) + rest


class TestCMMDDelta:
    def test_identical(self, rng):
        X = rng.standard_normal((6, 2))
        y = np.array([0, 1, 1, 2, 2, 2], dtype=float)
        ds = SimpleNamespace(X=X, Y=y)
        assert abs(cmmd2_delta(ds, ds, KernelSpec('gaussian', 1.0), 1e-3)) < 1e-12

    def test_single_shared_label(self):
        lam = 0.25
        src = SimpleNamespace(X=np.array([[1.0]]), Y=np.array([[7.0]]))
        tgt = SimpleNamespace(X=np.array([[2.0]]), Y=np.array([[7.0]]))
        value = cmmd2_delta(src, tgt, KernelSpec('linear'), lam)
        assert value == pytest.approx(1.0 / (lam + 1) ** 2)

    def test_label_in_one_domain(self, rng):
        src = SimpleNamespace(X=rng.standard_normal((3, 1)), Y=np.array([0.0, 1.0, 1.0]))
        tgt = SimpleNamespace(X=rng.standard_normal((3, 1)), Y=np.array([0.0, 2.0, 2.0]))
        with pytest.raises(DataError, match='one domain only'):
            cmmd2_delta(src, tgt, KernelSpec('linear'), 1e-3)

    def test_matches_generic_path_over_label_counts(self):
        ridge = 1e-3
        x_kernel = KernelSpec('gaussian', 1.0)
        cfg = MetricConfig(x_kernel=x_kernel, y_kernel=KernelSpec('delta'), ridge_lambda=ridge)
        worst = 0.0
        for n in range(1, 13):
            r = np.random.default_rng(n)
            Xs, Xt = r.standard_normal((n, 2)), r.standard_normal((n, 2))
            for c in range(1, min(4, n) + 1):
                for counts in _counts_with_full_support(n, c):
                    ys = np.repeat(np.arange(c, dtype=float), counts)[:, None]
                    yt = np.repeat(np.arange(c, dtype=float), counts[::-1])[:, None]
                    generic = cmmd2(build_bundle(Xs, Xt, ys, yt, cfg), cfg)
                    grouped = cmmd2_delta(SimpleNamespace(X=Xs, Y=ys), SimpleNamespace(X=Xt, Y=yt), x_kernel, ridge)
                    worst = max(worst, abs(generic - grouped))
        assert worst < 1e-6


class TestCOD:
    def test_identical(self, rng, cfg):
        for n in (8, 16, 32):
            value = cod2(_identical_bundle(rng, cfg, n=n), cfg)
            assert abs(value.total) < 1e-7

    def test_swap_symmetry(self, rng, cfg):
        bundle = _random_bundle(rng, cfg)
        assert cod2(bundle.swapped(), cfg).total == pytest.approx(cod2(bundle, cfg).total, abs=1e-8)

    def test_constant_labels_reduce_to_bures(self, rng, cfg):
        Zs, Zt, _, _ = random_batch(rng, 7, 2)
        y = np.zeros((7, 1))
        bundle = build_bundle(Zs, Zt, y, y, cfg)
        value = cod2(bundle, cfg)
        covariance = value.components['trace'] + value.components['cross']
        assert covariance == pytest.approx(kernel_bures(bundle.GXs, bundle.GXt, bundle.KXts), abs=1e-8)

    def test_components_sum_to_total(self, rng, cfg):
        value = cod2(_random_bundle(rng, cfg), cfg)
        assert sum(value.components.values()) == pytest.approx(value.total, abs=1e-12)
        assert value.components['cross'] <= 0

    def test_mod_shares_covariance_block(self, rng, cfg):
        bundle = _random_bundle(rng, cfg)
        diff = cod_mod(bundle, cfg).total - cod2(bundle, cfg).total
        assert diff == pytest.approx(cmmd_mod(bundle, cfg) - cmmd2(bundle, cfg), abs=1e-10 * max(1.0, abs(diff)))

    def test_mod_zero_kernels(self, rng, cfg):
        n = 6
        KY = random_psd(rng, n)
        Z = np.zeros((n, n))
        assert cod_mod(GramBundle.from_kernels(Z, Z, Z, KY, KY, KY), cfg).total == 0.0

    def test_mod_identical_domains(self, rng, cfg):
        bundle = _identical_bundle(rng, cfg)
        value = cod_mod(bundle, cfg)
        assert value.components['trace'] + value.components['cross'] == pytest.approx(0.0, abs=1e-7)
        assert value.total == pytest.approx(cmmd_mod(bundle, cfg), abs=1e-7)


class TestRegistry:
    def test_names(self):
        assert metric_names() == ('mmd2', 'kgw2', 'cmmd2', 'cmmd_mod', 'cod2', 'cod_mod')

    def test_every_metric_returns_components(self, rng, cfg):
        bundle = _random_bundle(rng, cfg)
        for name in metric_names():
            value = compute_metric(name, bundle, cfg)
            assert np.isfinite(value.total)
            assert value.total == pytest.approx(sum(value.components.values()))

    def test_unknown(self, rng, cfg):
        with pytest.raises(UsageError):
            evaluate_metric('wasserstein', *random_batch(rng, 4, 2), cfg)

    def test_config_round_trip_keeps_median(self):
        cfg = MetricConfig.from_dict({'x_kernel': {'kind': 'gaussian', 'bandwidth': 'median'}, 'epsilon': 0.5})
        assert cfg.x_kernel.bandwidth is None
        assert MetricConfig.from_dict(cfg.to_dict()) == cfg
