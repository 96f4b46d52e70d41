"""
Commands - metric, synth, train, gradcheck, ablate and sweep.

Each command returns its report (or manifest) dict after writing it under
the output directory; printing verdicts is left to the caller.
"""
from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

import config
from cli.experiment import ExperimentConfig
from cli.report import (
    build_report,
    markdown_table,
    median_iqr,
    write_markdown,
    write_report,
)
from data.dataset import Dataset, Standardizer, load_csv, write_csv
from data.synthetic import SynthSpec, gen_synthetic
from errors import DataError, UsageError
from learning.checkpoint import save_checkpoint
from learning.model import forward
from learning.trainer import TERM_METRICS, evaluate_mae, export_embeddings, train
from metrics.discrepancy import MetricConfig, MetricValue, cmmd2_delta, evaluate_metric, metric_names
from metrics.gradients import finite_diff_check

logger = logging.getLogger(__name__)

DELTA_METRIC = 'cmmd2_delta'


def command_metric_names() -> tuple:
    return metric_names() + (DELTA_METRIC,)


def _equal_size(source: Dataset, target: Dataset, seed: int) -> Tuple[Dataset, Dataset]:
    """Subsample the larger dataset (seeded, order kept) to the size of the smaller."""
    n = min(source.n, target.n)
    if n == 0:
        raise DataError("no rows to compare")
    rng = np.random.default_rng(seed)
    if source.n > n:
        source = source.subset(np.sort(rng.choice(source.n, n, replace=False)))
    if target.n > n:
        target = target.subset(np.sort(rng.choice(target.n, n, replace=False)))
    return source, target


def cmd_metric(source_csv, target_csv, names: Sequence[str], labels: Sequence[str],
               metric_cfg: Optional[MetricConfig] = None, seed: int = config.SEED,
               out_dir: str = config.OUT_DIR) -> dict:
    """Compute the requested metrics between two labelled CSV files."""
    metric_cfg = metric_cfg or MetricConfig()
    unknown = [m for m in names if m not in command_metric_names()]
    if unknown or not names:
        raise UsageError(f"unknown metric(s) {unknown or list(names)}, expected any of {command_metric_names()}")
    if not labels:
        raise UsageError("--labels must name at least one label column")

    source = load_csv(source_csv, labels, domain_tag='source')
    target = load_csv(target_csv, labels, domain_tag='target')
    if source.X.shape[1] != target.X.shape[1]:
        raise DataError(f"feature counts differ: {source.X.shape[1]} vs {target.X.shape[1]}")
    source, target = _equal_size(source, target, seed)

    values = {}
    for name in names:
        if name == DELTA_METRIC:
            values[name] = MetricValue.of(mean=cmmd2_delta(source, target, metric_cfg.x_kernel,
                                                           metric_cfg.ridge_lambda))
        else:
            values[name] = evaluate_metric(name, source.X, target.X, source.Y, target.Y, metric_cfg)
        logger.info("%s = %.6g", name, values[name].total)

    echo = {
        'source': str(source_csv),
        'target': str(target_csv),
        'labels': list(labels),
        'metrics': list(names),
        'metric': metric_cfg.to_dict(),
        'seed': seed,
    }
    report = build_report(
        'metric', echo,
        metrics={name: value.to_dict() for name, value in values.items()},
        summary={'n': source.n},
    )
    write_report(report, os.path.join(out_dir, 'report.json'))
    return report


def cmd_synth(spec: SynthSpec, seed: int = config.SEED, out_dir: str = config.OUT_DIR) -> dict:
    """Write source.csv, target.csv and manifest.json for a synthetic task."""
    source, target = gen_synthetic(spec, seed)
    os.makedirs(out_dir, exist_ok=True)
    write_csv(source, os.path.join(out_dir, 'source.csv'))
    write_csv(target, os.path.join(out_dir, 'target.csv'))
    manifest = {
        'spec': spec.to_dict(),
        'seed': int(seed),
        'files': {'source': 'source.csv', 'target': 'target.csv'},
        'feature_columns': list(source.feature_names),
        'label_columns': list(source.label_names),
        'rows': {'source': source.n, 'target': target.n},
    }
    with open(os.path.join(out_dir, 'manifest.json'), 'w', encoding='utf-8') as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    logger.info("Synthetic task written to %s", out_dir)
    return manifest


def synth_spec_from_manifest(path) -> Tuple[SynthSpec, int]:
    with open(path, 'r', encoding='utf-8') as f:
        manifest = json.load(f)
    return SynthSpec.from_dict(manifest['spec']), int(manifest['seed'])


def _final_metrics(params, source: Dataset, target: Dataset, experiment: ExperimentConfig) -> dict:
    """Discrepancies between the learned source and target representations, on an equal-size prefix."""
    n = min(source.n, target.n)
    Zs, _ = forward(params, source.X[:n])
    Zt, pseudo = forward(params, target.X[:n])
    names = sorted({TERM_METRICS[t] for t in ('kgw', 'cod', 'cod_mod')} | {'mmd2'})
    return {name: evaluate_metric(name, Zs, Zt, source.Y[:n], pseudo, experiment.metric).to_dict()
            for name in names}


def _write_embeddings(rows: List[list], params, source: Dataset, path) -> None:
    label_names = list(source.label_names) or [f"y{i + 1}" for i in range(params.output_dim)]
    columns = ['domain'] + label_names + [f"z{i + 1}" for i in range(params.representation_dim)]
    frame = pd.DataFrame(rows, columns=columns)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    frame.to_csv(path, index=False, encoding='utf-8')


def cmd_train(experiment: ExperimentConfig) -> dict:
    """Train on the configured task; writes report.json, checkpoint.json and embeddings.csv."""
    started = time.perf_counter()
    source, target = experiment.load_datasets()
    cfg = experiment.train_config()
    params, history = train(source, target, cfg)

    summary = {
        'epochs': len(history),
        'terms': list(cfg.active_terms()),
        'source_mae': evaluate_mae(params, source),
        'final_loss': history.records[-1].loss if len(history) else None,
    }
    if target.labeled:
        summary['target_mae'] = evaluate_mae(params, target)
    report = build_report(
        'train', experiment.to_dict(),
        metrics=_final_metrics(params, source, target, experiment),
        history=history.to_dict(),
        summary=summary,
        seeds=[experiment.seed],
        timing={'epoch_seconds': history.timings(), 'total_seconds': time.perf_counter() - started},
    )

    out_dir = experiment.out_dir
    write_report(report, os.path.join(out_dir, 'report.json'))
    standardization = {'x': Standardizer.fit(source.X).to_dict(), 'y': Standardizer.fit(source.Y).to_dict()}
    save_checkpoint(os.path.join(out_dir, 'checkpoint.json'), params, experiment.to_dict(),
                    standardization=standardization, seed=experiment.seed)
    _write_embeddings(export_embeddings(params, source, target), params, source,
                      os.path.join(out_dir, 'embeddings.csv'))
    return report


def cmd_gradcheck(name: str, n: int = 6, d: int = 3, seed: int = config.SEED,
                  h: float = config.GRADCHECK_STEP, metric_cfg: Optional[MetricConfig] = None,
                  out_dir: Optional[str] = None) -> dict:
    """Finite-difference check of one metric's gradient on a random batch."""
    if name not in metric_names():
        raise UsageError(f"unknown metric '{name}', expected one of {metric_names()}")
    if n < 2 or d < 1:
        raise UsageError(f"gradcheck needs n >= 2 and d >= 1, got n={n}, d={d}")
    metric_cfg = metric_cfg or MetricConfig()
    rng = np.random.default_rng(seed)
    Zs = rng.standard_normal((n, d))
    Zt = rng.standard_normal((n, d)) + 0.5
    ys = rng.uniform(0.0, 1.0, size=(n, 1))
    yt = rng.uniform(0.0, 1.0, size=(n, 1))
    error = finite_diff_check(name, Zs, Zt, ys, yt, metric_cfg, h=h)
    summary = {
        'metric': name,
        'max_relative_error': error,
        'tolerance': config.GRADCHECK_TOLERANCE,
        'passed': bool(error < config.GRADCHECK_TOLERANCE),
    }
    echo = {'metric': name, 'n': n, 'd': d, 'seed': seed, 'h': h, 'metric_cfg': metric_cfg.to_dict()}
    report = build_report('gradcheck', echo, summary=summary, seeds=[seed])
    if out_dir is not None:
        write_report(report, os.path.join(out_dir, 'report.json'))
    return report


def row_label(terms: Sequence[str]) -> str:
    return '+'.join(terms)


def _run_job(job) -> dict:
    """One training run of a multi-seed command; top-level so worker processes can unpickle it."""
    experiment, terms, seed, lambdas = job
    started = time.perf_counter()
    source, target = experiment.load_datasets(seed)
    if not target.labeled:
        raise DataError("multi-seed evaluation needs target labels")
    changes = {'ablation': tuple(terms)}
    if lambdas is not None:
        changes.update(lambda1=lambdas[0], lambda2=lambdas[1])
    cfg = experiment.train_config(seed, **changes)
    params, history = train(source, target, cfg)
    return {
        'row': row_label(terms) if lambdas is None else f"lambda1={lambdas[0]:g},lambda2={lambdas[1]:g}",
        'terms': list(terms),
        'seed': int(seed),
        'target_mae': evaluate_mae(params, target)['sum'],
        'source_mae': evaluate_mae(params, source)['sum'],
        'final_loss': history.records[-1].loss if len(history) else None,
        'seconds': time.perf_counter() - started,
    }


def _run_jobs(jobs: list, workers: int) -> List[dict]:
    if workers > 1 and len(jobs) > 1:
        logger.info("Running %d jobs on %d worker processes", len(jobs), workers)
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_run_job, jobs))
    return [_run_job(job) for job in jobs]


def _aggregate(results: List[dict], row_order: List[str]) -> Tuple[list, list, dict]:
    """Sort by (row, seed), split off wall-clock values, and reduce each row to median/IQR."""
    results = sorted(results, key=lambda r: (row_order.index(r['row']), r['seed']))
    timing = {f"{r['row']}@{r['seed']}": r.pop('seconds') for r in results}
    aggregate = []
    for row in row_order:
        maes = [r['target_mae'] for r in results if r['row'] == row]
        aggregate.append({'row': row, 'target_mae': median_iqr(maes)})
    return results, aggregate, timing


def cmd_ablate(experiment: ExperimentConfig, seeds: Optional[Sequence[int]] = None,
               rows: Sequence[Tuple[str, ...]] = config.ABLATION_ROWS) -> dict:
    """Every objective combination in `rows` across seeds; writes report.json and ablation.md."""
    seeds = tuple(experiment.seeds if seeds is None else seeds)
    if not seeds:
        raise UsageError("ablate needs at least one seed")
    labels = [row_label(r) for r in rows]
    jobs = [(experiment, tuple(terms), seed, None) for terms in rows for seed in seeds]
    per_seed, aggregate, timing = _aggregate(_run_jobs(jobs, experiment.workers), labels)

    medians = {a['row']: a['target_mae']['median'] for a in aggregate}
    summary = {'ranking': sorted(medians, key=lambda r: (medians[r], labels.index(r)))}
    full, kgw_only, baseline = row_label(('mse', 'kgw', 'cod_mod')), row_label(('mse', 'kgw')), 'mse'
    if {full, kgw_only, baseline} <= set(medians):
        summary['full_at_or_below_kgw'] = bool(medians[full] <= medians[kgw_only])
        summary['full_vs_source_only'] = medians[full] / medians[baseline] if medians[baseline] > 0 else None

    echo = experiment.to_dict()
    echo['ablate'] = {'seeds': list(seeds), 'rows': labels}
    report = build_report('ablate', echo, summary=summary, seeds=seeds, per_seed=per_seed,
                          aggregate=aggregate, timing={'job_seconds': timing})
    write_report(report, os.path.join(experiment.out_dir, 'report.json'))
    if experiment.report_format == 'json+markdown':
        table = markdown_table(
            ['Objective', 'median target MAE', 'IQR', 'seeds'],
            [[a['row'], a['target_mae']['median'], a['target_mae']['iqr'], a['target_mae']['n']] for a in aggregate],
        )
        write_markdown(table, os.path.join(experiment.out_dir, 'ablation.md'))
    return report


def cmd_sweep(experiment: ExperimentConfig, lambda1_grid: Sequence[float] = config.SWEEP_LAMBDA1,
              lambda2_grid: Sequence[float] = config.SWEEP_LAMBDA2,
              seeds: Optional[Sequence[int]] = None) -> dict:
    """lambda1 x lambda2 sensitivity grid of the configured objective."""
    seeds = tuple(experiment.seeds if seeds is None else seeds)
    if not seeds or not lambda1_grid or not lambda2_grid:
        raise UsageError("sweep needs at least one seed and one value per lambda grid")
    terms = experiment.train.ablation
    cells = [(float(l1), float(l2)) for l1 in lambda1_grid for l2 in lambda2_grid]
    labels = [f"lambda1={l1:g},lambda2={l2:g}" for l1, l2 in cells]
    jobs = [(experiment, terms, seed, cell) for cell in cells for seed in seeds]
    per_seed, aggregate, timing = _aggregate(_run_jobs(jobs, experiment.workers), labels)

    best = min(aggregate, key=lambda a: a['target_mae']['median'])
    echo = experiment.to_dict()
    echo['sweep'] = {'seeds': list(seeds), 'lambda1': [float(v) for v in lambda1_grid],
                     'lambda2': [float(v) for v in lambda2_grid]}
    report = build_report('sweep', echo, summary={'best': best['row']}, seeds=seeds,
                          per_seed=per_seed, aggregate=aggregate, timing={'job_seconds': timing})
    write_report(report, os.path.join(experiment.out_dir, 'report.json'))
    if experiment.report_format == 'json+markdown':
        medians = {a['row']: a['target_mae']['median'] for a in aggregate}
        rows = [[f"{l1:g}"] + [medians[f"lambda1={float(l1):g},lambda2={float(l2):g}"] for l2 in lambda2_grid]
                for l1 in lambda1_grid]
        table = markdown_table(['lambda1 \\ lambda2'] + [f"{l2:g}" for l2 in lambda2_grid], rows)
        write_markdown(table, os.path.join(experiment.out_dir, 'sweep.md'))
    return report
