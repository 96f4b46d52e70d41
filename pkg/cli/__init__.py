"""
CLI package initializer: argparse surface, logging setup and the exit-status
mapping shared by every subcommand.

    python app.py metric SOURCE.csv TARGET.csv --labels y --metrics cod2 mmd2
    python app.py synth --curve arc --n 500 --out runs/task
    python app.py train --config configs/reference_rotation.yaml
    python app.py gradcheck cod_mod --n 8 --d 2
    python app.py ablate --config configs/reference_rotation.yaml --seeds 0 1 2 3 4
    python app.py sweep --config configs/smoke.yaml
"""
import argparse
import logging
import sys

import config
from errors import UsageError, exit_status_for

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s [%(levelname)s] %(name)s: %(message)s'


def configure_logging(level: str = config.LOG_LEVEL) -> None:
    numeric = getattr(logging, str(level).upper(), None)
    if not isinstance(numeric, int):
        raise UsageError(f"unknown log level '{level}'")
    logging.basicConfig(level=numeric, format=LOG_FORMAT, force=True)


def _bandwidth(value: str):
    if value.lower() == 'median':
        return None
    try:
        return float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bandwidth must be a number or 'median', got '{value}'")


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--seed', type=int, default=None, help=f'Random seed (default: {config.SEED})')
    common.add_argument('--out', type=str, default=None, help=f'Output directory (default: {config.OUT_DIR})')
    common.add_argument('--config', type=str, default=None, help='Experiment file (YAML)')
    common.add_argument('--log-level', type=str, default=config.LOG_LEVEL, help='DEBUG, INFO, WARNING, ERROR')
    return common


def _metric_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--x-kernel', default=config.X_KERNEL, help='gaussian, linear or delta')
    parser.add_argument('--x-bandwidth', type=_bandwidth, default=config.X_BANDWIDTH, help="number or 'median'")
    parser.add_argument('--y-kernel', default=config.Y_KERNEL, help='gaussian, linear or delta')
    parser.add_argument('--y-bandwidth', type=_bandwidth, default=config.Y_BANDWIDTH, help="number or 'median'")
    parser.add_argument('--delta-tolerance', type=float, default=config.DELTA_TOLERANCE)
    parser.add_argument('--epsilon', type=float, default=config.EPSILON)
    parser.add_argument('--ridge-lambda', type=float, default=config.RIDGE_LAMBDA)
    parser.add_argument('--mod-variant', default=config.MOD_VARIANT, help='corrected or printed')


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(
        prog='codreg',
        description='Conditional operator discrepancy metrics and domain adaptation regression',
    )
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('metric', parents=[common], help='Discrepancies between two labelled CSV files')
    p.add_argument('source', help='Source CSV')
    p.add_argument('target', help='Target CSV')
    p.add_argument('--labels', nargs='+', required=True, help='Label column name(s)')
    p.add_argument('--metrics', nargs='+', default=['cod2'], help='Metric names')
    _metric_flags(p)

    p = sub.add_parser('synth', parents=[common], help='Generate a synthetic source/target task')
    p.add_argument('--manifest', default=None, help='Regenerate from an existing manifest.json')
    p.add_argument('--n', type=int, default=config.SYNTH_N)
    p.add_argument('--curve', default=config.SYNTH_CURVE, help='arc, spiral or poly')
    p.add_argument('--source-labels', type=float, nargs=2, default=config.SYNTH_SOURCE_LABELS)
    p.add_argument('--target-labels', type=float, nargs=2, default=config.SYNTH_TARGET_LABELS)
    p.add_argument('--rotation', type=float, default=config.SYNTH_ROTATION, help='Radians')
    p.add_argument('--translation', type=float, nargs='*', default=None)
    p.add_argument('--scale', type=float, default=config.SYNTH_SCALE)
    p.add_argument('--noise', type=float, default=config.SYNTH_NOISE)

    sub.add_parser('train', parents=[common], help='Train per an experiment file')

    p = sub.add_parser('gradcheck', parents=[common], help='Finite-difference check of a metric gradient')
    p.add_argument('metric', help='Metric name')
    p.add_argument('--n', type=int, default=6)
    p.add_argument('--d', type=int, default=3)
    p.add_argument('--h', type=float, default=config.GRADCHECK_STEP)
    _metric_flags(p)

    p = sub.add_parser('ablate', parents=[common], help='Objective ablation across seeds')
    p.add_argument('--seeds', type=int, nargs='+', default=None)
    p.add_argument('--workers', type=int, default=None)

    p = sub.add_parser('sweep', parents=[common], help='lambda1 x lambda2 sensitivity grid')
    p.add_argument('--seeds', type=int, nargs='+', default=None)
    p.add_argument('--lambda1', type=float, nargs='+', default=list(config.SWEEP_LAMBDA1))
    p.add_argument('--lambda2', type=float, nargs='+', default=list(config.SWEEP_LAMBDA2))
    p.add_argument('--workers', type=int, default=None)
    return parser


def _metric_cfg(args):
    from metrics.discrepancy import MetricConfig
    from metrics.numerics import KernelSpec

    try:
        return MetricConfig(
            x_kernel=KernelSpec(args.x_kernel, args.x_bandwidth, args.delta_tolerance),
            y_kernel=KernelSpec(args.y_kernel, args.y_bandwidth, args.delta_tolerance),
            epsilon=args.epsilon,
            ridge_lambda=args.ridge_lambda,
            mod_variant=args.mod_variant,
        )
    except ValueError as e:
        raise UsageError(f"invalid metric flags: {e}") from e


def _experiment(args):
    from dataclasses import replace
    from cli.experiment import load_experiment

    if not args.config:
        raise UsageError(f"'{args.command}' needs --config <experiment.yaml>")
    experiment = load_experiment(args.config).with_overrides(seed=args.seed, out_dir=args.out)
    workers = getattr(args, 'workers', None)
    if workers is not None:
        if workers < 1:
            raise UsageError(f"--workers must be at least 1, got {workers}")
        experiment = replace(experiment, workers=workers)
    return experiment


def _print_metrics(report: dict) -> None:
    for name, value in report['metrics'].items():
        parts = ', '.join(f"{k}={v:.6g}" for k, v in value['components'].items())
        print(f"✓ {name} = {value['total']:.6g} ({parts})")


def run(args) -> int:
    from cli import commands
    from data.synthetic import SynthSpec

    seed = config.SEED if args.seed is None else args.seed
    out_dir = config.OUT_DIR if args.out is None else args.out

    if args.command == 'metric':
        report = commands.cmd_metric(args.source, args.target, args.metrics, args.labels,
                                     metric_cfg=_metric_cfg(args), seed=seed, out_dir=out_dir)
        _print_metrics(report)
    elif args.command == 'synth':
        if args.manifest:
            spec, manifest_seed = commands.synth_spec_from_manifest(args.manifest)
            seed = manifest_seed if args.seed is None else seed
        else:
            translation = args.translation if args.translation is not None else config.SYNTH_TRANSLATION
            spec = SynthSpec(n=args.n, curve=args.curve, source_labels=tuple(args.source_labels),
                             target_labels=tuple(args.target_labels), rotation=args.rotation,
                             translation=tuple(translation), scale=args.scale, noise=args.noise)
        manifest = commands.cmd_synth(spec, seed=seed, out_dir=out_dir)
        print(f"✓ Wrote {manifest['rows']['source']} + {manifest['rows']['target']} rows to {out_dir}")
    elif args.command == 'train':
        experiment = _experiment(args)
        report = commands.cmd_train(experiment)
        mae = report['summary'].get('target_mae')
        if mae is not None:
            print(f"✓ Trained {report['summary']['epochs']} epochs, target MAE {mae['sum']:.4f}")
        else:
            print(f"✓ Trained {report['summary']['epochs']} epochs")
        print(f"  Report: {experiment.out_dir}")
    elif args.command == 'gradcheck':
        report = commands.cmd_gradcheck(args.metric, n=args.n, d=args.d, seed=seed, h=args.h,
                                        metric_cfg=_metric_cfg(args), out_dir=args.out)
        s = report['summary']
        if not s['passed']:
            print(f"✗ {s['metric']}: max relative error {s['max_relative_error']:.3e} >= {s['tolerance']:g}")
            return 4
        print(f"✓ {s['metric']}: max relative error {s['max_relative_error']:.3e} < {s['tolerance']:g}")
    elif args.command == 'ablate':
        report = commands.cmd_ablate(_experiment(args), seeds=args.seeds)
        for row in report['aggregate']:
            stats = row['target_mae']
            print(f"  {row['row']:<20} median MAE {stats['median']:.4f}  IQR {stats['iqr']:.4f}")
        if report['summary'].get('full_at_or_below_kgw') is False:
            print("⚠ Full objective ended above the KGW-only row")
        print("✓ Ablation complete")
    elif args.command == 'sweep':
        report = commands.cmd_sweep(_experiment(args), lambda1_grid=args.lambda1,
                                    lambda2_grid=args.lambda2, seeds=args.seeds)
        print(f"✓ Sweep complete, best cell {report['summary']['best']}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        configure_logging(args.log_level)
        return run(args)
    except KeyboardInterrupt:
        print("✗ Interrupted")
        return 130
    except Exception as e:
        status = exit_status_for(e)
        if status == 1:
            logger.exception("Unexpected failure")
        print(f"✗ {type(e).__name__}: {e}", file=sys.stderr)
        return status
