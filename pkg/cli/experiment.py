"""
Experiment Config - YAML experiment files with dotted sections
(data.*, metric.*, train.*, output.*, ablate.*) and their validation
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import yaml

import config
from data.dataset import Dataset, load_csv
from data.synthetic import SynthSpec, gen_synthetic
from errors import CODRegError, ConfigError, DataError
from learning.trainer import TrainConfig
from metrics.discrepancy import MetricConfig

logger = logging.getLogger(__name__)

REPORT_FORMATS = ('json', 'json+markdown')
SECTIONS = ('seed', 'data', 'metric', 'train', 'output', 'ablate')


@dataclass(frozen=True)
class CsvSource:
    source: str
    target: str
    labels: tuple
    target_labeled: bool = True

    def to_dict(self) -> dict:
        return {'source': self.source, 'target': self.target,
                'labels': list(self.labels), 'target_labeled': self.target_labeled}


@dataclass(frozen=True)
class ExperimentConfig:
    """One data origin (synthetic XOR csv), metric and training configs, and output settings."""
    train: TrainConfig
    metric: MetricConfig = field(default_factory=MetricConfig)
    synthetic: Optional[SynthSpec] = None
    csv: Optional[CsvSource] = None
    seed: int = config.SEED
    out_dir: str = config.OUT_DIR
    report_format: str = 'json+markdown'
    seeds: tuple = config.ABLATION_SEEDS
    workers: int = config.WORKERS

    def __post_init__(self):
        if (self.synthetic is None) == (self.csv is None):
            raise ConfigError("data must hold exactly one of 'synthetic' or 'csv'", field='data')
        if self.report_format not in REPORT_FORMATS:
            raise ConfigError(f"output.format must be one of {REPORT_FORMATS}, got '{self.report_format}'",
                              field='output.format')
        if not self.seeds:
            raise ConfigError("ablate.seeds must list at least one seed", field='ablate.seeds')
        if self.workers < 1:
            raise ConfigError(f"ablate.workers must be at least 1, got {self.workers}", field='ablate.workers')

    def with_overrides(self, seed: Optional[int] = None, out_dir: Optional[str] = None) -> 'ExperimentConfig':
        """Apply --seed / --out from the command line."""
        updated = self
        if seed is not None:
            updated = replace(updated, seed=int(seed))
        if out_dir is not None:
            updated = replace(updated, out_dir=out_dir)
        return updated

    def train_config(self, seed: Optional[int] = None, **changes) -> TrainConfig:
        return replace(self.train, seed=self.seed if seed is None else int(seed), **changes)

    def load_datasets(self, seed: Optional[int] = None) -> Tuple[Dataset, Dataset]:
        """(source, target) for this experiment; synthetic tasks are drawn with `seed`."""
        if self.synthetic is not None:
            return gen_synthetic(self.synthetic, self.seed if seed is None else seed)
        source = load_csv(self.csv.source, self.csv.labels, domain_tag='source')
        target = load_csv(self.csv.target, self.csv.labels if self.csv.target_labeled else (),
                          domain_tag='target')
        return source, target

    def to_dict(self) -> dict:
        data = {'synthetic': self.synthetic.to_dict()} if self.synthetic else {'csv': self.csv.to_dict()}
        return {
            'seed': self.seed,
            'data': data,
            'metric': self.metric.to_dict(),
            'train': self.train.to_dict(),
            'output': {'dir': self.out_dir, 'format': self.report_format},
            'ablate': {'seeds': list(self.seeds), 'workers': self.workers},
        }

    @classmethod
    def from_dict(cls, raw: dict) -> 'ExperimentConfig':
        if not isinstance(raw, dict):
            raise ConfigError("experiment file must be a mapping of sections", field='')
        unknown = set(raw) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown sections: {sorted(unknown)}", field=sorted(unknown)[0])

        data = _section(raw, 'data', required=True)
        synthetic = csv = None
        if 'synthetic' in data and 'csv' in data:
            raise ConfigError("data holds both 'synthetic' and 'csv'", field='data')
        if 'synthetic' in data:
            synthetic = _build('data.synthetic', SynthSpec.from_dict, data['synthetic'] or {})
        elif 'csv' in data:
            csv = _csv_source(data['csv'] or {})
        else:
            raise ConfigError("missing required field 'data.synthetic' or 'data.csv'", field='data.synthetic')

        train = _section(raw, 'train', required=True)
        if 'epochs' not in train:
            raise ConfigError("missing required field 'train.epochs'", field='train.epochs')
        metric = _build('metric', MetricConfig.from_dict, _section(raw, 'metric'))
        train_cfg = _build('train', lambda d: TrainConfig.from_dict(d, metric_cfg=metric), train)

        output = _section(raw, 'output')
        ablate = _section(raw, 'ablate')
        return cls(
            train=train_cfg,
            metric=metric,
            synthetic=synthetic,
            csv=csv,
            seed=int(raw.get('seed', config.SEED)),
            out_dir=str(output.get('dir', config.OUT_DIR)),
            report_format=output.get('format', 'json+markdown'),
            seeds=tuple(int(s) for s in ablate.get('seeds', config.ABLATION_SEEDS)),
            workers=int(ablate.get('workers', config.WORKERS)),
        )


def _section(raw: dict, name: str, required: bool = False) -> dict:
    if name not in raw or raw[name] is None:
        if required:
            raise ConfigError(f"missing required field '{name}'", field=name)
        return {}
    if not isinstance(raw[name], dict):
        raise ConfigError(f"'{name}' must be a section of key: value pairs", field=name)
    return raw[name]


def _build(field_name: str, factory, data):
    """Run a nested from_dict, re-raising its validation errors as ConfigError on field_name."""
    if not isinstance(data, dict):
        raise ConfigError(f"'{field_name}' must be a section of key: value pairs", field=field_name)
    try:
        return factory(data)
    except ConfigError:
        raise
    except (CODRegError, ValueError, TypeError, KeyError) as e:
        raise ConfigError(f"invalid '{field_name}': {e}", field=field_name) from e


def _csv_source(data: dict) -> CsvSource:
    for key in ('source', 'target', 'labels'):
        if key not in data:
            raise ConfigError(f"missing required field 'data.csv.{key}'", field=f'data.csv.{key}')
    labels = data['labels']
    labels = (labels,) if isinstance(labels, str) else tuple(str(c) for c in labels)
    if not labels:
        raise ConfigError("data.csv.labels must name at least one column", field='data.csv.labels')
    return CsvSource(source=str(data['source']), target=str(data['target']), labels=labels,
                     target_labeled=bool(data.get('target_labeled', True)))


def load_experiment(path) -> ExperimentConfig:
    """Parse and validate an experiment file."""
    if not os.path.exists(path):
        raise DataError(f"experiment file not found: {path}")
    with open(path, 'r', encoding='utf-8') as f:
        try:
            raw = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigError(f"could not parse {path}: {e}", field='') from e
    experiment = ExperimentConfig.from_dict(raw or {})
    logger.info("Loaded experiment %s", path)
    return experiment
