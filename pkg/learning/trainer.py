"""
Trainer - the adaptation objective (source MSE + lambda1 * COD_mod + lambda2 * KGW),
mini-batch Adam training with detached target pseudo-labels, and MAE evaluation
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, NamedTuple, Optional, Tuple

import numpy as np

import config
from data.dataset import Dataset, Standardizer
from errors import ConfigError, DataError, ShapeError, TrainingDivergedError
from learning.model import Adam, ModelParams, add_grads, backward, forward, init_params
from metrics.discrepancy import MetricConfig
from metrics.gradients import metric_grad

logger = logging.getLogger(__name__)

TERMS = ('mse', 'kgw', 'cod', 'cod_mod')

# Objective term -> metric name in the discrepancy family
TERM_METRICS = {'kgw': 'kgw2', 'cod': 'cod2', 'cod_mod': 'cod_mod'}

# Terms conditioned on target pseudo-labels (held back during warm-up)
PSEUDO_LABEL_TERMS = ('cod', 'cod_mod')


@dataclass(frozen=True)
class TrainConfig:
    lambda1: float = config.LAMBDA1
    lambda2: float = config.LAMBDA2
    metric_cfg: MetricConfig = field(default_factory=MetricConfig)
    batch_size: int = config.BATCH_SIZE
    epochs: int = config.EPOCHS
    learning_rate: float = config.LEARNING_RATE
    adam_beta1: float = config.ADAM_BETA1
    adam_beta2: float = config.ADAM_BETA2
    adam_eps: float = config.ADAM_EPS
    seed: int = config.SEED
    ablation: tuple = config.ABLATION
    warmup_epochs: int = config.WARMUP_EPOCHS
    hidden_sizes: tuple = config.HIDDEN_SIZES
    divergence_limit: float = config.DIVERGENCE_LIMIT

    def __post_init__(self):
        object.__setattr__(self, 'ablation', tuple(self.ablation))
        object.__setattr__(self, 'hidden_sizes', tuple(int(h) for h in self.hidden_sizes))
        for name in ('lambda1', 'lambda2'):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative, got {getattr(self, name)}", field=f'train.{name}')
        if self.batch_size < 4:
            raise ConfigError(f"batch_size must be at least 4, got {self.batch_size}", field='train.batch_size')
        if self.epochs < 0:
            raise ConfigError(f"epochs must be nonnegative, got {self.epochs}", field='train.epochs')
        if self.warmup_epochs < 0:
            raise ConfigError(f"warmup_epochs must be nonnegative, got {self.warmup_epochs}",
                              field='train.warmup_epochs')
        unknown = [t for t in self.ablation if t not in TERMS]
        if unknown or not self.ablation:
            raise ConfigError(f"ablation must be a nonempty subset of {TERMS}, got {self.ablation}",
                              field='train.ablation')
        if any(h < 1 for h in self.hidden_sizes):
            raise ConfigError(f"hidden sizes must be positive, got {self.hidden_sizes}", field='train.hidden_sizes')

    def weight(self, term: str) -> float:
        if term not in self.ablation:
            return 0.0
        if term == 'mse':
            return 1.0
        return self.lambda2 if term == 'kgw' else self.lambda1

    def active_terms(self, epoch: Optional[int] = None) -> Tuple[str, ...]:
        """Terms that enter the loss: enabled, nonzero weight, and past warm-up for pseudo-label terms."""
        active = []
        for term in TERMS:
            if self.weight(term) == 0.0:
                continue
            if term in PSEUDO_LABEL_TERMS and epoch is not None and epoch < self.warmup_epochs:
                continue
            active.append(term)
        return tuple(active)

    def to_dict(self) -> dict:
        return {
            'lambda1': self.lambda1,
            'lambda2': self.lambda2,
            'batch_size': self.batch_size,
            'epochs': self.epochs,
            'learning_rate': self.learning_rate,
            'adam_beta1': self.adam_beta1,
            'adam_beta2': self.adam_beta2,
            'adam_eps': self.adam_eps,
            'seed': self.seed,
            'ablation': list(self.ablation),
            'warmup_epochs': self.warmup_epochs,
            'hidden_sizes': list(self.hidden_sizes),
            'divergence_limit': self.divergence_limit,
        }

    @classmethod
    def from_dict(cls, data: dict, metric_cfg: Optional[MetricConfig] = None) -> 'TrainConfig':
        defaults = cls()
        known = set(defaults.to_dict())
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown train fields: {sorted(unknown)}", field='train')
        values = {k: data.get(k, getattr(defaults, k)) for k in known}
        for k in ('batch_size', 'epochs', 'seed', 'warmup_epochs'):
            values[k] = int(values[k])
        for k in ('lambda1', 'lambda2', 'learning_rate', 'adam_beta1', 'adam_beta2', 'adam_eps', 'divergence_limit'):
            values[k] = float(values[k])
        return cls(metric_cfg=metric_cfg or MetricConfig(), **values)


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    terms: Dict[str, float]
    metrics: Dict[str, float]
    source_mse: float
    target_mae: Dict[str, object]
    wall_clock: float

    def to_dict(self) -> dict:
        return {
            'epoch': self.epoch,
            'loss': self.loss,
            'terms': dict(self.terms),
            'metrics': dict(self.metrics),
            'source_mse': self.source_mse,
            'target_mae': dict(self.target_mae),
        }


@dataclass
class TrainHistory:
    records: List[EpochRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def column(self, key: str) -> List[float]:
        return [getattr(r, key) for r in self.records]

    def to_dict(self) -> List[dict]:
        """Per-epoch records without wall-clock values (see timings())."""
        return [r.to_dict() for r in self.records]

    def timings(self) -> List[float]:
        return [r.wall_clock for r in self.records]


class Objective(NamedTuple):
    loss: float
    components: Dict[str, float]
    grads: Dict[str, np.ndarray]
    details: Dict[str, object]


def source_mse(yhat, y) -> float:
    """(1/n) sum_i ||yhat_i - y_i||^2"""
    yhat = np.asarray(yhat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if yhat.shape != y.shape:
        raise ShapeError(f"prediction shape {yhat.shape} differs from label shape {y.shape}")
    return float(np.sum((yhat - y) ** 2) / y.shape[0])


def objective(params: ModelParams, source_batch: Dataset, target_batch: Dataset,
              cfg: TrainConfig, epoch: Optional[int] = None) -> Objective:
    """Loss, its weighted components and the parameter gradients on one batch pair.

    Target labels are never read: the target conditioning values are the
    current model's predictions, detached from the graph.
    """
    n = source_batch.n
    if target_batch.n != n:
        raise ShapeError(f"source and target batches must have equal size, got {n} and {target_batch.n}")
    terms = cfg.active_terms(epoch)

    Zs, yhat_s, cache_s = forward(params, source_batch.X, return_cache=True)
    Zt, yhat_t, cache_t = forward(params, target_batch.X, return_cache=True)
    pseudo = yhat_t.copy()
    ys = source_batch.Y

    components: Dict[str, float] = {}
    raw: Dict[str, dict] = {}
    d_yhat_s = None
    dZs = np.zeros_like(Zs)
    dZt = np.zeros_like(Zt)

    if 'mse' in terms:
        components['mse'] = source_mse(yhat_s, ys)
        d_yhat_s = 2.0 * (yhat_s - ys) / n

    for term in terms:
        if term == 'mse':
            continue
        weight = cfg.weight(term)
        value, grads = metric_grad(TERM_METRICS[term], Zs, Zt, ys, pseudo, cfg.metric_cfg, strict=False)
        components[term] = weight * value.total
        raw[term] = value.to_dict()
        dZs += weight * grads.dZs
        dZt += weight * grads.dZt

    loss = float(sum(components.values()))
    if not np.isfinite(loss) or loss > cfg.divergence_limit:
        raise TrainingDivergedError(f"loss {loss:.4g} is nonfinite or above {cfg.divergence_limit:g}",
                                    epoch=epoch, loss=loss)

    grads_s = backward(params, cache_s, d_yhat_s, dZs)
    if terms == ('mse',):
        param_grads = grads_s
    else:
        param_grads = add_grads(grads_s, backward(params, cache_t, None, dZt))
    details = {'raw': raw, 'pseudo_labels': pseudo, 'Zs': Zs, 'Zt': Zt, 'source_mse': source_mse(yhat_s, ys)}
    return Objective(loss=loss, components=components, grads=param_grads, details=details)


def fold_standardization(params: ModelParams, x_scaler: Standardizer, y_scaler: Standardizer) -> ModelParams:
    """Absorb input standardization into the first layer and label de-standardization into the predictor.

    The returned parameters act on raw covariates and predict labels in their original units.
    """
    arrays = {k: v.copy() for k, v in params.named()}
    first = "extractor.0" if params.extractor else "predictor"
    W = arrays[f"{first}.W"]
    arrays[f"{first}.b"] = arrays[f"{first}.b"] - (x_scaler.mean / x_scaler.scale) @ W
    arrays[f"{first}.W"] = W / x_scaler.scale[:, None]
    arrays["predictor.b"] = arrays["predictor.b"] * y_scaler.scale + y_scaler.mean
    arrays["predictor.W"] = arrays["predictor.W"] * y_scaler.scale[None, :]
    return ModelParams.from_dict(arrays)


def evaluate_mae(params: ModelParams, dataset: Dataset) -> Dict[str, object]:
    """Per-output mean absolute error and their sum."""
    if not dataset.labeled:
        raise DataError("MAE needs a labeled dataset")
    _, yhat = forward(params, dataset.X)
    per_output = np.mean(np.abs(yhat - dataset.Y), axis=0)
    return {'per_output': [float(v) for v in per_output], 'sum': float(np.sum(per_output))}


def _check_datasets(source: Dataset, target: Dataset, cfg: TrainConfig) -> None:
    if not source.labeled:
        raise DataError("source dataset must be labeled")
    if source.label_visibility != 'train-visible':
        raise DataError("source labels must be train-visible")
    if target.labeled and target.label_visibility != 'eval-only':
        raise DataError("target labels must be eval-only during training")
    if source.X.shape[1] != target.X.shape[1]:
        raise DataError(f"feature counts differ: source {source.X.shape[1]}, target {target.X.shape[1]}")
    if min(source.n, target.n) < cfg.batch_size:
        raise DataError(f"batch_size {cfg.batch_size} exceeds the smaller domain ({min(source.n, target.n)} rows)")


def train(source: Dataset, target: Dataset, cfg: TrainConfig,
          on_epoch: Optional[Callable[[EpochRecord], None]] = None) -> Tuple[ModelParams, TrainHistory]:
    """Adam on shuffled equal-size source/target mini-batches; deterministic given cfg.seed.

    Covariates are standardized with source statistics, labels likewise;
    the returned parameters have both folded in.
    """
    _check_datasets(source, target, cfg)
    rng = np.random.default_rng(cfg.seed)
    x_scaler = Standardizer.fit(source.X)
    y_scaler = Standardizer.fit(source.Y)
    src = Dataset(X=x_scaler.transform(source.X), Y=y_scaler.transform(source.Y))
    tgt = Dataset(X=x_scaler.transform(target.X), Y=None, domain_tag='target', label_visibility='eval-only')

    params = init_params(source.X.shape[1], cfg.hidden_sizes, source.Y.shape[1], rng)
    optimizer = Adam(params, lr=cfg.learning_rate, beta1=cfg.adam_beta1, beta2=cfg.adam_beta2, eps=cfg.adam_eps)
    history = TrainHistory()
    n = cfg.batch_size
    steps = min(src.n, tgt.n) // n
    logger.info("Training %d epochs x %d steps, terms=%s, lambda1=%g, lambda2=%g",
                cfg.epochs, steps, cfg.active_terms(), cfg.lambda1, cfg.lambda2)

    for epoch in range(cfg.epochs):
        started = time.perf_counter()
        perm_s = rng.permutation(src.n)
        perm_t = rng.permutation(tgt.n)
        sums: Dict[str, float] = {}
        metric_sums: Dict[str, float] = {}
        loss_sum = 0.0
        mse_sum = 0.0
        for step in range(steps):
            batch_s = src.subset(perm_s[step * n:(step + 1) * n])
            batch_t = tgt.subset(perm_t[step * n:(step + 1) * n])
            try:
                result = objective(params, batch_s, batch_t, cfg, epoch=epoch)
            except TrainingDivergedError as e:
                raise TrainingDivergedError(f"training diverged at epoch {epoch}, step {step}: {e}",
                                            epoch=epoch, step=step, loss=e.loss) from e
            params = optimizer.step(params, result.grads)
            loss_sum += result.loss
            mse_sum += result.details['source_mse']
            for k, v in result.components.items():
                sums[k] = sums.get(k, 0.0) + v
            for term, value in result.details['raw'].items():
                for block, v in value['components'].items():
                    key = f"{term}.{block}"
                    metric_sums[key] = metric_sums.get(key, 0.0) + v
            logger.debug("epoch %d step %d loss %.6f", epoch, step, result.loss)

        fitted = fold_standardization(params, x_scaler, y_scaler)
        mae = evaluate_mae(fitted, target) if target.labeled else {'per_output': [], 'sum': 0.0}
        record = EpochRecord(
            epoch=epoch,
            loss=loss_sum / steps,
            terms={k: v / steps for k, v in sums.items()},
            metrics={k: v / steps for k, v in metric_sums.items()},
            source_mse=mse_sum / steps,
            target_mae=mae,
            wall_clock=time.perf_counter() - started,
        )
        history.records.append(record)
        logger.info("epoch %3d  loss %.5f  %s  target MAE %.4f", epoch, record.loss,
                    "  ".join(f"{k} {v:.4f}" for k, v in record.terms.items()), mae['sum'])
        if on_epoch is not None:
            on_epoch(record)

    return fold_standardization(params, x_scaler, y_scaler), history


def export_embeddings(params: ModelParams, source: Dataset, target: Dataset) -> List[list]:
    """Rows (domain, y_1..y_m, z_1..z_d) for both domains, source first."""
    rows = []
    for dataset, tag in ((source, 'source'), (target, 'target')):
        Z, _ = forward(params, dataset.X)
        Y = dataset.Y if dataset.labeled else np.full((dataset.n, params.output_dim), np.nan)
        for y, z in zip(Y, Z):
            rows.append([tag] + [float(v) for v in y] + [float(v) for v in z])
    return rows
