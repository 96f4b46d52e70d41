"""
Synthetic Task Generator - builds source/target regression tasks with
conditional shift (x = f(y) moved by a rigid transform) and optional label shift
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

import config
from data.dataset import Dataset
from errors import ConfigError

logger = logging.getLogger(__name__)

CURVES = ('arc', 'spiral', 'poly')


def _curve_arc(y):
    angle = 2.0 * np.pi * y
    return np.column_stack([np.cos(angle), np.sin(angle)])


def _curve_spiral(y):
    radius = 0.5 + y
    angle = 3.0 * np.pi * y
    return np.column_stack([radius * np.cos(angle), radius * np.sin(angle)])


def _curve_poly(y):
    return np.column_stack([y, y ** 2, y ** 3])


_CURVE_FNS = {'arc': _curve_arc, 'spiral': _curve_spiral, 'poly': _curve_poly}
CURVE_DIMS = {'arc': 2, 'spiral': 2, 'poly': 3}


@dataclass(frozen=True)
class SynthSpec:
    """Source/target task: y ~ U[interval], x = f(y) (+ transform for target) + noise.

    Args:
        n: samples per domain
        curve: 'arc' (full circle at angle 2*pi*y), 'spiral', 'poly'
        source_labels / target_labels: label interval (lo, hi) per domain
        rotation: target rotation angle in the first two coordinates (radians)
        translation: target translation vector (length = curve dimension, or empty)
        scale: target scale factor
        noise: stddev of isotropic gaussian noise on x
    """
    n: int = config.SYNTH_N
    curve: str = config.SYNTH_CURVE
    source_labels: tuple = config.SYNTH_SOURCE_LABELS
    target_labels: tuple = config.SYNTH_TARGET_LABELS
    rotation: float = config.SYNTH_ROTATION
    translation: tuple = config.SYNTH_TRANSLATION
    scale: float = config.SYNTH_SCALE
    noise: float = config.SYNTH_NOISE

    def __post_init__(self):
        object.__setattr__(self, 'source_labels', tuple(float(v) for v in self.source_labels))
        object.__setattr__(self, 'target_labels', tuple(float(v) for v in self.target_labels))
        object.__setattr__(self, 'translation', tuple(float(v) for v in self.translation))
        if self.curve not in CURVES:
            raise ConfigError(f"unknown curve '{self.curve}', expected one of {CURVES}", field='data.synthetic.curve')
        if int(self.n) < 1:
            raise ConfigError(f"n must be at least 1, got {self.n}", field='data.synthetic.n')
        for name in ('source_labels', 'target_labels'):
            interval = getattr(self, name)
            if len(interval) != 2 or not interval[0] < interval[1]:
                raise ConfigError(f"{name} must be a nonempty interval (lo, hi), got {interval}",
                                  field=f'data.synthetic.{name}')
        if self.noise < 0:
            raise ConfigError(f"noise must be nonnegative, got {self.noise}", field='data.synthetic.noise')
        if self.scale == 0 or not np.isfinite(self.scale):
            raise ConfigError(f"scale must be finite and nonzero, got {self.scale}", field='data.synthetic.scale')
        dim = CURVE_DIMS[self.curve]
        if self.translation and len(self.translation) != dim:
            raise ConfigError(f"translation must have {dim} entries for curve '{self.curve}'",
                              field='data.synthetic.translation')

    @property
    def dim(self) -> int:
        return CURVE_DIMS[self.curve]

    def transform(self, points: np.ndarray) -> np.ndarray:
        """T(v) = scale * R(rotation) v + translation, rotating the first two coordinates."""
        c, s = np.cos(self.rotation), np.sin(self.rotation)
        out = points.copy()
        out[:, 0] = c * points[:, 0] - s * points[:, 1]
        out[:, 1] = s * points[:, 0] + c * points[:, 1]
        out = self.scale * out
        if self.translation:
            out = out + np.asarray(self.translation)
        return out

    def to_dict(self) -> dict:
        return {
            'n': int(self.n),
            'curve': self.curve,
            'source_labels': list(self.source_labels),
            'target_labels': list(self.target_labels),
            'rotation': float(self.rotation),
            'translation': list(self.translation),
            'scale': float(self.scale),
            'noise': float(self.noise),
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'SynthSpec':
        known = {k: data[k] for k in cls().to_dict() if k in data}
        unknown = set(data) - set(known)
        if unknown:
            raise ConfigError(f"unknown synthetic fields: {sorted(unknown)}", field='data.synthetic')
        if 'n' in known:
            known['n'] = int(known['n'])
        return cls(**known)


def gen_synthetic(spec: SynthSpec, seed: int) -> tuple[Dataset, Dataset]:
    """Generate a (source, target) pair; identical seeds give identical arrays."""
    source_rng, target_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))

    def draw(rng, interval, transform):
        y = rng.uniform(interval[0], interval[1], size=spec.n)
        x = _CURVE_FNS[spec.curve](y)
        if transform:
            x = spec.transform(x)
        x = x + spec.noise * rng.standard_normal(x.shape)
        return x, y[:, None]

    xs, ys = draw(source_rng, spec.source_labels, transform=False)
    xt, yt = draw(target_rng, spec.target_labels, transform=True)
    logger.debug("Generated %s task: n=%d, dim=%d, seed=%d", spec.curve, spec.n, spec.dim, seed)
    source = Dataset(X=xs, Y=ys, domain_tag='source', label_visibility='train-visible')
    target = Dataset(X=xt, Y=yt, domain_tag='target', label_visibility='eval-only')
    return source, target
