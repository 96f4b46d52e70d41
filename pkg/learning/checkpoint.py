"""
Checkpoint - JSON tensor dump of trained parameters with the config that produced them

Layout:
    {
      "format": "codreg-checkpoint",
      "version": 1,
      "config": {...},                   # experiment config echo
      "params": {"extractor.0.W": {"shape": [p, h], "data": [...row-major...]}, ...},
      "standardization": {"x": {"mean": [...], "scale": [...]}, "y": {...}},
      "seed": 0
    }

Parameters act on raw covariates and predict labels in original units; the
standardization block records the source statistics that were folded in.

No generator state is stored. Weight init and every epoch's batch permutation
are drawn from np.random.default_rng(seed), so the integer seed reproduces the
whole random stream of a run.
"""
from __future__ import annotations

import json
import logging
import os
from typing import Optional, Tuple

import numpy as np

from errors import DataError
from learning.model import ModelParams

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = 'codreg-checkpoint'
CHECKPOINT_VERSION = 1


def save_checkpoint(path, params: ModelParams, config: dict,
                    standardization: Optional[dict] = None, seed: Optional[int] = None) -> None:
    data = {
        'format': CHECKPOINT_FORMAT,
        'version': CHECKPOINT_VERSION,
        'config': config,
        'params': {
            name: {'shape': list(arr.shape), 'data': arr.ravel().tolist()}
            for name, arr in params.named()
        },
        'standardization': standardization or {},
        'seed': seed,
    }
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(data, f, indent=2, sort_keys=True)
    logger.info("Checkpoint saved: %s (%d tensors)", path, len(data['params']))


def load_checkpoint(path) -> Tuple[ModelParams, dict]:
    """Returns:
        (params, full checkpoint dict)
    """
    if not os.path.exists(path):
        raise DataError(f"checkpoint not found: {path}")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise DataError(f"checkpoint {path} is not valid JSON: {e}") from e
    if data.get('format') != CHECKPOINT_FORMAT:
        raise DataError(f"{path} is not a checkpoint (format={data.get('format')!r})")
    if data.get('version') != CHECKPOINT_VERSION:
        raise DataError(f"unsupported checkpoint version {data.get('version')} in {path}")

    arrays = {}
    for name, entry in data['params'].items():
        flat = np.asarray(entry['data'], dtype=np.float64)
        shape = tuple(entry['shape'])
        if flat.size != int(np.prod(shape)):
            raise DataError(f"tensor {name} in {path} has {flat.size} values for shape {shape}")
        arrays[name] = flat.reshape(shape)
    return ModelParams.from_dict(arrays), data
