"""
Reports - schema-versioned JSON run reports, median/IQR aggregation and
markdown tables for the ablation and sweep commands
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from typing import Dict, Iterable, List, Optional, Sequence

import jsonschema
import numpy as np

import config
from errors import CODRegError, NumericalError

logger = logging.getLogger(__name__)

SCHEMA_PATH = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))),
                           'schemas', 'report.schema.json')

# The only key whose contents may differ between identical runs
VOLATILE_KEY = 'timing'


def run_id(config_echo: dict) -> str:
    """12 hex chars of sha1 over the canonical JSON of a config echo."""
    canonical = json.dumps(config_echo, sort_keys=True, separators=(',', ':'))
    return hashlib.sha1(canonical.encode('utf-8')).hexdigest()[:12]


def median_iqr(values: Iterable[float]) -> Dict[str, float]:
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        raise NumericalError("cannot aggregate an empty list of results")
    q1, median, q3 = np.percentile(arr, [25, 50, 75])
    return {'median': float(median), 'q1': float(q1), 'q3': float(q3), 'iqr': float(q3 - q1), 'n': int(arr.size)}


def build_report(command: str, config_echo: dict, metrics: Optional[dict] = None,
                 history: Optional[list] = None, summary: Optional[dict] = None,
                 seeds: Sequence[int] = (), per_seed: Optional[list] = None,
                 aggregate: Optional[list] = None, timing: Optional[dict] = None) -> dict:
    return {
        'schema_version': config.REPORT_SCHEMA_VERSION,
        'command': command,
        'run_id': run_id(config_echo),
        'config': config_echo,
        'metrics': metrics or {},
        'history': history or [],
        'summary': summary or {},
        'seeds': [int(s) for s in seeds],
        'per_seed': per_seed or [],
        'aggregate': aggregate or [],
        VOLATILE_KEY: timing or {},
    }


def _check_finite(value, path: str = 'report') -> None:
    if isinstance(value, dict):
        for k, v in value.items():
            _check_finite(v, f"{path}.{k}")
    elif isinstance(value, (list, tuple)):
        for i, v in enumerate(value):
            _check_finite(v, f"{path}[{i}]")
    elif isinstance(value, float) and not math.isfinite(value):
        raise NumericalError(f"nonfinite number at {path}")


def load_schema() -> dict:
    with open(SCHEMA_PATH, 'r', encoding='utf-8') as f:
        return json.load(f)


def validate_report(report: dict) -> None:
    """Every number finite, and the shape matches schemas/report.schema.json."""
    _check_finite(report)
    try:
        jsonschema.validate(instance=report, schema=load_schema())
    except jsonschema.ValidationError as e:
        path = '.'.join(str(p) for p in e.absolute_path) or '<root>'
        raise CODRegError(f"report does not match its schema at {path}: {e.message}") from e


def stable_json(report: dict) -> str:
    """Canonical JSON of a report without its volatile key."""
    stable = {k: v for k, v in report.items() if k != VOLATILE_KEY}
    return json.dumps(stable, sort_keys=True, indent=2)


def write_report(report: dict, path) -> None:
    validate_report(report)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(report, f, sort_keys=True, indent=2)
        f.write('\n')
    logger.info("Report written: %s", path)


def markdown_table(headers: Sequence[str], rows: List[Sequence]) -> str:
    def cell(v):
        return f"{v:.4f}" if isinstance(v, float) else str(v)

    lines = ['| ' + ' | '.join(headers) + ' |', '|' + '|'.join('---' for _ in headers) + '|']
    lines += ['| ' + ' | '.join(cell(v) for v in row) + ' |' for row in rows]
    return '\n'.join(lines) + '\n'


def write_markdown(text: str, path) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(text)
    logger.info("Table written: %s", path)
