"""Causal autoregressive flows: direction discovery, interventions and counterfactuals.

Variable indices are 0-based here, as in the C++ library; the command-line
tool uses 1-based indices.
"""

import json
from importlib import resources

import numpy as np

from . import _core
from ._core import (
    CareflError,
    ConfigError,
    DataError,
    FlowModel,
    InfeasibleError,
    NumericError,
    ParseError,
    ShapeError,
    StateError,
    TrainingDiverged,
)

__all__ = [
    "CareflError",
    "ConfigError",
    "DataError",
    "FlowModel",
    "InfeasibleError",
    "NumericError",
    "ParseError",
    "ShapeError",
    "StateError",
    "TrainingDiverged",
    "counterfactual",
    "direction_report_schema",
    "fit",
    "generate",
    "group_direction",
    "intervene",
    "likelihood_ratio",
    "load_model",
    "ordering_search",
    "run_cli",
]


def _config(config, **overrides):
    merged = dict(config or {})
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return json.dumps(merged)


def _matrix(data):
    return np.ascontiguousarray(np.asarray(data, dtype=np.float64))


def generate(family, n=500, seed=0, coeff=1.0, noise="laplace", flip=False):
    """Synthetic dataset; returns (data, column names, ground-truth dict)."""
    data, names, truth = _core.generate(family, n, seed, coeff, noise, flip)
    return data, names, json.loads(truth)


def likelihood_ratio(data, config=None, seed=None):
    """Bivariate direction test; returns the DirectionReport as a dict."""
    return json.loads(_core.likelihood_ratio_bivariate(_matrix(data), _config(config, seed=seed)))


def group_direction(x1, x2, config=None, seed=None):
    return json.loads(_core.group_direction(_matrix(x1), _matrix(x2), _config(config, seed=seed)))


def ordering_search(data, config=None, seed=None, max_d=5):
    return json.loads(_core.ordering_search(_matrix(data), _config(config, seed=seed), max_d))


def fit(data, ordering=None, config=None, seed=None):
    """Fits a flow for a causal sequence (causes first); returns (model, info)."""
    model, info = _core.fit(_matrix(data), list(ordering or []), _config(config, seed=seed))
    return model, json.loads(info)


def load_model(text):
    return FlowModel.from_json(text)


def intervene(model, target, value, n_samples=1000, mode="sequential", seed=0):
    """Samples of do(x_target = value); returns (samples, mean, std_error)."""
    samples, mean, se = model.intervene(target, value, n_samples, mode, seed)
    return samples, np.asarray(mean), np.asarray(se)


def counterfactual(model, x_obs, target, value):
    return np.asarray(model.counterfactual(list(map(float, x_obs)), target, value))


def run_cli(*args):
    """Runs the command-line tool in-process; returns (exit code, stdout, stderr)."""
    return _core.run_cli([str(a) for a in args])


def direction_report_schema():
    return json.loads(resources.files(__name__).joinpath("direction_report.schema.json").read_text())
