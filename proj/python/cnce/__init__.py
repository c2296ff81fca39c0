"""Python bindings for the cnce estimators.

Models are given as a kind name ("gaussian", "ica", "ring", "lognormal",
"bernoulli") or as a dict such as {"kind": "gaussian", "dim": 3}. Config
arguments take the same dicts as the JSON files read by the cnce tool.
"""

import csv
import io
import json

import numpy as np

from . import _core
from ._core import ConfigError, DomainError, ParameterError, UnsupportedError

__all__ = [
    "ConfigError",
    "DomainError",
    "ParameterError",
    "UnsupportedError",
    "cnce_loss",
    "estimation_error",
    "fit",
    "grad_theta_log_phi",
    "log_phi",
    "run_cli",
    "run_experiment",
    "sample",
    "true_params",
]


def _model(model):
    return json.dumps(model)


def _vec(values):
    return np.ascontiguousarray(np.atleast_1d(np.asarray(values, dtype=float)))


def log_phi(model, theta, u):
    return _core.log_phi(_model(model), _vec(theta), _vec(u))


def grad_theta_log_phi(model, theta, u):
    return _core.grad_theta_log_phi(_model(model), _vec(theta), _vec(u))


def true_params(model, seed):
    return _core.true_params(_model(model), seed)


def sample(model, theta, n, seed):
    return _core.sample(_model(model), _vec(theta), n, seed)


def estimation_error(model, theta_hat, theta_true):
    return _core.estimation_error(_model(model), _vec(theta_hat), _vec(theta_true))


def cnce_loss(model, theta, x, kappa, epsilon, seed, per_dim=False):
    """CNCE loss and gradient with κ noise draws per row of x."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    return _core.cnce_loss(_model(model), _vec(theta), x, kappa, epsilon, seed, per_dim)


def fit(config, x):
    """Fits config["method"] to the rows of x; returns a dict with theta_hat."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    cfg = {"schema": 1, **config}
    out = json.loads(_core.fit(json.dumps(cfg), x))
    out["theta_hat"] = np.asarray(out["theta_hat"], dtype=float)
    return out


def run_experiment(config, jobs=1):
    """Runs an experiment grid in memory; returns one dict per results.csv row."""
    cfg = {"schema": 1, **config}
    text = _core.run_experiment(json.dumps(cfg), jobs)
    return list(csv.DictReader(io.StringIO(text)))


def run_cli(*args):
    """Runs the cnce command line in-process; returns (exit_code, stdout, stderr)."""
    return _core.run_cli([str(a) for a in args])
