"""Python access to the blockcov estimators."""

import json

from . import _core
from ._core import (
    ConfigError,
    DataError,
    NumericalError,
    gmv_weights,
    paired_sign_test,
    portfolio_risk,
    rand_index,
    sample_model,
    threshold,
)

__all__ = [
    "ConfigError",
    "DataError",
    "NumericalError",
    "estimate",
    "gmv_weights",
    "paired_sign_test",
    "portfolio_risk",
    "rand_index",
    "sample_model",
    "simulate",
    "threshold",
]


def estimate(returns, method, K=None, seed=None, classes=None, config=None):
    """Estimate the covariance of a p x T return matrix.

    `config` takes the same keys as the CLI JSON config.
    """
    out = _core.estimate(returns, method, K, seed, classes, json.dumps(config) if config else "")
    out["hyperparameters"] = json.loads(out.pop("hyperparameters_json"))
    return out


def simulate(config=None, seed=0, threads=1):
    """Run a simulation study and return the report as a dict."""
    return json.loads(_core.simulate(json.dumps(config) if config else "", seed, threads))
