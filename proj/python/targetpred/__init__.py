"""Targeted prediction on top of a Bayesian function-on-scalar regression.

Thin wrappers over the compiled core. Functions that produce structured
results return plain dicts parsed from the core's JSON output.
"""

import json

from . import _core
from ._core import (
    Dataset,
    InputError,
    NumericalError,
    Posterior,
    adaptive_weights,
    apply_functional,
    fit_conjugate,
    gibbs_fosr,
    read_dataset,
    read_posterior,
    sample_conjugate,
    star_round,
    star_transform,
    star_transform_inverse,
)

__all__ = [
    "Dataset",
    "InputError",
    "NumericalError",
    "Posterior",
    "adaptive_weights",
    "apply_functional",
    "fit_conjugate",
    "gibbs_fosr",
    "lambda_path",
    "read_dataset",
    "read_posterior",
    "sample_conjugate",
    "simulate",
    "solve_penalized",
    "star_round",
    "star_transform",
    "star_transform_inverse",
    "target_and_evaluate",
]


def simulate(n=100, p=50, m=200, rsnr=5.0, seed=0):
    """Simulated dataset and its ground truth (dict)."""
    data, truth = _core.simulate(n, p, m, rsnr, seed)
    return data, json.loads(truth)


def solve_penalized(hbar, X, lam, weights, loss="squared"):
    """Adaptive-lasso fit of hbar on the design X (intercept in column 0)."""
    return json.loads(_core.solve_penalized(hbar, X, lam, weights, loss))


def lambda_path(hbar, X, weights, n_lambda=100, ratio=1e-3, loss="squared"):
    """Warm-started path from lambda_max down to ratio * lambda_max, then 0."""
    return json.loads(_core.lambda_path(hbar, X, weights, n_lambda, ratio, loss))


def target_and_evaluate(posterior, data, functional, n_lambda=100, K=10, R=100, eta=0.0, epsilon=0.1, seed=0,
                        loss="squared"):
    """Fit the action path for a functional and score it out of sample."""
    out = _core.target_and_evaluate(posterior, data, functional, n_lambda, K, R, eta, epsilon, seed, loss)
    return json.loads(out)
