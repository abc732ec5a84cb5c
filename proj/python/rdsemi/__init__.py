"""Semiparametric two-stage regression-discontinuity estimator."""

import json

import numpy as np

from ._rdsemi import RdsemiError, gen_dataset, local_estimate, true_tau
from ._rdsemi import _estimate_json, _simulate_json

__all__ = ["RdsemiError", "estimate", "simulate", "gen_dataset", "local_estimate", "true_tau"]


def _vector(values):
    return np.ascontiguousarray(values, dtype=np.float64).ravel()


def estimate(x, w, y, cutoff=0.0, design="fuzzy", *, q=1, m=5, knots=None, vc="reml", alpha=0.05,
             optimize_g=True):
    """Effect at the cutoff; returns the same document as `rdsemi estimate --json`."""
    text = _estimate_json(_vector(x), _vector(w), _vector(y), float(cutoff), design, q, m, knots, vc, alpha,
                          optimize_g)
    return json.loads(text)


def simulate(model="M1", scenario="1", *, n=500, reps=1000, seed=0, methods=("pl", "ik"), threads=0, q=1, m=5,
             vc="reml"):
    """Monte Carlo report with RMSE, bias, coverage and interval length per method."""
    return json.loads(_simulate_json(model, str(scenario), n, reps, seed, list(methods), threads, q, m, vc))
