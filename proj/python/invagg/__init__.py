"""Python bindings for the invagg simulator.

Configs, run results and check reports cross the boundary as JSON and come
back as dicts.
"""

import json

from . import _core
from ._core import (
    ValidationError,
    aggregator_kinds,
    and_mask,
    appendix_d1_client_data,
    fedavg,
    invariant_aggregate,
    preset_names,
    sign_consistency,
    theorem1_alpha,
    theorem2_bound,
    trim_count,
    trimmed_mean,
)

__all__ = [
    "ValidationError",
    "aggregate",
    "aggregator_kinds",
    "and_mask",
    "appendix_d1_client_data",
    "check_corollary1",
    "check_theorem1",
    "check_theorem2",
    "check_theorem3",
    "fedavg",
    "invariant_aggregate",
    "preset",
    "preset_names",
    "resolve_config",
    "run",
    "sign_consistency",
    "theorem1_alpha",
    "theorem2_bound",
    "trim_count",
    "trimmed_mean",
]


def aggregate(gradients, config=None, client_ids=None, sample_counts=None, default_byzantine=0, seed=0):
    """Returns (value, mask); mask is None for the unmasked aggregators."""
    return _core.aggregate(gradients, json.dumps(config or {}), client_ids, sample_counts,
                           default_byzantine, seed)


def preset(name):
    return json.loads(_core.preset(name))


def resolve_config(config=None, overrides=()):
    """Fills defaults, applies "dotted.path=value" overrides, validates."""
    return json.loads(_core.resolve_config(json.dumps(config or {}), list(overrides)))


def run(config=None, overrides=()):
    resolved = _core.resolve_config(json.dumps(config or {}), list(overrides))
    return json.loads(_core.run_experiment(resolved))


def check_theorem1(n, eta, delta, c, trials=10000, seed=1, mean=0.0, stddev=1.0, dist="normal"):
    return json.loads(_core.check_theorem1(n, eta, delta, c, trials, seed, mean, stddev, dist))


def check_theorem2(phi, n, n_prime, tau_count, trials=10000, seed=1, substitute_p=None):
    return json.loads(_core.check_theorem2(phi, n, n_prime, tau_count, trials, seed, substitute_p))


def check_theorem3(mu, sigma, w, k, samples=1000000, seed=1):
    return json.loads(_core.check_theorem3(mu, sigma, w, k, samples, seed))


def check_corollary1(w, samples=1000000, seed=1, scenario_seed=1):
    return json.loads(_core.check_corollary1(w, samples, seed, scenario_seed))
