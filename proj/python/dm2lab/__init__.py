"""Python front end for the dm2lab core.

Structured results come back as dicts; games, policies and expert bundles
stay native objects.
"""

import json as _json
import os as _os

from . import _dm2lab
from ._dm2lab import (  # noqa: F401
    ConfigError,
    ExpertBundle,
    Game,
    InputError,
    JointPolicy,
    NumericError,
    PreconditionError,
    UnsupportedInputError,
    cotrain_experts,
    ground_metric,
    independent_train,
    joint_action_matching,
    marginal_visitation,
    set_quiet,
    state_visitation,
    task_return,
    tv_distance,
    uniform_policy,
    wasserstein1,
)

__version__ = _dm2lab.__version__

COMMANDS = ("train-experts", "sample-demos", "run", "ablate", "verify", "report")


def make_env(name="grid_meet", **params):
    return _dm2lab.make_env(_json.dumps({"name": name, **params}))


def objectives(game, policy, expert, c=1.0, epsilon=0.0):
    return _json.loads(_dm2lab.objectives(game, policy, expert, c, epsilon))


def certify_nash(game, policy, tolerance=1e-6):
    return _json.loads(_dm2lab.certify_nash_task(game, policy, tolerance))


def theorem2_sweep(game, expert, alphas=(0.1, 1.0, 10.0), betas=(0.1, 1.0, 10.0)):
    return _json.loads(_dm2lab.theorem2_sweep(game, expert, list(alphas), list(betas)))


def check_compatibility(game, targets):
    return _json.loads(_dm2lab.check_compatibility(game, targets))


def sample_demonstrations(game, expert, style, episodes, max_length, seed, with_actions=False):
    return _json.loads(
        _dm2lab.sample_demonstrations(game, expert, style, episodes, max_length, seed, with_actions)
    )


def resolve_config(config):
    """Validated config with every default filled in."""
    return _json.loads(_dm2lab.resolve_config(_json.dumps(config)))


def config_hash(config):
    return _dm2lab.config_hash(_json.dumps(config))


def run(command, config=None, seed=None, out="", jobs=1, inputs=()):
    """Runs one CLI command; returns (run_dir, ok, summary dict)."""
    if command not in COMMANDS:
        raise ValueError(f"unknown command {command!r}")
    run_dir, ok, summary = _dm2lab.run_command(
        command, _json.dumps(config or {}), seed, out, jobs, [_os.fspath(p) for p in inputs]
    )
    return run_dir, ok, _json.loads(summary)
