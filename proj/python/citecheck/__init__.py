"""Python interface to the citation verification core."""

import json

from . import _core
from ._core import (
    ConfigError,
    ContractError,
    SchemaError,
    UndefinedResultError,
    acc_pass_at_3,
    aggregate_consensus,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "SchemaError",
    "UndefinedResultError",
    "ablation",
    "acc_pass_at_3",
    "aggregate_consensus",
    "decide",
    "parse",
    "token_economy",
    "verify",
]


def parse(path, config="", seed=0):
    """Parse one document; returns the citation graph as a dict."""
    return json.loads(_core.parse_json(str(path), str(config), seed))


def verify(inputs, config="", out_dir="", seed=0):
    """Verify every citation in `inputs`; returns the summary dict."""
    return json.loads(_core.verify_json([str(p) for p in inputs], str(config), str(out_dir), seed))


def decide(gamma, votes, stability, committee_size):
    """Committee consensus and calibrated verdict."""
    return json.loads(_core.decide_json(list(gamma), list(votes), list(stability), committee_size))


def token_economy(full_text, agent):
    """Ledgers are lists of {"instance", "tokens", "verdict"} dicts."""
    return _core.token_economy(json.dumps(full_text), json.dumps(agent))


def ablation(sources=30, sizes=(1, 2, 6), trials=200, seed=7):
    """Reliability table rows as dicts."""
    return json.loads(_core.ablation_json(sources, list(sizes), trials, seed))
