"""Python bindings for rmlab."""

import json

from ._rmlab import (
    ConsistencyError,
    Error,
    FormatError,
    InvalidInput,
    IoError,
    NumericalFailure,
    Unavailable,
    check_prop1,
    inject,
    make_blobs,
    median,
    plain_selection_probabilities,
    probability_shift,
    prop2_bound,
    read_idx,
    regroup_median,
    run_command,
    selection_probabilities,
    softmax,
)


def _run(command, config, suite="all"):
    code, report = run_command(command, json.dumps(config), suite)
    return code, json.loads(report)


def inject_command(config):
    """Same as `rmlab inject`; returns the report dict."""
    return _run("inject", config)[1]


def train(config):
    """Same as `rmlab train`; returns the run summary."""
    return _run("train", config)[1]


def verify(config, suite="all"):
    """Returns (all_passed, reports)."""
    code, reports = _run("verify", config, suite)
    return code == 0, reports


def ablate(config):
    return _run("ablate", config)[1]
