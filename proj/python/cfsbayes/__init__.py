"""Python bindings for the cfsbayes estimators."""

from ._core import (
    ConfigError,
    CrbError,
    Geometry,
    Scenario,
    count_peaks,
    dictionary,
    dictionary_derivative,
    estimate,
    joint_crb,
    load_scenario,
    pulse,
    run_bench,
    sensing_matrix,
    synthesize,
    theta_grid,
)

__all__ = [
    "ConfigError",
    "CrbError",
    "Geometry",
    "Scenario",
    "count_peaks",
    "dictionary",
    "dictionary_derivative",
    "estimate",
    "joint_crb",
    "load_scenario",
    "pulse",
    "run_bench",
    "sensing_matrix",
    "synthesize",
    "theta_grid",
]
