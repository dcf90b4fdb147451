# SPDX-License-Identifier: MIT
from ._gconic import (
    BsdeSolution,
    ConfigInvalid,
    Driver,
    DriverFamily,
    Error,
    Martingale,
    Tree,
    acceptability_index,
    ask,
    bid,
    driver,
    family,
    g_expectation,
    render_report,
    risk,
    run_scenario,
    solve_bsde,
)

__all__ = [
    "BsdeSolution",
    "ConfigInvalid",
    "Driver",
    "DriverFamily",
    "Error",
    "Martingale",
    "Tree",
    "acceptability_index",
    "ask",
    "bid",
    "driver",
    "family",
    "g_expectation",
    "render_report",
    "risk",
    "run_scenario",
    "solve_bsde",
]
