# SPDX-License-Identifier: MIT
import json
import math
import os
from pathlib import Path

import pytest

import gconic

SCENARIOS = Path(os.environ.get("GCONIC_SCENARIO_DIR", Path(__file__).parents[2] / "scenarios"))


def entropic_reference(tree, x, gamma):
    probs = tree.path_probs(tree.horizon)
    return gamma * math.log(sum(p * math.exp(-v / gamma) for p, v in zip(probs, x)))


def test_entropic_driver_matches_closed_form():
    tree = gconic.Tree.binary(3)
    w = gconic.Martingale.walk(tree)
    x = [0.3, -1.2, 2.0, 0.1, -0.4, 0.9, 1.5, -2.2]
    for gamma in (0.5, 1.0, 2.0):
        y0 = gconic.risk(gconic.driver("entropic", gamma), w, [[0.0] * tree.size(t) for t in range(3)] + [x], 0)
        assert y0[0] == pytest.approx(entropic_reference(tree, x, gamma), abs=1e-9)


def test_one_step_coherent_spread():
    w = gconic.Martingale.walk(gconic.Tree.binary(1))
    d = [[0.0], [1.0, -1.0]]
    f = gconic.family("coherent")
    assert gconic.ask(f, 1.0, [1.0], d, w, 0)[0] == pytest.approx(0.5)
    assert gconic.bid(f, 1.0, [1.0], d, w, 0)[0] == pytest.approx(-0.5)


def test_worked_index_value():
    w = gconic.Martingale.walk(gconic.Tree.binary(1))
    alpha = gconic.acceptability_index(gconic.family("coherent"), w, [[0.0], [1.0, -0.9]], 0, 1e-10)
    assert alpha[0] == pytest.approx(1.0 / 18.0, abs=1e-7)


def test_solution_components():
    w = gconic.Martingale.walk(gconic.Tree.binary(1))
    sol = gconic.solve_bsde(gconic.driver("coherent_abs", 0.5), w, [1.0, -1.0])
    assert sol.y[0][0] == pytest.approx(0.5)
    assert sol.z[1][0] == pytest.approx(1.0)


def test_library_errors_are_raised():
    with pytest.raises(gconic.Error, match="NonstochasticProbabilities"):
        gconic.Tree.from_probabilities([[[0.7, 0.7]]])
    with pytest.raises(gconic.Error):
        gconic.Martingale(gconic.Tree.binary(1), [[0.0], [1.0, 0.5]])


def test_scenario_runner(tmp_path):
    out = tmp_path / "direct_arbitrage"
    summary = gconic.run_scenario(str(SCENARIOS / "direct_arbitrage.json"), str(out), seed=42)
    assert summary["passed"]
    assert json.loads((out / "summary.json").read_text())["passed"] is True
    assert "arbitrage_t0" in gconic.render_report(str(out))


def test_bad_scenario_is_config_error(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"tree": {"kind": "binary"}}')
    with pytest.raises(gconic.ConfigInvalid):
        gconic.run_scenario(str(bad), str(tmp_path / "out"))
