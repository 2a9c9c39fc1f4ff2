import csv
import io
import json
import math

import numpy as np
import pytest

import oracles
from aimdnet.cli import density_table, main
from aimdnet.config import (ConfigError, load_config, parse_config)


def run(capsys, tmp_path, doc, *flags, command=None):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc))
    code = main([command or doc["command"], "--config", str(path), *flags])
    out = capsys.readouterr()
    return code, out.out, out.err


def report(out):
    return json.loads(out)


ROUND_TRIP = [
    {"command": "solve", "model": {"preset": "ring2", "J": 3}},
    {"command": "solve", "model": {"preset": "tree", "levels": 3, "classes": {"p": 0.142857}},
     "solver": {"tol": 1e-9, "method": "generic"}},
    {"command": "solve", "model": {"preset": "ring2+1", "J": 4,
                                   "loss": {"kind": "additive", "delta": 2.0}}},
    {"command": "scan", "model": {"matrix": [[1, 0.5], [0, 1]], "classes": [{"a": 2}, {"r": 0.1}],
                                  "loss": [{"kind": "constant", "delta": 1},
                                           {"kind": "routesum", "coeff": 2, "exponent": 1.5}]},
     "scan": {"n_starts": 8, "seed": 3}},
    {"command": "simulate", "model": {"preset": "linear", "J": 2},
     "simulate": {"mode": "finite", "counts": [3, 4, 5], "scaled_load": True}},
    {"command": "simulate", "simulate": {"mode": "single", "beta": 0.5, "w0": 2.0}},
    {"command": "density", "density": {"r": 0.3, "rho": 2.0}},
    {"command": "check", "check": {"filter": "ring2", "simulate": False}},
]


@pytest.mark.filterwarnings("ignore::aimdnet.model.ModelWarning")
@pytest.mark.parametrize("doc", ROUND_TRIP)
def test_config_round_trip(doc):
    cfg = parse_config(doc)
    again = parse_config(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg
    assert again.to_dict() == cfg.to_dict()


@pytest.mark.parametrize("doc, where", [
    ({"command": "solve"}, "model"),
    ({"command": "solve", "model": {"preset": "ring3", "J": 3}}, "model.preset"),
    ({"command": "solve", "model": {"preset": "ring2", "J": 3, "classes": [{}, {"r": 2.0}, {}]}},
     "model.classes[1].r"),
    ({"command": "solve", "model": {"preset": "ring2", "J": 3, "colour": 1}}, "model.colour"),
    ({"command": "solve", "model": {"preset": "ring2", "J": 3}, "solver": {"tol": -1}}, "solver.tol"),
    ({"command": "solve", "model": {"preset": "ring2", "J": 3}, "scan": {}}, "scan"),
    ({"command": "density", "density": {"r": 1.0}}, "density.r"),
    ({"command": "simulate", "model": {"preset": "ring2", "J": 3},
      "simulate": {"mode": "finite", "counts": [1, 2]}}, "simulate.counts"),
    ({"schema": 2, "command": "solve"}, "schema"),
])
def test_config_errors_name_the_field(doc, where):
    with pytest.raises(ConfigError) as info:
        parse_config(doc)
    assert info.value.where == where


def test_json_syntax_error_has_position():
    with pytest.raises(ConfigError) as info:
        load_config('{"command": "solve",\n  "model": {,}}')
    assert info.value.where.startswith("line 2, column")


def test_config_error_exit_code(capsys, tmp_path):
    code, out, err = run(capsys, tmp_path, {"command": "solve", "model": {"preset": "x"}})
    assert code == 4 and "model.preset" in err and out == ""


def test_command_mismatch(capsys, tmp_path):
    code, _, err = run(capsys, tmp_path, {"command": "scan", "model": {"preset": "ring2", "J": 3}},
                       command="solve")
    assert code == 4 and "command" in err


def test_solve_ring(capsys, tmp_path):
    code, out, _ = run(capsys, tmp_path, {"command": "solve", "model": {"preset": "ring2", "J": 3}})
    rep = report(out)
    assert code == 0 and rep["status"] == "ok"
    assert np.allclose(rep["result"]["u_star"], 2 * oracles.ring_two_y(), atol=1e-10)
    assert rep["result"]["residual_recheck"] <= 1e-10
    assert rep["config"]["solver"]["tol"] == 1e-10
    assert rep["versions"]["config_schema"] == 1


def test_solve_linear_certified(capsys, tmp_path):
    doc = {"command": "solve", "model": {"preset": "linear", "J": 3, "classes": {"p": 0.25}}}
    code, out, _ = run(capsys, tmp_path, doc)
    assert code == 0 and report(out)["result"]["unique_certified"] is True


def test_solve_constant_closed_form(capsys, tmp_path):
    doc = {"command": "solve", "model": {
        "matrix": [[1, 0], [1, 1]], "classes": {"p": 0.5},
        "loss": [{"kind": "constant", "delta": 1}, {"kind": "constant", "delta": 4}]}}
    code, out, _ = run(capsys, tmp_path, doc)
    res = report(out)["result"]
    c = oracles.C_HALF
    assert code == 0
    assert np.allclose(res["closed_form"]["u"], [0.5 * c, 0.5 * c + 0.25 * c], rtol=1e-12)
    assert np.allclose(res["u_star"], res["closed_form"]["u"], rtol=1e-12)


def test_uncollapsed_bracket_exit_code(capsys, tmp_path):
    doc = {"command": "solve", "model": {"preset": "ring2", "J": 3},
           "solver": {"max_iter": 3, "method": "generic"}}
    code, out, _ = run(capsys, tmp_path, doc)
    assert code == 2 and report(out)["status"] == "possible multi-stability"


def test_nonconvergence_exit_code(capsys, tmp_path):
    doc = {"command": "solve", "model": {"preset": "ring2", "J": 3}, "solver": {"max_iter": 1}}
    code, out, _ = run(capsys, tmp_path, doc)
    assert code == 3


def test_generic_flag_overrides(capsys, tmp_path):
    doc = {"command": "solve", "model": {"preset": "ring2", "J": 3}}
    code, out, _ = run(capsys, tmp_path, doc, "--method", "generic")
    rep = report(out)
    assert rep["result"]["method"] == "bracket" and rep["config"]["solver"]["method"] == "generic"


def test_csv_output_uses_17_digits(capsys, tmp_path):
    doc = {"command": "solve", "model": {"preset": "ring2", "J": 3}}
    code, out, _ = run(capsys, tmp_path, doc, "--format", "csv")
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["kind", "index", "label", "value"]
    value = rows[1][3]
    assert float(value) == pytest.approx(2 * oracles.ring_two_y(), abs=1e-10)
    assert value == format(float(value), ".17g")


def test_out_dir_and_quiet(capsys, tmp_path):
    doc = {"command": "density", "density": {"r": 0.5, "rho": 1.0, "n_points": 101}}
    out_dir = tmp_path / "run"
    code, out, _ = run(capsys, tmp_path, doc, "--out", str(out_dir), "--quiet")
    assert code == 0 and out == ""
    saved = json.loads((out_dir / "report.json").read_text())
    assert saved["result"]["metadata"]["n_points"] == 101
    rows = list(csv.reader(open(out_dir / "density.csv")))
    assert rows[0] == ["w", "H"] and len(rows) == 102


def test_solver_report_reproduces_exactly(capsys, tmp_path):
    doc = {"command": "solve", "model": {"preset": "ring2+full", "J": 3}}
    _, out, _ = run(capsys, tmp_path, doc)
    first = report(out)
    _, out, _ = run(capsys, tmp_path, first["config"])
    assert report(out)["result"] == first["result"]


def test_simulate_single(capsys, tmp_path):
    doc = {"command": "simulate", "simulate": {"mode": "single", "a": 1, "beta": 1, "r": 0.5,
                                               "options": {"horizon": 5000, "seed": 3}}}
    code, out, _ = run(capsys, tmp_path, doc)
    res = report(out)["result"]
    assert code == 0
    assert res["stationary_mean"] == pytest.approx(1.30983, abs=1e-5)
    se = res["standard_errors"]["class_means"][0]
    assert abs(res["mean"] - res["stationary_mean"]) < 3 * se
    assert res["ci95"][0] < res["mean"] < res["ci95"][1]


def test_simulate_ramp(capsys, tmp_path):
    doc = {"command": "simulate", "simulate": {"mode": "single", "beta": 0, "w0": 1.0,
                                               "options": {"horizon": 10, "warmup_fraction": 0}}}
    code, out, _ = run(capsys, tmp_path, doc)
    res = report(out)["result"]
    assert res["event_count"] == 0 and res["mean"] == pytest.approx(6.0)


def test_simulate_ring_gaps_and_seed(capsys, tmp_path):
    doc = {"command": "simulate", "model": {"preset": "ring2", "J": 3},
           "simulate": {"options": {"horizon": 60, "particles_per_class": 300,
                                    "record_events": True}}}
    out_dir = tmp_path / "sim"
    code, out, _ = run(capsys, tmp_path, doc, "--seed", "17", "--out", str(out_dir))
    rep = report(out)
    assert code == 0
    assert rep["config"]["simulate"]["options"]["seed"] == 17
    gaps = rep["result"]["comparison"]["relative_gap"]
    assert all(abs(g) < 0.02 for g in gaps)
    events = list(csv.reader(open(out_dir / "events.csv")))
    assert len(events) == rep["result"]["event_count"] + 1
    hist = list(csv.reader(open(out_dir / "histograms.csv")))
    assert len(hist) == 3 * 200 + 1
    # the echoed config regenerates the same event stream
    _, out, _ = run(capsys, tmp_path, rep["config"])
    again = report(out)["result"]
    assert again["event_count"] == rep["result"]["event_count"]
    assert again["u_bar"] == rep["result"]["u_bar"]


def test_scan_commands(capsys, tmp_path):
    code, out, _ = run(capsys, tmp_path, {"command": "scan", "model": {"preset": "ring2", "J": 3}})
    assert code == 0 and report(out)["result"]["n_clusters"] == 1
    doc = {"command": "scan", "model": {"matrix": [[1, 1]], "classes": {"p": 0.5},
                                        "loss": {"kind": "constant", "delta": 2}},
           "scan": {"n_starts": 8}}
    code, out, _ = run(capsys, tmp_path, doc)
    assert code == 0 and report(out)["result"]["n_clusters"] == 1
    doc = {"command": "scan", "model": {"preset": "tree", "levels": 3, "classes": {"p": 0.1428571}}}
    code, out, _ = run(capsys, tmp_path, doc)
    assert code == 0 and report(out)["result"]["n_clusters"] == 1


def test_density_half_gaussian(capsys, tmp_path):
    doc = {"command": "density", "density": {"r": 0.0, "rho": 1.0, "n_points": 51}}
    code, out, _ = run(capsys, tmp_path, doc, "--format", "csv")
    rows = np.array([[float(x) for x in row] for row in list(csv.reader(io.StringIO(out)))[1:]])
    assert np.allclose(rows[:, 1], math.sqrt(2 / math.pi) * np.exp(-rows[:, 0] ** 2 / 2), rtol=1e-14)


def test_density_mass_and_mean():
    w, h, meta = density_table(0.5, 1.0)
    assert abs(meta["total_mass"] - 1.0) < 1e-8
    assert abs(float(np.trapezoid(h, w)) + meta["tail_mass"] - 1.0) < 1e-8
    assert meta["mean"] == pytest.approx(1.30983, abs=1e-4)


def test_check_ring_contraction(capsys, tmp_path):
    doc = {"command": "check", "check": {"simulate": False}}
    code, out, _ = run(capsys, tmp_path, doc, "--filter", "ring2")
    checks = report(out)["result"]["checks"]
    contraction = [c for c in checks if c["check"] == "contraction"]
    assert code == 0 and len(contraction) == 6
    assert all(c["value"] < 1 for c in contraction)


def test_check_empty_filter(capsys, tmp_path):
    code, out, err = run(capsys, tmp_path, {"command": "check"}, "--filter", "nothing-matches")
    rep = report(out)
    assert code == 0 and rep["result"]["n_checks"] == 0
    assert rep["warnings"] and "warning" in err
