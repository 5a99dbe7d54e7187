import csv
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mogflow.cli import SpecError, main, parse_spec, serialize_spec


def write_spec(path, **sections):
    spec = {
        "problem": {"G": {"family": "power", "exponent": 3}, "Psi": {"family": "power", "exponent": 2}},
        "grid": {"dim": 1, "resolution": 64},
        "initial": {"shape": "sphere", "radius": 1.0},
    }
    spec.update(sections)
    path.write_text(json.dumps(spec))
    return str(path)


ELLIPSE = {"shape": "ellipsoid", "axes": [1.2, 0.9]}


def test_solve_sphere(tmp_path):
    spec = write_spec(tmp_path / "spec.json", flow={"mode": "plain"})
    assert main(["solve", spec, "--out", str(tmp_path / "out")]) == 0
    rows = list(csv.reader((tmp_path / "out" / "series.csv").open()))
    assert rows[0][:3] == ["step", "t", "dt"]
    assert len(rows) - 1 <= 3
    solution = json.loads((tmp_path / "out" / "solution.json").read_text())
    assert solution["gamma"] == pytest.approx(1.5)
    assert solution["grid"] == {"dim": 1, "resolution": [64], "scheme": "spectral"}
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["exit_code"] == 0 and report["result"]["status"] == "Converged"


def test_auto_mode_runs_continuation_on_sphere(tmp_path):
    # z^3 against z^2: s G_z / psi = 1.5 s stays bounded, so auto mode regularizes
    spec = write_spec(tmp_path / "spec.json")
    assert main(["solve", spec, "--out", str(tmp_path / "out")]) == 0
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["result"]["stage_status"] == ["Converged"] * 6
    assert report["spec"]["flow"]["mode"] == "auto"
    for k in range(6):
        assert len((tmp_path / "out" / f"series_stage{k}.csv").read_text().splitlines()) <= 3


def test_solve_ellipse_predicts_radius(tmp_path):
    spec = write_spec(tmp_path / "spec.json", initial=ELLIPSE, grid={"dim": 1, "resolution": 128})
    assert main(["solve", spec, "--out", str(tmp_path / "out")]) == 0
    u = np.array(json.loads((tmp_path / "out" / "solution.json").read_text())["u"])
    series = np.genfromtxt(tmp_path / "out" / "series.csv", delimiter=",", names=True)
    radius = (series["V_G"][0] / (2 * np.pi)) ** (1 / 3)
    assert np.max(np.abs(u - radius)) / radius < 1e-3


def test_exit_codes(tmp_path):
    ellipse = write_spec(tmp_path / "e.json", initial=ELLIPSE)
    assert main(["solve", ellipse, "--out", str(tmp_path / "a"), "--max-steps", "3"]) == 2
    collapsing = write_spec(tmp_path / "c.json", initial=ELLIPSE, flow={"dt_init": 0.5, "dt_min": 0.25})
    assert main(["solve", collapsing, "--out", str(tmp_path / "b")]) == 3
    bad = write_spec(tmp_path / "bad.json", flow={"stepsize": 1})
    assert main(["solve", bad]) == 4
    assert main(["solve", str(tmp_path / "missing.json")]) == 4
    assert main(["check", "stationarity", ellipse, "--out", str(tmp_path / "k")]) == 1
    assert main(["check", "stationarity", write_spec(tmp_path / "s.json"), "--out", str(tmp_path / "k")]) == 0
    assert main(["check", "nonsense", ellipse]) == 4
    nonconvex = write_spec(tmp_path / "n.json", initial={"shape": "support", "expression": "1 + 0.9*(x1*x1 - x2*x2)"})
    assert main(["solve", nonconvex, "--out", str(tmp_path / "n")]) == 4


def test_outputs_are_deterministic(tmp_path):
    spec = write_spec(tmp_path / "spec.json", initial=ELLIPSE, flow={"max_steps": 200})
    main(["solve", spec, "--out", str(tmp_path / "one")])
    main(["solve", spec, "--out", str(tmp_path / "two")])
    for name in ("series.csv", "solution.json"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()
    assert b"\r\n" not in (tmp_path / "one" / "series.csv").read_bytes()


def test_atom_measure_end_to_end(tmp_path):
    atoms = [[[np.cos(t), np.sin(t)], 1.0] for t in (0.0, 2.0, 4.2)]
    spec = write_spec(tmp_path / "spec.json", problem={
        "G": {"family": "power", "exponent": 3}, "Psi": {"family": "power", "exponent": 2},
        "f": {"atoms": atoms, "kappa": 2.0}}, flow={"tol_residual": 1e-3})
    assert main(["solve", spec, "--out", str(tmp_path / "out")]) == 0
    concentrated = write_spec(tmp_path / "pair.json", problem={
        "G": {"family": "power", "exponent": 3}, "Psi": {"family": "power", "exponent": 2},
        "f": {"atoms": [[[1, 0], 1.0], [[0, 1], 1.0]], "kappa": 5.0}})
    assert main(["solve", concentrated, "--out", str(tmp_path / "pair")]) == 4


def test_check_suites_write_reports(tmp_path):
    spec = write_spec(tmp_path / "spec.json", initial=ELLIPSE, grid={"dim": 1, "resolution": 128})
    out = tmp_path / "checks"
    for suite in ("conservation", "energy", "measure", "identities", "classes"):
        assert main(["check", suite, spec, "--out", str(out)]) == 0, suite
        report = json.loads((out / f"check-{suite}.json").read_text())
        assert report["passed"] and report["assertions"]


def test_classes_suite_reports_selected_mode(tmp_path):
    spec = write_spec(tmp_path / "spec.json", problem={
        "G": {"family": "power", "exponent": 2}, "Psi": {"family": "power", "exponent": 2}})
    assert main(["check", "classes", spec, "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "check-classes.json").read_text())
    growth = report["assertions"][-1]["measured"]
    assert growth == {**growth, "condition": "good2", "selected_mode": "regularized"}


def test_variational_suite_dilation(tmp_path):
    spec = write_spec(tmp_path / "spec.json", grid={"dim": 1, "resolution": 128}, problem={
        "G": {"family": "power", "exponent": 2}, "Psi": {"family": "log"}},
        check_options={"variational": {"eps_fd": 1e-4, "g": "1", "tolerance": 1e-6}})
    assert main(["check", "variational", spec, "--out", str(tmp_path)]) == 0


def test_sweep_over_exponents(tmp_path):
    spec = write_spec(tmp_path / "spec.json", sweep={"parameters": {
        "problem.G.exponent": [1, 2, 3], "problem.Psi.exponent": [1, 2, 3]}})
    assert main(["sweep", spec, "--out", str(tmp_path / "sweep"), "--strict"]) == 0
    rows = list(csv.DictReader((tmp_path / "sweep" / "sweep.csv").open()))
    assert len(rows) == 9
    for row in rows:
        q, p = float(row["problem.G.exponent"]), float(row["problem.Psi.exponent"])
        assert row["status"] == "Converged"
        assert float(row["gamma"]) == pytest.approx(q / p)
        assert float(row["w_minus"]) == pytest.approx(2.0)


def test_single_cell_sweep_matches_solve(tmp_path, monkeypatch):
    monkeypatch.setenv("MOGFLOW_THREADS", "2")
    spec = write_spec(tmp_path / "spec.json", initial=ELLIPSE, flow={"max_steps": 100},
                      sweep={"parameters": {"problem.G.exponent": [3]}})
    assert main(["sweep", spec, "--out", str(tmp_path / "sweep")]) == 0
    assert main(["solve", spec, "--out", str(tmp_path / "solo")]) == 2
    for name in ("series.csv", "solution.json"):
        assert (tmp_path / "sweep" / "cell_0000" / name).read_bytes() == (tmp_path / "solo" / name).read_bytes()
    assert main(["sweep", spec, "--out", str(tmp_path / "strict"), "--strict"]) == 1


def test_sweep_size_limit_and_paths(tmp_path):
    too_big = write_spec(tmp_path / "big.json", sweep={"parameters": {
        "flow.safety": [0.5] * 101, "flow.dt_scale": [1.0] * 100}})
    assert main(["sweep", too_big]) == 4
    wrong = write_spec(tmp_path / "wrong.json", sweep={"parameters": {"flow.nothing": [1]}})
    assert main(["sweep", wrong]) == 4


def test_parse_rejects_unknown_keys():
    base = {"problem": {"G": {"family": "power", "exponent": 3}, "Psi": {"family": "log"}},
            "grid": {"dim": 1, "resolution": 64}}
    parse_spec(base)
    for broken in ({**base, "extra": 1},
                   {**base, "grid": {"dim": 1, "resolution": 64, "points": 3}},
                   {**base, "grid": {"dim": 3, "resolution": 64}},
                   {**base, "problem": {"G": {"family": "power", "exponent": -1}, "Psi": {"family": "log"}}},
                   {**base, "outputs": {"formats": ["pdf"]}},
                   {**base, "checks": ["everything"]}):
        with pytest.raises(SpecError):
            parse_spec(broken)


@given(
    q=st.floats(0.5, 5.0), p=st.floats(0.5, 5.0), dim=st.sampled_from([1, 2]),
    resolution=st.sampled_from([16, 32, 48]), safety=st.floats(0.1, 1.0),
    schedule=st.one_of(st.none(), st.lists(st.floats(1e-4, 0.1), min_size=1, max_size=4, unique=True)),
    mode=st.sampled_from(["auto", "plain", "regularized"]),
    f=st.one_of(st.floats(0.1, 10.0), st.just("1 + 0.5*x1*x1")),
)
def test_spec_round_trip(q, p, dim, resolution, safety, schedule, mode, f):
    flow = {"safety": safety, "mode": mode}
    if schedule is not None:
        flow["epsilon_schedule"] = sorted(schedule, reverse=True)
    raw = {"problem": {"G": {"family": "power", "exponent": q}, "Psi": {"family": "power", "exponent": p}, "f": f},
           "grid": {"dim": dim, "resolution": resolution}, "flow": flow, "checks": ["energy"]}
    once = parse_spec(raw)
    assert parse_spec(json.loads(serialize_spec(once))) == once
