"""Command line front end: ``mogflow solve|check|sweep <spec.json>``.

A run spec is a JSON document with the sections ``problem``, ``grid``,
``initial``, ``flow``, ``outputs``, ``checks``, ``check_options`` and (for
sweeps) ``sweep``. Unknown keys are rejected; omitted keys take defaults, and
:func:`serialize_spec` writes the fully expanded form.

Exit codes: 0 converged / all checks pass, 1 check failure, 2 step limit
reached, 3 collapsed, 4 configuration error.
"""
from __future__ import annotations

import argparse
import copy
import csv
import itertools
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import flow as flowmod
from .convex import (
    ellipsoid_support,
    make_support_body,
    radial_from_support,
    widths,
)
from .errors import MogflowError
from .expr import Expression, ExpressionError
from .measures import (
    ProblemTriple,
    check_not_concentrated,
    dual_volume,
    gauss_image_density,
    mollify_measure,
    variational_check,
)
from .mofunc import SampleSpec, certify, flow_mode, function_from_descriptor, regularize
from .sphere import ScalarField, build_grid

EXIT_OK, EXIT_CHECK_FAILED, EXIT_MAX_STEPS, EXIT_COLLAPSED, EXIT_CONFIG = 0, 1, 2, 3, 4
STATUS_EXIT = {flowmod.CONVERGED: EXIT_OK, flowmod.MAX_STEPS: EXIT_MAX_STEPS, flowmod.COLLAPSED: EXIT_COLLAPSED}
FORMATS = ("series", "solution", "report", "density")
SUITES = ("conservation", "energy", "measure", "identities", "variational", "classes", "stationarity")
MAX_SWEEP_CELLS = 10_000


class SpecError(ValueError):
    """The run spec is malformed."""


# ---------------------------------------------------------------------------
# spec parsing

FLOW_DEFAULTS = {
    "mode": "auto",
    "epsilon_schedule": None,
    "stages": 6,
    "dt_init": None,
    "dt_min": 1e-12,
    "dt_max": 0.5,
    "safety": 0.8,
    "tol_residual": 1e-4,
    "tol_energy_slope": 1e-5,
    "max_steps": 200_000,
    "u_floor": None,
    "dt_scale": 1.0,
    "min_steps": 1,
    "slope_window": 10,
}
VARIATIONAL_DEFAULTS = {"eps_fd": 1e-3, "g": "1", "tolerance": 1e-3}


def _section(data, name, allowed, required=()):
    if not isinstance(data, dict):
        raise SpecError(f"{name} must be an object")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise SpecError(f"unknown key(s) in {name}: {', '.join(unknown)}")
    missing = [k for k in required if k not in data]
    if missing:
        raise SpecError(f"missing key(s) in {name}: {', '.join(missing)}")
    return data


def _number(value, name, positive=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SpecError(f"{name} must be a number")
    if integer and int(value) != value:
        raise SpecError(f"{name} must be an integer")
    if positive and not value > 0:
        raise SpecError(f"{name} must be positive")
    return int(value) if integer else float(value)


def _function(desc, name):
    if not isinstance(desc, dict):
        raise SpecError(f"{name} must be a function descriptor object")
    try:
        function_from_descriptor(desc)
    except (MogflowError, ValueError, KeyError, TypeError) as exc:
        raise SpecError(f"{name}: {exc}") from None
    out = dict(desc)
    for key in ("exponent",):
        if key in out:
            out[key] = float(out[key])
    return out


def _direction_datum(value, name, allow_atoms=False):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        if value <= 0:
            raise SpecError(f"{name} must be positive")
        return float(value)
    if isinstance(value, str):
        try:
            expr = Expression(value)
        except ExpressionError as exc:
            raise SpecError(f"{name}: {exc}") from None
        if expr.uses_z:
            raise SpecError(f"{name} may not depend on z")
        return value
    if allow_atoms and isinstance(value, dict):
        _section(value, name, ("atoms", "kappa"), ("atoms", "kappa"))
        atoms = value["atoms"]
        if not isinstance(atoms, list) or not atoms:
            raise SpecError(f"{name}.atoms must be a nonempty list of [direction, mass]")
        clean = []
        for item in atoms:
            if not (isinstance(item, list) and len(item) == 2 and isinstance(item[0], list)):
                raise SpecError(f"{name}.atoms entries must be [direction, mass]")
            direction = [_number(c, f"{name}.atoms direction") for c in item[0]]
            if np.linalg.norm(direction) == 0:
                raise SpecError(f"{name}.atoms direction must be nonzero")
            clean.append([direction, _number(item[1], f"{name}.atoms mass", positive=True)])
        return {"atoms": clean, "kappa": _number(value["kappa"], f"{name}.kappa", positive=True)}
    raise SpecError(f"{name} must be a positive number or an expression string")


def _parse_problem(data):
    _section(data, "problem", ("G", "Psi", "p_lambda", "f"), ("G", "Psi"))
    return {
        "G": _function(data["G"], "problem.G"),
        "Psi": _function(data["Psi"], "problem.Psi"),
        "p_lambda": _direction_datum(data.get("p_lambda", 1.0), "problem.p_lambda"),
        "f": _direction_datum(data.get("f", 1.0), "problem.f", allow_atoms=True),
    }


def _parse_grid(data):
    _section(data, "grid", ("dim", "resolution", "scheme"), ("dim", "resolution"))
    dim = _number(data["dim"], "grid.dim", integer=True)
    if dim not in (1, 2):
        raise SpecError("grid.dim must be 1 or 2")
    res = data["resolution"]
    res = [res] if not isinstance(res, list) else res
    res = [_number(r, "grid.resolution", positive=True, integer=True) for r in res]
    if dim == 2 and len(res) == 1:
        res = [res[0], 2 * res[0]]
    if len(res) != dim:
        raise SpecError(f"grid.resolution needs {dim} entries")
    scheme = data.get("scheme")
    try:
        grid = build_grid(dim, res, scheme)
    except (MogflowError, ValueError) as exc:
        raise SpecError(f"grid: {exc}") from None
    return {"dim": dim, "resolution": res, "scheme": grid.scheme}


def _parse_initial(data):
    shape = data.get("shape") if isinstance(data, dict) else None
    if shape == "sphere":
        _section(data, "initial", ("shape", "radius"))
        return {"shape": "sphere", "radius": _number(data.get("radius", 1.0), "initial.radius", positive=True)}
    if shape == "ellipsoid":
        _section(data, "initial", ("shape", "axes", "center"), ("axes",))
        axes = [_number(a, "initial.axes", positive=True) for a in data["axes"]]
        center = data.get("center")
        center = None if center is None else [_number(c, "initial.center") for c in center]
        return {"shape": "ellipsoid", "axes": axes, "center": center}
    if shape == "support":
        _section(data, "initial", ("shape", "expression"), ("expression",))
        try:
            Expression(data["expression"])
        except ExpressionError as exc:
            raise SpecError(f"initial.expression: {exc}") from None
        return {"shape": "support", "expression": data["expression"]}
    raise SpecError("initial.shape must be 'sphere', 'ellipsoid' or 'support'")


def _parse_flow(data):
    _section(data, "flow", FLOW_DEFAULTS)
    out = dict(FLOW_DEFAULTS)
    out.update(data)
    if out["mode"] not in ("auto", "plain", "regularized"):
        raise SpecError("flow.mode must be 'auto', 'plain' or 'regularized'")
    for key in ("dt_min", "dt_max", "safety", "tol_residual", "tol_energy_slope", "dt_scale"):
        out[key] = _number(out[key], f"flow.{key}", positive=True)
    for key in ("max_steps", "stages", "min_steps", "slope_window"):
        out[key] = _number(out[key], f"flow.{key}", positive=True, integer=True)
    for key in ("dt_init", "u_floor"):
        if out[key] is not None:
            out[key] = _number(out[key], f"flow.{key}", positive=True)
    if out["epsilon_schedule"] is not None:
        out["epsilon_schedule"] = [_number(e, "flow.epsilon_schedule", positive=True)
                                   for e in out["epsilon_schedule"]]
    if out["safety"] > 1:
        raise SpecError("flow.safety must lie in (0, 1]")
    return out


def _parse_outputs(data):
    _section(data, "outputs", ("directory", "formats"))
    formats = data.get("formats", ["series", "solution", "report"])
    if not isinstance(formats, list) or any(f not in FORMATS for f in formats):
        raise SpecError(f"outputs.formats must be a list drawn from {FORMATS}")
    directory = data.get("directory", "mogflow-out")
    if not isinstance(directory, str):
        raise SpecError("outputs.directory must be a string")
    return {"directory": directory, "formats": [f for f in FORMATS if f in formats]}


def _parse_check_options(data):
    _section(data, "check_options", ("variational",))
    options = {}
    variational = _section(data.get("variational", {}), "check_options.variational", VARIATIONAL_DEFAULTS)
    merged = dict(VARIATIONAL_DEFAULTS)
    merged.update(variational)
    merged["eps_fd"] = _number(merged["eps_fd"], "check_options.variational.eps_fd", positive=True)
    merged["tolerance"] = _number(merged["tolerance"], "check_options.variational.tolerance", positive=True)
    if not isinstance(merged["g"], (str, int, float)):
        raise SpecError("check_options.variational.g must be a number or expression")
    merged["g"] = str(merged["g"])
    try:
        Expression(merged["g"])
    except ExpressionError as exc:
        raise SpecError(f"check_options.variational.g: {exc}") from None
    options["variational"] = merged
    return options


def _parse_sweep(data):
    if data is None:
        return None
    _section(data, "sweep", ("parameters",), ("parameters",))
    params = data["parameters"]
    if not isinstance(params, dict) or not params:
        raise SpecError("sweep.parameters must map dotted paths to value lists")
    cells = 1
    for path, values in params.items():
        if not isinstance(values, list) or not values:
            raise SpecError(f"sweep.parameters[{path!r}] must be a nonempty list")
        cells *= len(values)
    if cells > MAX_SWEEP_CELLS:
        raise SpecError(f"sweep has {cells} cells; at most {MAX_SWEEP_CELLS} allowed")
    return {"parameters": {k: list(v) for k, v in params.items()}}


def parse_spec(data: dict) -> dict:
    """Validate a run spec and return its fully expanded, normalized form."""
    _section(data, "spec", ("problem", "grid", "initial", "flow", "outputs", "checks", "check_options", "sweep"),
             ("problem", "grid"))
    checks = data.get("checks", [])
    if not isinstance(checks, list) or any(c not in SUITES for c in checks):
        raise SpecError(f"checks must be a list drawn from {SUITES}")
    spec = {
        "problem": _parse_problem(data["problem"]),
        "grid": _parse_grid(data["grid"]),
        "initial": _parse_initial(data.get("initial", {"shape": "sphere"})),
        "flow": _parse_flow(data.get("flow", {})),
        "outputs": _parse_outputs(data.get("outputs", {})),
        "checks": list(checks),
        "check_options": _parse_check_options(data.get("check_options", {})),
        "sweep": _parse_sweep(data.get("sweep")),
    }
    if spec["sweep"]:
        for path in spec["sweep"]["parameters"]:
            _set_path(copy.deepcopy(spec), path, None)
    return spec


def serialize_spec(spec: dict) -> str:
    return json.dumps(spec, indent=2, sort_keys=True) + "\n"


def load_spec(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise SpecError(f"cannot read spec: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"spec is not valid JSON: {exc}") from None
    return parse_spec(data)


def _set_path(spec, path, value):
    keys = path.split(".")
    node = spec
    for key in keys[:-1]:
        if not isinstance(node, dict) or key not in node:
            raise SpecError(f"sweep path {path!r} does not exist in the spec")
        node = node[key]
    if not isinstance(node, dict) or keys[-1] not in node:
        raise SpecError(f"sweep path {path!r} does not exist in the spec")
    node[keys[-1]] = value


# ---------------------------------------------------------------------------
# building runtime objects


def build_problem(spec: dict):
    """Return (grid, triple, initial body, flow config) for a parsed spec."""
    g = spec["grid"]
    grid = build_grid(g["dim"], g["resolution"], g["scheme"])
    problem = spec["problem"]
    f = problem["f"]
    if isinstance(f, dict):
        atoms = [(np.asarray(d, dtype=float), m) for d, m in f["atoms"]]
        if any(len(d) != grid.dim + 1 for d, _ in atoms):
            raise SpecError("atom directions must match the grid dimension")
        check_not_concentrated(atoms)
        f = mollify_measure(atoms, f["kappa"], grid)
    triple = ProblemTriple(function_from_descriptor(problem["G"]), function_from_descriptor(problem["Psi"]),
                           problem["p_lambda"], f, grid.dim)
    triple.validate_on(grid)

    init = spec["initial"]
    if init["shape"] == "sphere":
        field = ScalarField(grid, np.full(grid.size, init["radius"]))
    elif init["shape"] == "ellipsoid":
        if len(init["axes"]) != grid.dim + 1:
            raise SpecError("initial.axes must have one entry per ambient coordinate")
        field = ellipsoid_support(grid, init["axes"], init["center"])
    else:
        field = ScalarField(grid, np.broadcast_to(Expression(init["expression"])(directions=grid.nodes),
                                                  (grid.size,)))
    body = make_support_body(field)

    fl = spec["flow"]
    mode = fl["mode"]
    if mode == "auto":
        mode = flow_mode(triple.G, triple.Psi, grid.dim)
    keys = ("dt_init", "dt_min", "dt_max", "safety", "tol_residual", "tol_energy_slope", "max_steps",
            "u_floor", "dt_scale", "min_steps", "slope_window")
    config = flowmod.FlowConfig(triple, body, mode=mode,
                                epsilon_schedule=tuple(fl["epsilon_schedule"] or ()),
                                **{k: fl[k] for k in keys})
    if mode == "regularized" and not config.epsilon_schedule:
        config.epsilon_schedule = flowmod.default_schedule(config, fl["stages"])
    return grid, triple, body, config


# ---------------------------------------------------------------------------
# persistence


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def write_series(path, series: dict):
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(flowmod.SERIES_COLUMNS)
        for i in range(len(series["step"])):
            writer.writerow([_fmt(series[c][i]) for c in flowmod.SERIES_COLUMNS])


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if np.isfinite(value) else repr(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def _write_json(path, payload):
    Path(path).write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def result_summary(result: flowmod.FlowResult) -> dict:
    w_minus, w_plus = widths(result.body)
    return {
        "status": result.status,
        "message": result.message,
        "gamma": result.gamma,
        "residual_norm": result.residual_norm,
        "steps": result.steps,
        "rejected": result.rejected,
        "final_time": float(result.series["t"][-1]) if len(result.series["t"]) else 0.0,
        "epsilon": result.epsilon,
        "w_minus": w_minus,
        "w_plus": w_plus,
        "min_u": float(result.body.u.min()),
        "max_u": float(result.body.u.max()),
        "monitors": result.monitors,
        "stage_gaps": result.gaps,
        "stage_status": [s.status for s in result.stages],
        "widths_ok": result.widths_ok,
    }


def write_artifacts(out_dir, spec, result, triple, extra=None):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    formats = spec["outputs"]["formats"]
    if "series" in formats:
        write_series(out / "series.csv", result.series)
        for k, stage in enumerate(result.stages):
            write_series(out / f"series_stage{k}.csv", stage.series)
    if "solution" in formats:
        _write_json(out / "solution.json", {
            "grid": result.body.grid.descriptor(),
            "u": result.body.u.tolist(),
            "gamma": result.gamma,
            "metadata": {"status": result.status, "steps": result.steps, "epsilon": result.epsilon,
                         "residual_norm": result.residual_norm},
        })
    if "density" in formats and result.status == flowmod.CONVERGED:
        gauss_image_density(triple, result.body).to_csv(out / "density.csv")
    if "report" in formats:
        payload = {"spec": spec, "result": result_summary(result),
                   "exit_code": STATUS_EXIT[result.status]}
        if extra:
            payload.update(extra)
        _write_json(out / "report.json", payload)


# ---------------------------------------------------------------------------
# check suites


def _assertion(name, passed, measured, bound):
    return {"name": name, "passed": bool(passed), "measured": measured, "bound": bound}


def run_suite(suite: str, spec: dict, solved=None):
    """Run one named suite; returns (assertions, flow result or None)."""
    grid, triple, body, config = build_problem(spec)
    out = []
    if suite == "classes":
        G, Psi = triple.G, triple.Psi
        sample = SampleSpec(dim=grid.dim)
        gi0 = certify(G, "GI0", sample)
        comp = certify(Psi, "psi_comp", sample)
        good1 = certify(G, "good1", sample, partner=Psi)
        mode = "plain" if good1.passed else "regularized"
        out.append(_assertion("G in the increasing class", gi0.passed, gi0.detail or "ok", "GI0"))
        out.append(_assertion("Psi unbounded at infinity", comp.passed, comp.detail or "ok", "psi_comp"))
        out.append(_assertion(
            "growth condition", True,
            {"condition": "good1" if good1.passed else "good2", "selected_mode": mode,
             "trend_tail": good1.trend[-3:]}, "informational"))
        return out, None
    if suite == "identities":
        radial = radial_from_support(body)
        interp_tol = 1e-6 if grid.dim == 1 else 1e-2
        out.append(_assertion("max u = max r", abs(body.u.max() - radial.r.max()) <= interp_tol,
                              abs(body.u.max() - radial.r.max()), interp_tol))
        out.append(_assertion("min u = min r", abs(body.u.min() - radial.r.min()) <= interp_tol,
                              abs(body.u.min() - radial.r.min()), interp_tol))
        xi_norm = float(np.max(np.abs(np.linalg.norm(body.xi, axis=1) - 1.0)))
        out.append(_assertion("|xi| = 1", xi_norm <= 1e-10, xi_norm, 1e-10))
        x_side = dual_volume(triple.G, triple.p_lambda, body)
        xi_side = dual_volume(triple.G, triple.p_lambda, radial)
        gap = abs(x_side - xi_side) / abs(xi_side)
        tol = 1e-5 if grid.dim == 1 else 1e-3
        out.append(_assertion("change of variables", gap <= tol, gap, tol))
        return out, None
    if suite == "variational":
        opts = spec["check_options"]["variational"]
        g = ScalarField(grid, np.broadcast_to(Expression(opts["g"])(directions=grid.nodes), (grid.size,)))
        report = variational_check(triple, body.field, g, opts["eps_fd"])
        out.append(_assertion("variational formula", report.rel_gap <= opts["tolerance"],
                              {"rel_gap": report.rel_gap, "fd_derivative": report.fd_derivative,
                               "measure_integral": report.measure_integral}, opts["tolerance"]))
        return out, None
    if suite == "stationarity":
        speed = float(np.max(np.abs(flowmod.velocity(body, triple).values)))
        out.append(_assertion("initial velocity vanishes", speed <= 1e-10, speed, 1e-10))
        return out, None

    result = solved if solved is not None else flowmod.run(config)
    if suite == "conservation":
        drift = result.monitors.get("max_dual_volume_drift", np.inf)
        out.append(_assertion("dual volume drift", drift <= 1e-4, drift, 1e-4))
    elif suite == "energy":
        runs = result.stages or [result]
        rises = sum(r.monitors.get("energy_increases", 0) for r in runs)
        out.append(_assertion("energy non-increasing", rises == 0, rises, 0))
    elif suite == "measure":
        if result.status != flowmod.CONVERGED:
            out.append(_assertion("run converged", False, result.status, flowmod.CONVERGED))
        else:
            psi_impl = None
            if result.epsilon is not None:
                psi_impl = regularize(triple.Psi, triple.G, result.epsilon, grid.dim)
            gap = flowmod.residual_norm(result.body, result.gamma, triple, psi_impl)
            out.append(_assertion("measure equation", gap <= config.tol_residual, gap, config.tol_residual))
    return out, result


# ---------------------------------------------------------------------------
# commands


def _override(spec, args):
    if getattr(args, "max_steps", None) is not None:
        spec["flow"]["max_steps"] = int(args.max_steps)
    if getattr(args, "out", None) is not None:
        spec["outputs"]["directory"] = args.out
    return spec


def _solve_spec(spec):
    grid, triple, body, config = build_problem(spec)
    return flowmod.run(config), triple


def cmd_solve(spec_path, out=None, max_steps=None) -> int:
    try:
        spec = _override(load_spec(spec_path), argparse.Namespace(out=out, max_steps=max_steps))
        result, triple = _solve_spec(spec)
    except (SpecError, MogflowError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    checks = {}
    for suite in spec["checks"]:
        assertions, _ = run_suite(suite, spec, solved=result)
        checks[suite] = assertions
    write_artifacts(spec["outputs"]["directory"], spec, result, triple, {"checks": checks} if checks else None)
    print(f"{result.status}: {result.message}; gamma = {result.gamma:.12g}, "
          f"residual = {result.residual_norm:.3g}, steps = {result.steps}")
    return STATUS_EXIT[result.status]


def cmd_check(suite, spec_path, out=None, max_steps=None) -> int:
    if suite not in SUITES:
        print(f"config error: unknown suite {suite!r}; choose from {', '.join(SUITES)}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        spec = _override(load_spec(spec_path), argparse.Namespace(out=out, max_steps=max_steps))
        assertions, result = run_suite(suite, spec)
    except (SpecError, MogflowError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    passed = all(a["passed"] for a in assertions)
    for a in assertions:
        print(f"[{'PASS' if a['passed'] else 'FAIL'}] {suite}: {a['name']}: measured {a['measured']} "
              f"(bound {a['bound']})")
    out_dir = Path(spec["outputs"]["directory"])
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {"suite": suite, "passed": passed, "assertions": assertions}
    if result is not None:
        payload["result"] = result_summary(result)
    _write_json(out_dir / f"check-{suite}.json", payload)
    return EXIT_OK if passed else EXIT_CHECK_FAILED


def _sweep_cell(args):
    index, spec = args
    cell_dir = Path(spec["outputs"]["directory"])
    try:
        result, triple = _solve_spec(spec)
    except (SpecError, MogflowError, ValueError) as exc:
        return index, {"status": "ConfigError", "message": str(exc)}
    write_artifacts(cell_dir, spec, result, triple)
    summary = result_summary(result)
    return index, summary


def sweep_cells(spec):
    params = spec["sweep"]["parameters"]
    paths = list(params)
    base = copy.deepcopy(spec)
    base["sweep"] = None
    root = Path(spec["outputs"]["directory"])
    cells = []
    for index, values in enumerate(itertools.product(*(params[p] for p in paths))):
        cell = copy.deepcopy(base)
        for path, value in zip(paths, values):
            _set_path(cell, path, value)
        cell.pop("sweep")
        cell = parse_spec(cell)
        cell["outputs"]["directory"] = str(root / f"cell_{index:04d}")
        cells.append((index, dict(zip(paths, values)), cell))
    return cells


def cmd_sweep(spec_path, out=None, max_steps=None, strict=False) -> int:
    try:
        spec = _override(load_spec(spec_path), argparse.Namespace(out=out, max_steps=max_steps))
        if not spec["sweep"]:
            raise SpecError("sweep needs a 'sweep' section")
        cells = sweep_cells(spec)
    except (SpecError, MogflowError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    workers = max(1, int(os.environ.get("MOGFLOW_THREADS", "1") or 1))
    jobs = [(index, cell) for index, _, cell in cells]
    if workers == 1 or len(jobs) == 1:
        outcomes = [_sweep_cell(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            outcomes = list(pool.map(_sweep_cell, jobs))
    outcomes = dict(outcomes)
    root = Path(spec["outputs"]["directory"])
    root.mkdir(parents=True, exist_ok=True)
    paths = list(spec["sweep"]["parameters"])
    columns = paths + ["status", "gamma", "residual_norm", "w_minus", "w_plus", "min_u", "stage_gaps"]
    failed = 0
    with open(root / "sweep.csv", "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for index, params, _ in cells:
            summary = outcomes[index]
            if summary["status"] != flowmod.CONVERGED:
                failed += 1
            row = [json.dumps(params[p]) for p in paths] + [summary["status"]]
            for key in ("gamma", "residual_norm", "w_minus", "w_plus", "min_u"):
                row.append(_fmt(summary[key]) if key in summary else "")
            row.append(";".join(_fmt(g) for g in summary.get("stage_gaps", [])))
            writer.writerow(row)
    print(f"{len(cells)} cells, {len(cells) - failed} converged; summary in {root / 'sweep.csv'}")
    return EXIT_CHECK_FAILED if (failed and strict) else EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mogflow", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", metavar="DIR", help="output directory (overrides the spec)")
    common.add_argument("--strict", action="store_true", help="sweep: exit 1 if any cell fails")
    common.add_argument("--seedless", action="store_true",
                        help="accepted for compatibility; all numerics are deterministic")
    common.add_argument("--max-steps", type=int, metavar="N", help="override flow.max_steps")
    sub = parser.add_subparsers(dest="command", required=True)
    p_solve = sub.add_parser("solve", parents=[common], help="run the flow to a steady state")
    p_solve.add_argument("spec")
    p_check = sub.add_parser("check", parents=[common], help="run a named verification suite")
    p_check.add_argument("suite", help=", ".join(SUITES))
    p_check.add_argument("spec")
    p_sweep = sub.add_parser("sweep", parents=[common], help="solve every cell of a parameter grid")
    p_sweep.add_argument("spec")
    args = parser.parse_args(argv)
    if args.command == "solve":
        return cmd_solve(args.spec, args.out, args.max_steps)
    if args.command == "check":
        return cmd_check(args.suite, args.spec, args.out, args.max_steps)
    return cmd_sweep(args.spec, args.out, args.max_steps, args.strict)


if __name__ == "__main__":
    sys.exit(main())
