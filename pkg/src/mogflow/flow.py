"""Normalized Gauss-curvature-type flows of support functions and their steady states.

The evolution is

    du/dt = -f(x) psi(u, x) r^n / (G_z(r, xi) p_lambda(xi) det b) + eta(t) u

where eta(t) is the ratio that keeps the dual volume fixed. In the
regularized mode psi is replaced by psi_hat_eps. Steady states solve the
Monge-Ampere type equation

    u r^-n G_z(r, xi) p_lambda(xi) det b = gamma f psi(u, x),   gamma = 1 / eta.

Time stepping is explicit midpoint RK2 with eta recomputed at each stage.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .convex import SupportBody, check_convex, make_support_body, support_geometry, widths
from .errors import MogflowError, StepCollapse
from .measures import ProblemTriple
from .mofunc import delta_constant, regularize
from .sphere import ScalarField

SERIES_COLUMNS = ("step", "t", "dt", "eta", "J", "V_G", "residual_norm", "min_u", "max_u",
                  "w_minus", "w_plus", "min_eig_b", "max_eig_b")
CONVERGED, MAX_STEPS, COLLAPSED = "Converged", "MaxSteps", "Collapsed"
MODES = ("plain", "regularized")


@dataclass
class FlowConfig:
    """Everything a run needs. ``dt_init=None`` starts at the stability bound.

    ``dt_scale`` multiplies every step-size limit (dt_init, dt_max and the
    stability bounds); halving it halves the whole step sequence.
    """

    triple: ProblemTriple
    initial: SupportBody
    mode: str = "plain"
    epsilon_schedule: tuple = ()
    dt_init: float | None = None
    dt_min: float = 1e-12
    dt_max: float = 0.5
    safety: float = 0.8
    tol_residual: float = 1e-4
    tol_energy_slope: float = 1e-5
    max_steps: int = 200_000
    u_floor: float | None = None
    dt_scale: float = 1.0
    min_steps: int = 1
    slope_window: int = 10

    def __post_init__(self):
        if isinstance(self.initial, ScalarField):
            self.initial = make_support_body(self.initial)
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0 < self.safety <= 1:
            raise ValueError("safety must lie in (0, 1]")
        if self.dt_init is not None and not self.dt_min < self.dt_init <= self.dt_max:
            raise ValueError("need dt_min < dt_init <= dt_max")
        if not 0 < self.dt_min < self.dt_max:
            raise ValueError("need 0 < dt_min < dt_max")
        if self.tol_residual <= 0 or self.tol_energy_slope <= 0:
            raise ValueError("tolerances must be positive")
        if self.dt_scale <= 0 or self.max_steps < 1 or self.min_steps < 1 or self.slope_window < 1:
            raise ValueError("dt_scale, max_steps, min_steps and slope_window must be positive")
        schedule = tuple(float(e) for e in self.epsilon_schedule)
        if any(b >= a for a, b in zip(schedule, schedule[1:])) or any(e <= 0 for e in schedule):
            raise ValueError("epsilon_schedule must be positive and strictly decreasing")
        self.epsilon_schedule = schedule
        if self.u_floor is None:
            self.u_floor = 1e-6 * float(np.max(self.initial.u))


@dataclass
class FlowState:
    body: SupportBody
    t: float
    dt: float
    eta: float
    energy: float
    dual_vol: float
    velocity: np.ndarray
    residual_norm: float
    step: int = 0
    rejected: int = 0
    dt_bound: float = np.inf
    diagnostics: deque = field(default_factory=lambda: deque(maxlen=16))


@dataclass
class FlowResult:
    body: SupportBody
    gamma: float
    residual_field: ScalarField
    residual_norm: float
    series: dict
    status: str
    steps: int
    rejected: int
    message: str = ""
    epsilon: float | None = None
    monitors: dict = field(default_factory=dict)
    stages: list = field(default_factory=list)
    gaps: list = field(default_factory=list)
    width_bracket: tuple | None = None
    widths_ok: bool | None = None

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED


class _Evaluator:
    """Pointwise flow quantities for one grid and one choice of psi."""

    def __init__(self, triple: ProblemTriple, grid, psi_impl, energy_density, energy_free=True):
        self.triple = triple
        self.grid = grid
        self.psi_impl = psi_impl
        self.energy_density = energy_density
        self.f = triple.f.at_nodes(grid)
        self.needs_xi = not triple.G.direction_free or triple.p_lambda.constant is None
        self.psi_x = None if getattr(psi_impl, "direction_free", True) else grid.nodes
        self.energy_x = None if energy_free else grid.nodes

    def geometry(self, u):
        grad, b, det, eig_min, eig_max, r = support_geometry(self.grid, u)
        xi = None
        if self.needs_xi:
            point = u[:, None] * self.grid.nodes + np.einsum("ia,iak->ik", grad, self.grid.frame)
            xi = point / r[:, None]
        return grad, b, det, eig_min, eig_max, r, xi

    def p_at(self, xi):
        p = self.triple.p_lambda
        return p.constant if p.constant is not None else p(xi)

    def terms(self, u, geo):
        """Return (f psi, G_z p, velocity-free speed F/det, eta)."""
        _, _, det, _, _, r, xi = geo
        n = self.grid.dim
        f_psi = self.f * self.psi_impl(u, self.psi_x)
        gz_p = self.triple.G.deriv(r, xi) * self.p_at(xi)
        speed = f_psi * r**n / (gz_p * det)
        numerator = self.grid.integrate(f_psi)
        denominator = self.grid.integrate(gz_p * u * det / r**n)
        if not (np.isfinite(denominator) and denominator > 0 and np.all(np.isfinite(speed))):
            raise _Invalid("degenerate normalization or curvature")
        return f_psi, gz_p, speed, numerator / denominator

    def velocity(self, u, geo):
        f_psi, gz_p, speed, eta = self.terms(u, geo)
        return self.grid.polar_filter(eta * u - speed), eta, f_psi, speed

    def dual_volume(self, u, geo):
        _, _, det, _, _, r, xi = geo
        n = self.grid.dim
        return self.grid.integrate(self.triple.G.eval(r, xi) * self.p_at(xi) * u * det / r ** (n + 1))

    def energy(self, u):
        return self.grid.integrate(self.f * self.energy_density(u, self.energy_x))


class _Invalid(Exception):
    pass


def _make_evaluator(config: FlowConfig, psi_hat=None) -> _Evaluator:
    triple, grid = config.triple, config.initial.grid
    if psi_hat is None:
        return _Evaluator(triple, grid, triple.psi, triple.Psi.eval, triple.Psi.direction_free)
    return _Evaluator(triple, grid, psi_hat, psi_hat.antiderivative, psi_hat.direction_free)


def _check_state(evaluator, u, config):
    if not np.all(np.isfinite(u)):
        raise _Invalid("non-finite support values")
    if np.min(u) <= config.u_floor:
        raise _Invalid(f"min u = {np.min(u):.3g} below floor {config.u_floor:.3g}")
    geo = evaluator.geometry(u)
    try:
        check_convex(evaluator.grid, u, geo[3], geo[4])
    except MogflowError as exc:
        raise _Invalid(str(exc)) from None
    return geo


def _stability_bound(state_u, velocity, speed, eig_min, grid, config):
    with np.errstate(divide="ignore"):
        crossing = np.min(state_u / np.abs(velocity))
    diffusion = float(np.max(speed / eig_min))
    parabolic = 2.0 / (diffusion * grid.stiffness)
    return config.dt_scale * config.safety * min(crossing, parabolic)


def _body_from(grid, u, geo):
    grad, b, det, eig_min, eig_max, r, _ = geo
    return SupportBody(ScalarField(grid, u), grad, b, det, eig_min, eig_max, r, True)


def _build_state(evaluator, u, geo, config, t, dt, step, rejected):
    v, eta, f_psi, speed = evaluator.velocity(u, geo)
    residual = u * f_psi / speed - f_psi / eta
    residual_norm = float(np.max(np.abs(residual)) / np.max(np.abs(f_psi / eta)))
    state = FlowState(
        body=_body_from(evaluator.grid, u, geo), t=t, dt=dt, eta=eta,
        energy=evaluator.energy(u), dual_vol=evaluator.dual_volume(u, geo),
        velocity=v, residual_norm=residual_norm, step=step, rejected=rejected,
    )
    bound = _stability_bound(u, v, speed, geo[3], evaluator.grid, config)
    state.dt_bound = bound
    return state, bound


def _row(state: FlowState, dt_used: float) -> tuple:
    body = state.body
    w_minus, w_plus = widths(body)
    return (state.step, state.t, dt_used, state.eta, state.energy, state.dual_vol, state.residual_norm,
            float(body.u.min()), float(body.u.max()), w_minus, w_plus,
            float(body.eig_min.min()), float(body.eig_max.max()))


def _advance(state: FlowState, evaluator: _Evaluator, config: FlowConfig, dt: float):
    """One accepted RK2 step starting from trial size dt; returns (new_state, bound, dt_used)."""
    u, v0 = state.body.u, state.velocity
    rejected = 0
    dt_min = config.dt_min * config.dt_scale
    last_reason = ""
    while True:
        try:
            if dt > state.dt_bound * (1.0 + 1e-12):
                raise _Invalid(f"dt = {dt:.3g} exceeds the stability bound {state.dt_bound:.3g}")
            u_mid = u + 0.5 * dt * v0
            geo_mid = _check_state(evaluator, u_mid, config)
            v_mid = evaluator.velocity(u_mid, geo_mid)[0]
            u_new = u + dt * v_mid
            geo_new = _check_state(evaluator, u_new, config)
            new_state, bound = _build_state(evaluator, u_new, geo_new, config, state.t + dt, dt,
                                            state.step + 1, state.rejected + rejected)
            return new_state, bound, dt
        except _Invalid as exc:
            last_reason = str(exc)
            rejected += 1
            dt *= 0.5
            if dt < dt_min:
                raise StepCollapse(
                    f"step size fell below dt_min at t = {state.t:.6g}: {last_reason}",
                    diagnostics={"t": state.t, "step": state.step, "reason": last_reason,
                                 "min_u": float(u.min()), "node": int(np.argmin(u)),
                                 "min_eig_b": float(state.body.eig_min.min())},
                ) from None


def initial_state(config: FlowConfig, psi_hat=None):
    evaluator = _make_evaluator(config, psi_hat)
    u = np.array(config.initial.u)
    try:
        geo = _check_state(evaluator, u, config)
    except _Invalid as exc:
        raise StepCollapse(f"initial body is not admissible: {exc}") from None
    state, bound = _build_state(evaluator, u, geo, config, 0.0, 0.0, 0, 0)
    dt = bound if config.dt_init is None else config.dt_init * config.dt_scale
    state.dt = min(dt, config.dt_max * config.dt_scale)
    return state, evaluator


def velocity(state: FlowState, triple: ProblemTriple, psi_impl=None) -> ScalarField:
    """Flow velocity at the state's body; ``psi_impl`` defaults to psi (pass a PsiHat to regularize)."""
    psi_impl = triple.psi if psi_impl is None else psi_impl
    body = state.body if isinstance(state, FlowState) else state
    evaluator = _Evaluator(triple, body.grid, psi_impl, lambda u, x: np.zeros_like(u))
    try:
        v = evaluator.velocity(np.array(body.u), evaluator.geometry(np.array(body.u)))[0]
    except _Invalid as exc:
        from .errors import DegenerateDenominator
        raise DegenerateDenominator(str(exc)) from None
    return ScalarField(body.grid, v)


def step(state: FlowState, config: FlowConfig, psi_hat=None) -> FlowState:
    """Advance one accepted RK2 step (rejecting and halving as needed)."""
    evaluator = _make_evaluator(config, psi_hat)
    new_state, bound, dt_used = _advance(state, evaluator, config, state.dt)
    new_state.dt = min(1.2 * dt_used, config.dt_max * config.dt_scale, bound)
    return new_state


def residual(body: SupportBody, gamma: float, triple: ProblemTriple, psi_impl=None) -> ScalarField:
    """R = u r^-n G_z(r, xi) p_lambda(xi) det b - gamma f psi(u, x)."""
    psi_impl = triple.psi if psi_impl is None else psi_impl
    grid = body.grid
    n = grid.dim
    xi = body.xi if (not triple.G.direction_free or triple.p_lambda.constant is None) else None
    p = triple.p_lambda.constant if triple.p_lambda.constant is not None else triple.p_lambda(xi)
    lhs = body.u * body.r ** (-n) * triple.G.deriv(body.r, xi) * p * body.det
    x = None if getattr(psi_impl, "direction_free", True) else grid.nodes
    rhs = gamma * triple.f.at_nodes(grid) * psi_impl(body.u, x)
    return ScalarField(grid, lhs - rhs)


def residual_norm(body: SupportBody, gamma: float, triple: ProblemTriple, psi_impl=None) -> float:
    """max |R| relative to max |gamma f psi(u, x)|."""
    psi_impl = triple.psi if psi_impl is None else psi_impl
    grid = body.grid
    x = None if getattr(psi_impl, "direction_free", True) else grid.nodes
    scale = np.max(np.abs(gamma * triple.f.at_nodes(grid) * psi_impl(body.u, x)))
    return float(np.max(np.abs(residual(body, gamma, triple, psi_impl).values)) / scale)


def _energy_slope(times, energies, window):
    m = min(window, len(times) - 1)
    dt = times[-1] - times[-1 - m]
    if m < 1 or dt <= 0:
        return np.inf
    return abs(energies[-1] - energies[-1 - m]) / dt / max(abs(energies[-1]), 1e-300)


def _series_dict(rows):
    table = np.array(rows, dtype=float).reshape(-1, len(SERIES_COLUMNS))
    out = {name: table[:, i] for i, name in enumerate(SERIES_COLUMNS)}
    out["step"] = out["step"].astype(int)
    return out


def _monitors(series, v0):
    eta = series["eta"]
    J = series["J"]
    rises = np.diff(J) > 1e-12 * np.abs(J[:-1])
    return {
        "max_dual_volume_drift": float(np.max(np.abs(series["V_G"] - v0)) / abs(v0)),
        "eta_min": float(eta.min()),
        "eta_max": float(eta.max()),
        "eta_ratio": float(eta.max() / eta.min()) if eta.min() > 0 else np.inf,
        "energy_increases": int(np.count_nonzero(rises)),
        "min_eig_b": float(series["min_eig_b"].min()),
        "max_eig_b": float(series["max_eig_b"].max()),
        "min_u": float(series["min_u"].min()),
    }


def _run_single(config: FlowConfig, psi_hat=None, max_steps=None) -> FlowResult:
    max_steps = config.max_steps if max_steps is None else max_steps
    try:
        state, evaluator = initial_state(config, psi_hat)
    except (StepCollapse, MogflowError) as exc:
        body = config.initial
        empty = {name: np.zeros(0) for name in SERIES_COLUMNS}
        return FlowResult(body, np.nan, ScalarField(body.grid, np.zeros(body.grid.size)), np.inf, empty,
                          COLLAPSED, 0, 0, str(exc), getattr(psi_hat, "epsilon", None))
    rows = [_row(state, 0.0)]
    times, energies = [state.t], [state.energy]
    status, message = MAX_STEPS, f"stopped after {max_steps} steps"
    while state.step < max_steps:
        try:
            new_state, bound, dt_used = _advance(state, evaluator, config, state.dt)
        except StepCollapse as exc:
            status, message = COLLAPSED, str(exc)
            state.diagnostics.append(exc.diagnostics)
            break
        new_state.dt = min(1.2 * dt_used, config.dt_max * config.dt_scale, bound)
        new_state.diagnostics = state.diagnostics
        state = new_state
        rows.append(_row(state, dt_used))
        times.append(state.t)
        energies.append(state.energy)
        if state.step >= config.min_steps and state.residual_norm <= config.tol_residual \
                and _energy_slope(times, energies, config.slope_window) <= config.tol_energy_slope:
            status, message = CONVERGED, f"converged at t = {state.t:.6g}"
            break
    series = _series_dict(rows)
    gamma = 1.0 / state.eta
    psi_impl = psi_hat if psi_hat is not None else config.triple.psi
    res = residual(state.body, gamma, config.triple, psi_impl)
    return FlowResult(
        body=state.body, gamma=gamma, residual_field=res, residual_norm=state.residual_norm,
        series=series, status=status, steps=state.step, rejected=state.rejected, message=message,
        epsilon=getattr(psi_hat, "epsilon", None), monitors=_monitors(series, series["V_G"][0]),
    )


def run(config: FlowConfig) -> FlowResult:
    """Evolve to a steady state (plain mode) or through the epsilon continuation (regularized mode)."""
    if config.mode == "regularized":
        return continuation_run(config)
    return _run_single(config)


def default_schedule(config: FlowConfig, stages: int = 6) -> tuple:
    """eps_k = eps_0 2^-k with eps_0 = min(delta / 2, c0 / 10), c0 the least radius of the start body."""
    delta = delta_constant(config.triple.G, config.initial.grid.dim)
    c0 = float(np.min(config.initial.u))
    eps0 = min(delta / 2.0, c0 / 10.0)
    return tuple(eps0 * 0.5**k for k in range(stages))


def continuation_run(config: FlowConfig) -> FlowResult:
    """Solve the regularized problem for each epsilon in turn, warm-starting each stage.

    The result is the last stage's, with all stages attached, the gaps
    max |u_k - u_(k+1)| between consecutive stage solutions, and a width
    monitor: every stage's widths must stay inside [0.1, 10] times the
    width range seen in the first stage.
    """
    schedule = config.epsilon_schedule or default_schedule(config)
    grid = config.initial.grid
    stages = []
    body = config.initial
    remaining = config.max_steps
    for eps in schedule:
        psi_hat = regularize(config.triple.Psi, config.triple.G, eps, grid.dim)
        stage_config = replace(config, initial=body, epsilon_schedule=())
        result = _run_single(stage_config, psi_hat, max_steps=remaining)
        stages.append(result)
        remaining -= result.steps
        if result.status != CONVERGED:
            break
        body = result.body
    final = stages[-1]
    gaps = [float(np.max(np.abs(a.body.u - b.body.u))) for a, b in zip(stages, stages[1:])]
    first = stages[0].series
    bracket = (0.1 * float(first["w_minus"].min()), 10.0 * float(first["w_plus"].max()))
    widths_ok = all(
        s.series["w_minus"].size == 0
        or (s.series["w_minus"].min() >= bracket[0] and s.series["w_plus"].max() <= bracket[1])
        for s in stages)
    all_converged = len(stages) == len(schedule) and all(s.converged for s in stages)
    status = CONVERGED if all_converged else (final.status if final.status != CONVERGED else MAX_STEPS)
    message = final.message if all_converged else f"stage {len(stages)} of {len(schedule)}: {final.message}"
    return replace(final, status=status, message=message, stages=stages, gaps=gaps,
                   width_bracket=bracket, widths_ok=widths_ok,
                   steps=sum(s.steps for s in stages), rejected=sum(s.rejected for s in stages))
