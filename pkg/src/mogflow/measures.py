"""Dual volumes, Orlicz energies, the normalization eta and the image-measure densities.

Integrals over radial directions are evaluated either on a radial grid or,
for smooth bodies, pulled back to the normal grid through
dxi = u det(b) / r^(n+1) dx. The pulled-back form is the default inside the
flow because it needs no radial resampling and is exact for the discrete body.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .convex import RadialBody, SupportBody, make_support_body, radial_from_support
from .errors import (
    DegenerateDenominator,
    GridMismatch,
    HemisphereConcentration,
    InversionOutOfRange,
    NotInteriorBody,
    NotMonotone,
    NotPositive,
    OutOfRange,
    ZeroPsi,
)
from .expr import DirectionFunction
from .mofunc import MOFunction, PsiHat, invert_many, psi_from_Psi
from .sphere import ScalarField, SphericalGrid, direction_sample

PSI_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class ProblemTriple:
    """Problem data: G, Psi, the density p_lambda of lambda and the density f of mu.

    ``p_lambda`` and ``f`` accept anything :class:`DirectionFunction` does
    (a number, an expression string, a callable, or a ScalarField).
    """

    G: MOFunction
    Psi: MOFunction
    p_lambda: DirectionFunction = 1.0
    f: DirectionFunction = 1.0
    dim: int = 1

    def __post_init__(self):
        object.__setattr__(self, "p_lambda", DirectionFunction(self.p_lambda))
        object.__setattr__(self, "f", DirectionFunction(self.f))
        for label, data in (("p_lambda", self.p_lambda), ("f", self.f)):
            if data.constant is not None and data.constant <= 0:
                raise NotPositive(f"{label} must be positive")

    @cached_property
    def psi(self) -> MOFunction:
        return psi_from_Psi(self.Psi)

    @property
    def radial_data_free(self) -> bool:
        """True when neither G nor p_lambda depends on the radial direction."""
        return self.G.direction_free and self.p_lambda.constant is not None

    def validate_on(self, grid: SphericalGrid):
        """Check positivity of f and p_lambda at the grid nodes."""
        for label, data in (("p_lambda", self.p_lambda), ("f", self.f)):
            values = data.at_nodes(grid)
            if not np.all(values > 0):
                i = int(np.argmin(values))
                raise NotPositive(f"{label} = {values[i]:.3g} at node {i}; must be positive")


@dataclass(frozen=True, eq=False)
class MeasureDensity:
    """Density with respect to dx on the normal grid."""

    grid: SphericalGrid
    values: np.ndarray

    def __post_init__(self):
        values = self.grid.check(self.values)
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValueError("measure densities must be finite and nonnegative")

    def total_mass(self) -> float:
        return self.grid.integrate(self.values)

    def to_csv(self, path):
        """Write one row per node: direction components, density value, quadrature weight."""
        dim = self.grid.dim
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow([f"x{i + 1}" for i in range(dim + 1)] + ["density", "weight"])
            for node, value, weight in zip(self.grid.nodes, self.values, self.grid.weights):
                writer.writerow([repr(float(c)) for c in node] + [repr(float(value)), repr(float(weight))])


def _at(data: DirectionFunction, directions):
    return data.constant if data.constant is not None else data(directions)


def _varies(func) -> bool:
    if isinstance(func, DirectionFunction):
        return func.constant is None
    return not func.direction_free


def _xi_or_none(body: SupportBody, *funcs):
    return body.xi if any(_varies(f) for f in funcs) else None


def _radial_weight(body: SupportBody) -> np.ndarray:
    """Pull-back factor u det(b) / r^(n+1) of dxi to dx."""
    return body.u * body.det / body.r ** (body.grid.dim + 1)


def dual_volume(G: MOFunction, p_lambda, body, side: str = "auto") -> float:
    """Integral of G(r(xi), xi) p_lambda(xi) over radial directions.

    ``side="auto"`` integrates RadialBody input on its grid and pulls smooth
    SupportBody input back to the normal grid; ``side="radial"`` converts a
    SupportBody to its radial function first.
    """
    p_lambda = DirectionFunction(p_lambda)
    if isinstance(body, SupportBody) and (side == "radial" or not body.validated):
        body = radial_from_support(body)
    if isinstance(body, RadialBody):
        grid = body.grid
        dirs = grid.nodes
        xi = None if G.direction_free else dirs
        return grid.integrate(G.eval(body.r, xi) * _at(p_lambda, dirs))
    xi = _xi_or_none(body, G, p_lambda)
    density = G.eval(body.r, xi) * _at(p_lambda, xi) * _radial_weight(body)
    return body.grid.integrate(density)


def orlicz_energy(f, Psi: MOFunction, body: SupportBody) -> float:
    """Integral of f(x) Psi(u(x), x) over normal directions."""
    f = DirectionFunction(f)
    grid = body.grid
    x = None if Psi.direction_free else grid.nodes
    return grid.integrate(f.at_nodes(grid) * Psi.eval(body.u, x))


def orlicz_energy_eps(f, psi_hat: PsiHat, body: SupportBody) -> float:
    """Integral of f(x) Psi_hat_eps(u(x), x), the energy of the regularized flow."""
    f = DirectionFunction(f)
    grid = body.grid
    x = None if psi_hat.direction_free else grid.nodes
    return grid.integrate(f.at_nodes(grid) * psi_hat.antiderivative(body.u, x))


def _psi_values(psi_impl, u, grid):
    x = None if getattr(psi_impl, "direction_free", True) else grid.nodes
    return psi_impl(u, x)


def eta(triple: ProblemTriple, body: SupportBody, psi_impl=None, side: str = "normal") -> float:
    """Normalization ratio: int f psi(u) dx over int r G_z(r, xi) p_lambda(xi) dxi.

    The denominator is pulled back to normal directions by default;
    ``side="radial"`` evaluates it on the radial function instead.
    """
    grid = body.grid
    psi_impl = psi_impl if psi_impl is not None else triple.psi
    numerator = grid.integrate(triple.f.at_nodes(grid) * _psi_values(psi_impl, body.u, grid))
    if side == "radial":
        radial = radial_from_support(body)
        dirs = radial.grid.nodes
        denominator = radial.grid.integrate(
            triple.G.zderiv(radial.r, None if triple.G.direction_free else dirs) * _at(triple.p_lambda, dirs))
    else:
        xi = _xi_or_none(body, triple.G, triple.p_lambda)
        denominator = grid.integrate(
            triple.G.zderiv(body.r, xi) * _at(triple.p_lambda, xi) * _radial_weight(body))
    if not (np.isfinite(denominator) and denominator > 0):
        raise DegenerateDenominator(f"eta denominator is {denominator!r}")
    return numerator / denominator


def eta_eps(triple: ProblemTriple, psi_hat: PsiHat, body: SupportBody, side: str = "normal") -> float:
    return eta(triple, body, psi_impl=psi_hat, side=side)


def gauss_image_density(triple: ProblemTriple, body: SupportBody, with_psi: bool = False,
                        u_floor: float | None = None) -> MeasureDensity:
    """Density in x of the image measure: u r^-n G_z(r, xi) p_lambda(xi) det(b) [/ psi(u, x)]."""
    grid = body.grid
    floor = 1e-12 * float(np.max(body.u)) if u_floor is None else u_floor
    if np.min(body.u) <= floor:
        raise NotInteriorBody(f"min u = {np.min(body.u):.3g} is below the floor {floor:.3g}")
    xi = _xi_or_none(body, triple.G, triple.p_lambda)
    n = grid.dim
    density = body.u * body.r ** (-n) * triple.G.deriv(body.r, xi) * _at(triple.p_lambda, xi) * body.det
    if with_psi:
        psi = _psi_values(triple.psi, body.u, grid)
        if np.min(psi) < PSI_FLOOR * np.max(psi) or np.min(psi) <= 0:
            i = int(np.argmin(psi))
            raise ZeroPsi(f"psi(u, x) = {psi[i]:.3g} at node {i}")
        density = density / psi
    return MeasureDensity(grid, np.broadcast_to(density, (grid.size,)).copy())


def measure_of_set(density: MeasureDensity, indicator) -> float:
    """Mass of the node set selected by a boolean mask."""
    mask = np.asarray(indicator, dtype=bool)
    if mask.shape != (density.grid.size,):
        raise GridMismatch(f"mask has shape {mask.shape}, expected ({density.grid.size},)")
    return float(np.dot(density.grid.weights[mask], density.values[mask]))


@dataclass
class VariationalReport:
    fd_derivative: float
    measure_integral: float
    rel_gap: float
    abs_gap: float
    fd_half: float
    richardson: float
    scale: float
    details: dict = field(default_factory=dict)


def variational_check(triple: ProblemTriple, base_u: ScalarField, g: ScalarField, eps_fd: float,
                      radial_grid: SphericalGrid | None = None) -> VariationalReport:
    """Compare the derivative of the dual volume of Wulff shapes with the image-measure integral.

    f_t solves Psi(f_t(x), x) = Psi(f(x), x) + t g(x); the finite-difference
    side differentiates V(t) = dual volume of the Wulff shape [f_t] at t = 0,
    the measure side integrates g against the psi-weighted image density of
    [f] itself. ``rel_gap`` is relative to |measure_integral|, or to
    int |g| dC when that integral vanishes by symmetry.
    """
    grid = base_u.grid
    if g.grid is not grid:
        raise GridMismatch("g and base_u live on different grids")
    if np.min(base_u.values) <= 0:
        raise NotPositive("base_u must be positive")
    x = None if triple.Psi.direction_free else grid.nodes
    level = triple.Psi.eval(base_u.values, x)

    def volume(t):
        try:
            f_t = invert_many(triple.Psi, level + t * g.values, x)
        except (OutOfRange, NotMonotone) as exc:
            raise InversionOutOfRange(f"Psi(f) + {t:g} g is outside the range of Psi: {exc}") from None
        radial = radial_from_support(ScalarField(grid, f_t), radial_grid)
        return dual_volume(triple.G, triple.p_lambda, radial)

    fd = (volume(eps_fd) - volume(-eps_fd)) / (2.0 * eps_fd)
    half = 0.5 * eps_fd
    fd_half = (volume(half) - volume(-half)) / (2.0 * half)
    richardson = (4.0 * fd_half - fd) / 3.0

    body = make_support_body(base_u)
    density = gauss_image_density(triple, body, with_psi=True).values
    measure_integral = grid.integrate(g.values * density)
    scale = abs(measure_integral)
    if scale < 1e-8 * grid.integrate(np.abs(g.values) * density):
        scale = grid.integrate(np.abs(g.values) * density)
    abs_gap = abs(fd - measure_integral)
    return VariationalReport(fd, measure_integral, abs_gap / scale, abs_gap, fd_half, richardson, scale)


# ---------------------------------------------------------------------------
# discrete measures


def _atom_arrays(atoms):
    directions = np.array([np.asarray(d, dtype=float) for d, _ in atoms])
    masses = np.array([float(m) for _, m in atoms])
    if np.any(masses <= 0):
        raise NotPositive("atom masses must be positive")
    norms = np.linalg.norm(directions, axis=1)
    return directions / norms[:, None], masses


def mollify_measure(atoms, kappa: float, grid: SphericalGrid) -> ScalarField:
    """Smooth positive density approximating a sum of point masses.

    Each atom (direction, mass) becomes exp(kappa (<x, x_i> - 1)) scaled so
    that its discrete integral on ``grid`` equals the mass.
    """
    if kappa <= 0:
        raise NotPositive("kappa must be positive")
    directions, masses = _atom_arrays(atoms)
    kernels = np.exp(kappa * (grid.nodes @ directions.T - 1.0))
    totals = grid.weights @ kernels
    return ScalarField(grid, kernels @ (masses / totals))


def hemisphere_margin(measure, grid: SphericalGrid | None = None, dim: int | None = None,
                      samples: int | None = None):
    """min over unit v of int <x, v>_+ dmu and the minimizing v.

    ``measure`` is a list of (direction, mass) atoms or a nodal density
    (ScalarField / MeasureDensity). The minimum is taken over a dense
    direction sample.
    """
    if isinstance(measure, (ScalarField, MeasureDensity)):
        grid = measure.grid
        points, masses = grid.nodes, grid.weights * np.asarray(measure.values)
    else:
        points, masses = _atom_arrays(measure)
    dim = points.shape[1] - 1 if dim is None else dim
    samples = samples or (4096 if dim == 1 else 20000)
    best_value, best_dir = np.inf, None
    probes = direction_sample(dim, samples)
    for start in range(0, samples, 1024):
        v = probes[start:start + 1024]
        value = np.maximum(v @ points.T, 0.0) @ masses
        i = int(np.argmin(value))
        if value[i] < best_value:
            best_value, best_dir = float(value[i]), v[i]
    return best_value, best_dir


def check_not_concentrated(measure, threshold: float = 1e-3, grid: SphericalGrid | None = None):
    """Raise HemisphereConcentration if some closed hemisphere carries (almost) all the mass.

    The test is min_v int <x, v>_+ dmu > threshold * total mass.
    """
    if isinstance(measure, (ScalarField, MeasureDensity)):
        total = measure.grid.integrate(np.asarray(measure.values))
    else:
        total = float(sum(m for _, m in measure))
    margin, direction = hemisphere_margin(measure, grid)
    if margin <= threshold * total:
        raise HemisphereConcentration(
            f"measure is concentrated on a closed hemisphere: the side opposite "
            f"{np.round(direction, 4).tolist()} carries only {margin:.3g} "
            f"(threshold {threshold * total:.3g})",
            direction=direction, margin=margin)
    return margin
