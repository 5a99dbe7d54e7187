"""Convex bodies containing the origin, described by support or radial functions.

The support side lives on a grid of normal directions x, the radial side on
a grid of radial directions xi. For a smooth, uniformly convex body with
support function u the boundary point with normal x is u x + grad u, so

    r(x)  = sqrt(u^2 + |grad u|^2)      (distance of that point)
    xi(x) = (u x + grad u) / r          (its radial direction)
    b     = Hess u + u I                (radii of curvature as eigenvalues)
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import NotConvex, NotPositive
from .sphere import ScalarField, SphericalGrid, build_grid, grid_from_descriptor

CONVEXITY_FLOOR = 1e-10
_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def support_geometry(grid: SphericalGrid, u: np.ndarray):
    """Gradient, b, det b, extreme eigenvalues of b and r for nodal support values.

    Returns a tuple (grad, b, det, eig_min, eig_max, r); grad has shape (N, n),
    b has shape (N, n, n).
    """
    grad, hess = grid.derivatives(u)
    b = hess.copy()
    if grid.dim == 1:
        b[:, 0, 0] += u
        det = b[:, 0, 0].copy()
        eig_min = eig_max = det
    else:
        b[:, 0, 0] += u
        b[:, 1, 1] += u
        b11, b22, b12 = b[:, 0, 0], b[:, 1, 1], b[:, 0, 1]
        det = b11 * b22 - b12 * b12
        mean = 0.5 * (b11 + b22)
        spread = np.sqrt(0.25 * (b11 - b22) ** 2 + b12 * b12)
        eig_min, eig_max = mean - spread, mean + spread
    r = np.sqrt(u * u + np.einsum("ij,ij->i", grad, grad))
    return grad, b, det, eig_min, eig_max, r


def check_convex(grid: SphericalGrid, u, eig_min, eig_max):
    """Raise NotPositive / NotConvex unless u > 0 and b is uniformly positive definite."""
    if np.min(u) <= 0.0:
        i = int(np.argmin(u))
        raise NotPositive(f"support value {u[i]:.3g} <= 0 at node {i}; origin not interior")
    floor = CONVEXITY_FLOOR * max(1.0, float(np.max(eig_max)))
    if not np.all(eig_min > floor):
        i = int(np.argmin(np.where(np.isnan(eig_min), -np.inf, eig_min)))
        raise NotConvex(
            f"b = Hess u + u I not positive definite at node {i} "
            f"(direction {np.round(grid.nodes[i], 6).tolist()}, smallest eigenvalue {eig_min[i]:.3g})",
            node=i, direction=grid.nodes[i].copy(), eigenvalue=float(eig_min[i]),
        )


@dataclass(frozen=True, eq=False)
class SupportBody:
    """Support function on a normal grid together with its derived geometry.

    Construct with :func:`make_support_body`. ``validated`` is False for
    bodies produced by hull/Wulff constructions that may have corners.
    """

    field: ScalarField
    grad: np.ndarray
    b: np.ndarray
    det: np.ndarray
    eig_min: np.ndarray
    eig_max: np.ndarray
    r: np.ndarray
    validated: bool = True

    @property
    def grid(self) -> SphericalGrid:
        return self.field.grid

    @property
    def u(self) -> np.ndarray:
        return self.field.values

    @cached_property
    def xi(self) -> np.ndarray:
        """Radial direction of the boundary point with normal x, shape (N, n+1)."""
        point = self.u[:, None] * self.grid.nodes + np.einsum("ia,iak->ik", self.grad, self.grid.frame)
        return point / self.r[:, None]

    @cached_property
    def boundary_points(self) -> np.ndarray:
        return self.r[:, None] * self.xi

    def to_record(self) -> dict:
        return {"grid": self.grid.descriptor(), "u": self.u.tolist()}

    def scaled(self, factor: float) -> "SupportBody":
        return make_support_body(ScalarField(self.grid, factor * self.u), validate=self.validated)


@dataclass(frozen=True, eq=False)
class RadialBody:
    """Radial function on a grid of radial directions."""

    field: ScalarField

    def __post_init__(self):
        if np.min(self.field.values) <= 0.0:
            raise NotPositive("radial function must be positive")

    @property
    def grid(self) -> SphericalGrid:
        return self.field.grid

    @property
    def r(self) -> np.ndarray:
        return self.field.values


def make_support_body(u, grid: SphericalGrid | None = None, validate: bool = True) -> SupportBody:
    """Wrap support values (a ScalarField, or an array plus its grid) with cached geometry."""
    if not isinstance(u, ScalarField):
        if grid is None:
            raise ValueError("raw support values need their grid")
        u = ScalarField(grid, u)
    values = u.values
    grad, b, det, eig_min, eig_max, r = support_geometry(u.grid, values)
    if validate:
        check_convex(u.grid, values, eig_min, eig_max)
    return SupportBody(u, grad, b, det, eig_min, eig_max, r, validate)


def body_from_record(record: dict) -> SupportBody:
    grid = grid_from_descriptor(record["grid"])
    return make_support_body(ScalarField(grid, np.asarray(record["u"], dtype=float)))


def ellipsoid_support(grid: SphericalGrid, axes, center=None) -> ScalarField:
    """Support function of the axis-aligned ellipsoid with semi-axes ``axes``, optionally translated."""
    axes = np.asarray(axes, dtype=float)
    values = np.sqrt((grid.nodes**2) @ (axes**2))
    if center is not None:
        values = values + grid.nodes @ np.asarray(center, dtype=float)
    return ScalarField(grid, values)


def gauss_curvature(body: SupportBody) -> ScalarField:
    """K = 1 / det b at every normal direction."""
    if not body.validated:
        check_convex(body.grid, body.u, body.eig_min, body.eig_max)
    return ScalarField(body.grid, 1.0 / body.det)


def widths(body: SupportBody):
    """(minimal, maximal) width: extremes of u(x) + u(-x) over the nodes."""
    w = body.u + body.u[body.grid.antipode]
    return float(w.min()), float(w.max())


# ---------------------------------------------------------------------------
# support <-> radial duality


def _golden_minimize(objective, lo, hi, iterations=60):
    for _ in range(iterations):
        c = hi - _GOLDEN * (hi - lo)
        d = lo + _GOLDEN * (hi - lo)
        left = objective(c) < objective(d)
        hi = np.where(left, d, hi)
        lo = np.where(left, lo, c)
    mid = 0.5 * (lo + hi)
    return mid, objective(mid)


def _dual_extreme(grid: SphericalGrid, values: np.ndarray, targets: np.ndarray, mode: str,
                  refine: bool, chunk: int = 512) -> np.ndarray:
    """For each target t: min_y values(y)/<y,t> ("polar") or max_y values(y)<y,t> ("hull").

    Only y with <y,t> > 0 compete. A global scan over the grid nodes picks
    the basin; golden-section search on the grid interpolant refines it.
    """
    nodes = grid.nodes
    best = np.empty(len(targets))
    where = np.empty(len(targets), dtype=int)
    for start in range(0, len(targets), chunk):
        cos = targets[start:start + chunk] @ nodes.T
        with np.errstate(divide="ignore"):
            if mode == "polar":
                score = np.where(cos > 1e-12, values[None, :] / np.where(cos > 1e-12, cos, 1.0), np.inf)
            else:
                score = np.where(cos > 0.0, -values[None, :] * cos, np.inf)
        idx = np.argmin(score, axis=1)
        where[start:start + chunk] = idx
        best[start:start + chunk] = score[np.arange(len(idx)), idx]
    if refine:
        best = np.minimum(best, _refine(grid, values, targets, where, mode))
    return best if mode == "polar" else -best


def _refine(grid, values, targets, start_nodes, mode):
    interp = grid.interpolant(values)

    def score(cos, h):
        if mode == "polar":
            return np.where(cos > 1e-12, h / np.where(cos > 1e-12, cos, 1.0), np.inf)
        return np.where(cos > 0.0, -h * cos, np.inf)

    if grid.dim == 1:
        h = 2.0 * np.pi / grid.size
        t_angle = np.arctan2(targets[:, 1], targets[:, 0])
        at_angles = getattr(interp, "at_angles", None)

        def objective(theta):
            vals = at_angles(theta) if at_angles is not None else interp(
                np.stack([np.cos(theta), np.sin(theta)], axis=1))
            return score(np.cos(theta - t_angle), vals)

        centre = grid.angles[start_nodes]
        return _golden_minimize(objective, centre - h, centre + h)[1]

    nlat, nlon = grid.resolution
    theta0, phi0 = np.divmod(start_nodes, nlon)
    theta_grid, phi_grid = grid.angles
    theta, phi = theta_grid[theta0], phi_grid[phi0]
    dtheta, dphi = np.pi / nlat, 2.0 * np.pi / nlon

    def objective_at(th, ph):
        st = np.sin(th)
        cos = targets[:, 0] * st * np.cos(ph) + targets[:, 1] * st * np.sin(ph) + targets[:, 2] * np.cos(th)
        return score(cos, interp.at_angles(th, ph))

    current = objective_at(theta, phi)
    for _ in range(3):
        lo_t = np.maximum(theta - dtheta, 0.0)
        hi_t = np.minimum(theta + dtheta, np.pi)
        theta, val_t = _golden_minimize(lambda th: objective_at(th, phi), lo_t, hi_t, 40)
        phi, current = _golden_minimize(lambda ph: objective_at(theta, ph), phi - dphi, phi + dphi, 40)
    return current


def radial_from_support(body, radial_grid: SphericalGrid | None = None, refine: bool = True) -> RadialBody:
    """Radial function of the Wulff shape of the support data: r(xi) = min_x u(x) / <x, xi>.

    For a genuine support function this is the body's own radial function.
    ``refine=False`` keeps the exact polytope given by the nodal halfspaces.
    """
    field = body.field if isinstance(body, SupportBody) else body
    radial_grid = radial_grid or field.grid
    r = _dual_extreme(field.grid, np.asarray(field.values), radial_grid.nodes, "polar", refine)
    return RadialBody(ScalarField(radial_grid, r))


def support_from_radial(body, normal_grid: SphericalGrid | None = None, refine: bool = True,
                        validate: bool = False) -> SupportBody:
    """Support function of the convex hull of the points r(xi) xi: u(x) = max_xi r(xi) <x, xi>."""
    field = body.field if isinstance(body, RadialBody) else body
    normal_grid = normal_grid or field.grid
    u = _dual_extreme(field.grid, np.asarray(field.values), normal_grid.nodes, "hull", refine)
    return make_support_body(ScalarField(normal_grid, u), validate=validate)


def _finer(grid: SphericalGrid) -> SphericalGrid:
    if grid.dim == 1:
        return build_grid(1, 8 * grid.size, grid.scheme)
    nlat, nlon = grid.resolution
    return build_grid(2, (2 * nlat, 2 * nlon), grid.scheme)


def wulff_shape(h, radial_grid: SphericalGrid | None = None, normal_grid: SphericalGrid | None = None,
                refine: bool = True) -> SupportBody:
    """Support body of the intersection of the halfspaces <y, x> <= h(x).

    A uniformly convex support function is returned as is. Otherwise the
    boundary points r(xi) xi come from the polar formula on a radial grid
    (by default finer than h's) and the result is the support function of
    their polygonal hull, which cannot overshoot at the corners of the shape.
    """
    field = h.field if isinstance(h, SupportBody) else h
    if np.min(field.values) <= 0.0:
        raise NotPositive("Wulff shapes need a positive generating function")
    normal_grid = normal_grid or field.grid
    if normal_grid is field.grid:
        try:
            return make_support_body(field)
        except NotConvex:
            pass
    if radial_grid is None:
        radial_grid = _finer(field.grid) if refine else field.grid
    radial = radial_from_support(field, radial_grid, refine)
    hull = support_from_radial(radial, normal_grid, refine=False)
    if normal_grid is not field.grid:
        return hull
    # every boundary point satisfies <y, x> <= h(x) up to round-off
    return make_support_body(ScalarField(normal_grid, np.minimum(hull.u, field.values)), validate=False)
