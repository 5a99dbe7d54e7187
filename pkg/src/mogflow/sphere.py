"""Grids on S^1 and S^2: nodes, quadrature, frame derivatives, interpolation.

Nodes are stored flat. On S^2 the ordering is latitude-major, so
``values.reshape(nlat, nlon)`` recovers the (colatitude, longitude) layout.
The local orthonormal frame is e1 = d/dtheta (and e2 = d/dphi / sin(theta)
on S^2); gradients and Hessians are expressed in that frame.

Schemes
-------
S^1 : ``"spectral"`` (FFT, default) or ``"fd4"`` (4th order central stencils).
S^2 : ``"dfs"`` (double Fourier sphere, default) or ``"fd2"`` (2nd order
      stencils with ghost rows reflected across the pole).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicSpline, RectBivariateSpline

from .errors import GridMismatch, NotUnitVector, ResolutionTooSmall, UnsupportedDimension

SCHEMES = {1: ("spectral", "fd4"), 2: ("dfs", "fd2")}
MIN_RESOLUTION = 16


def _fejer_weights(nlat):
    # Fejer's first rule on the midpoint colatitudes, integrating sin(theta) d(theta)
    theta = (np.arange(nlat) + 0.5) * np.pi / nlat
    k = np.arange(1, nlat // 2 + 1)
    terms = np.cos(2.0 * np.outer(theta, k)) / (4.0 * k**2 - 1.0)
    return 2.0 / nlat * (1.0 - 2.0 * terms.sum(axis=1))


@dataclass(frozen=True, eq=False)
class SphericalGrid:
    """Discretization of S^n with quadrature and derivative operators.

    Build with :func:`build_grid`. Instances compare by identity, which makes
    "same grid" checks cheap and strict.
    """

    dim: int
    resolution: tuple
    scheme: str
    nodes: np.ndarray
    weights: np.ndarray
    frame: np.ndarray

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @property
    def operator_spec(self) -> dict:
        return {"scheme": self.scheme}

    @cached_property
    def area(self) -> float:
        return float(self.weights.sum())

    def descriptor(self) -> dict:
        return {"dim": self.dim, "resolution": list(self.resolution), "scheme": self.scheme}

    # -- structure helpers -------------------------------------------------

    @cached_property
    def angles(self) -> np.ndarray:
        """Node angles on S^1, or (colatitudes, longitudes) on S^2."""
        if self.dim == 1:
            return 2.0 * np.pi * np.arange(self.resolution[0]) / self.resolution[0]
        nlat, nlon = self.resolution
        return (np.arange(nlat) + 0.5) * np.pi / nlat, 2.0 * np.pi * np.arange(nlon) / nlon

    @cached_property
    def antipode(self) -> np.ndarray:
        """Index of the node at -x for every node x."""
        if self.dim == 1:
            n = self.resolution[0]
            return (np.arange(n) + n // 2) % n
        nlat, nlon = self.resolution
        j, k = np.divmod(np.arange(self.size), nlon)
        return (nlat - 1 - j) * nlon + (k + nlon // 2) % nlon

    @cached_property
    def stiffness(self) -> float:
        """Largest eigenvalue magnitude of the discrete Laplacian (after polar filtering)."""
        if self.dim == 1:
            n = self.resolution[0]
            if self.scheme == "spectral":
                return (n / 2.0) ** 2
            h = 2.0 * np.pi / n
            return 16.0 / (3.0 * h * h)
        nlat, nlon = self.resolution
        if self.scheme == "dfs":
            return float(nlat**2 + (nlon / 2.0) ** 2)
        dtheta = np.pi / nlat
        return 4.0 / dtheta**2 + (nlon / 2.0) ** 2

    def check(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape != (self.size,):
            raise GridMismatch(f"expected {self.size} nodal values, got shape {values.shape}")
        return values

    # -- calculus ------------------------------------------------------------

    def integrate(self, values, weight=None) -> float:
        values = self.check(values)
        if weight is not None:
            values = values * self.check(weight)
        return float(np.dot(self.weights, values))

    def derivatives(self, values):
        """Return (gradient, hessian) in the local frame.

        gradient has shape (N, n); hessian has shape (N, n, n) and is exactly
        symmetric.
        """
        values = self.check(values)
        if self.dim == 1:
            d1, d2 = self._circle_derivatives(values)
            return d1[:, None], d2[:, None, None]
        return self._sphere_derivatives(values)

    def gradient(self, values) -> np.ndarray:
        return self.derivatives(values)[0]

    def hessian(self, values) -> np.ndarray:
        return self.derivatives(values)[1]

    def _circle_derivatives(self, u):
        n = u.size
        if self.scheme == "spectral":
            k = np.fft.rfftfreq(n, 1.0 / n)
            c = np.fft.rfft(u)
            c1 = c * (1j * k)
            if n % 2 == 0:
                c1[-1] = 0.0
            return np.fft.irfft(c1, n), np.fft.irfft(-c * k * k, n)
        h = 2.0 * np.pi / n
        up1, um1 = np.roll(u, -1), np.roll(u, 1)
        up2, um2 = np.roll(u, -2), np.roll(u, 2)
        d1 = (8.0 * (up1 - um1) - (up2 - um2)) / (12.0 * h)
        d2 = (16.0 * (up1 + um1) - (up2 + um2) - 30.0 * u) / (12.0 * h * h)
        return d1, d2

    @cached_property
    def _sphere_tables(self):
        nlat, nlon = self.resolution
        theta, _ = self.angles
        sin = np.sin(theta)[:, None]
        cot = (np.cos(theta) / np.sin(theta))[:, None]
        m_theta = np.fft.rfftfreq(2 * nlat, 1.0 / (2 * nlat))[:, None]
        m_phi = np.fft.rfftfreq(nlon, 1.0 / nlon)
        cutoff = np.ceil(0.5 * nlon * np.sin(theta))
        mask = m_phi[None, :] <= cutoff[:, None]
        return sin, cot, m_theta, m_phi, mask

    def _sphere_derivatives(self, flat):
        nlat, nlon = self.resolution
        half = nlon // 2
        sin, cot, m_theta, m_phi, _ = self._sphere_tables
        u = flat.reshape(nlat, nlon)

        c_phi = np.fft.rfft(u, axis=1)
        d_phi = c_phi * (1j * m_phi)
        d_phi[:, -1] = 0.0
        u_p = np.fft.irfft(d_phi, nlon, axis=1)
        u_pp = np.fft.irfft(-c_phi * m_phi**2, nlon, axis=1)

        if self.scheme == "dfs":
            # great circle through both poles: meridian phi, then phi + pi reversed
            circle = np.concatenate([u[:, :half], u[::-1, half:]], axis=0)
            c = np.fft.rfft(circle, axis=0)
            c1 = c * (1j * m_theta)
            c1[-1] = 0.0
            odd = np.fft.irfft(c1, 2 * nlat, axis=0)
            even = np.fft.irfft(-c * m_theta**2, 2 * nlat, axis=0)
            u_t = np.concatenate([odd[:nlat, :], -odd[nlat:, :][::-1]], axis=1)
            u_tt = np.concatenate([even[:nlat, :], even[nlat:, :][::-1]], axis=1)
            c_tp = np.fft.rfft(u_t, axis=1) * (1j * m_phi)
            c_tp[:, -1] = 0.0
            u_tp = np.fft.irfft(c_tp, nlon, axis=1)
        else:
            dtheta = np.pi / nlat
            dphi = 2.0 * np.pi / nlon
            padded = np.concatenate(
                [np.roll(u[:1], half, axis=1), u, np.roll(u[-1:], half, axis=1)], axis=0
            )
            u_t = (padded[2:] - padded[:-2]) / (2.0 * dtheta)
            u_tt = (padded[2:] - 2.0 * u + padded[:-2]) / dtheta**2
            u_p = (np.roll(u, -1, axis=1) - np.roll(u, 1, axis=1)) / (2.0 * dphi)
            u_pp = (np.roll(u, -1, axis=1) - 2.0 * u + np.roll(u, 1, axis=1)) / dphi**2
            u_tp = (np.roll(u_t, -1, axis=1) - np.roll(u_t, 1, axis=1)) / (2.0 * dphi)

        grad = np.stack([u_t, u_p / sin], axis=-1).reshape(-1, 2)
        h12 = (u_tp - cot * u_p) / sin
        h22 = u_pp / sin**2 + cot * u_t
        hess = np.empty((nlat, nlon, 2, 2))
        hess[..., 0, 0] = u_tt
        hess[..., 0, 1] = h12
        hess[..., 1, 0] = h12
        hess[..., 1, 1] = h22
        return grad, hess.reshape(-1, 2, 2)

    def polar_filter(self, values) -> np.ndarray:
        """Drop longitudinal wavenumbers a latitude row cannot resolve isotropically.

        Identity on S^1. On S^2 row j keeps wavenumbers m <= (nlon/2) sin(theta_j).
        """
        values = self.check(values)
        if self.dim == 1:
            return values
        nlat, nlon = self.resolution
        mask = self._sphere_tables[4]
        rows = np.fft.rfft(values.reshape(nlat, nlon), axis=1) * mask
        return np.fft.irfft(rows, nlon, axis=1).reshape(-1)

    # -- interpolation ---------------------------------------------------------

    def interpolant(self, values):
        """Return a callable evaluating the grid function at unit vectors of shape (M, n+1)."""
        values = self.check(values).copy()
        if self.dim == 1:
            if self.scheme == "spectral":
                return _TrigInterpolant(values)
            theta = self.angles
            spline = CubicSpline(np.append(theta, 2.0 * np.pi), np.append(values, values[0]),
                                 bc_type="periodic")
            return lambda d: spline(np.mod(np.arctan2(d[..., 1], d[..., 0]), 2.0 * np.pi))
        if self.scheme == "dfs":
            return _SplineInterpolant(self, values)
        return _BilinearInterpolant(self, values)

    def sample(self, values, direction) -> float:
        direction = np.asarray(direction, dtype=float)
        if direction.shape != (self.dim + 1,):
            raise NotUnitVector(f"direction must have {self.dim + 1} components")
        if abs(np.linalg.norm(direction) - 1.0) > 1e-12:
            raise NotUnitVector(f"|direction| = {np.linalg.norm(direction):.3g}, expected 1")
        return float(self.interpolant(values)(direction[None, :])[0])


class _TrigInterpolant:
    """Band-limited interpolant of equispaced periodic samples."""

    def __init__(self, values):
        n = values.size
        coeffs = np.fft.rfft(values) / n
        coeffs[1:] *= 2.0
        if n % 2 == 0:
            coeffs[-1] = coeffs[-1].real / 2.0
        self.coeffs = coeffs
        self.k = np.arange(coeffs.size)

    def at_angles(self, angles):
        angles = np.asarray(angles, dtype=float)
        flat = angles.reshape(-1)
        out = np.empty(flat.size)
        for start in range(0, flat.size, 4096):
            t = flat[start:start + 4096]
            out[start:start + 4096] = (np.exp(1j * np.outer(t, self.k)) @ self.coeffs).real
        return out.reshape(angles.shape)

    def __call__(self, directions):
        directions = np.asarray(directions, dtype=float)
        return self.at_angles(np.arctan2(directions[..., 1], directions[..., 0]))


class _BilinearInterpolant:
    """Bilinear interpolation in (colatitude, longitude) with across-pole ghost rows."""

    def __init__(self, grid, values):
        nlat, nlon = grid.resolution
        u = values.reshape(nlat, nlon)
        half = nlon // 2
        theta, _ = grid.angles
        self.theta = np.concatenate([[-theta[0]], theta, [2.0 * np.pi - theta[-1]]])
        self.table = np.concatenate(
            [np.roll(u[:1], half, axis=1), u, np.roll(u[-1:], half, axis=1)], axis=0
        )
        self.table = np.concatenate([self.table, self.table[:, :1]], axis=1)
        self.dtheta = np.pi / nlat
        self.dphi = 2.0 * np.pi / nlon
        self.nlon = nlon

    def at_angles(self, theta, phi):
        theta = np.asarray(theta, dtype=float)
        phi = np.mod(np.asarray(phi, dtype=float), 2.0 * np.pi)
        s = (theta - self.theta[0]) / self.dtheta
        i = np.clip(np.floor(s).astype(int), 0, self.table.shape[0] - 2)
        a = s - i
        t = phi / self.dphi
        k = np.clip(np.floor(t).astype(int), 0, self.nlon - 1)
        c = t - k
        tab = self.table
        return ((1 - a) * ((1 - c) * tab[i, k] + c * tab[i, k + 1])
                + a * ((1 - c) * tab[i + 1, k] + c * tab[i + 1, k + 1]))

    def __call__(self, directions):
        directions = np.asarray(directions, dtype=float)
        theta = np.arccos(np.clip(directions[..., 2], -1.0, 1.0))
        phi = np.arctan2(directions[..., 1], directions[..., 0])
        return self.at_angles(theta, phi)


class _SplineInterpolant(_BilinearInterpolant):
    """Bicubic spline in (colatitude, longitude) on a table padded across the poles and the seam."""

    pad = 3

    def __init__(self, grid, values):
        nlat, nlon = grid.resolution
        u = values.reshape(nlat, nlon)
        half, p = nlon // 2, self.pad
        theta, phi = grid.angles
        top = np.roll(u[:p][::-1], half, axis=1)
        bottom = np.roll(u[-p:][::-1], half, axis=1)
        rows = np.concatenate([top, u, bottom], axis=0)
        table = np.concatenate([rows[:, -p:], rows, rows[:, :p]], axis=1)
        th = np.concatenate([-theta[:p][::-1], theta, 2.0 * np.pi - theta[-p:][::-1]])
        dphi = 2.0 * np.pi / nlon
        ph = np.concatenate([phi[-p:] - 2.0 * np.pi, phi, phi[:p] + 2.0 * np.pi])
        self.spline = RectBivariateSpline(th, ph, table, kx=3, ky=3, s=0)
        self.dphi = dphi

    def at_angles(self, theta, phi):
        theta = np.asarray(theta, dtype=float)
        phi = np.mod(np.asarray(phi, dtype=float), 2.0 * np.pi)
        return self.spline.ev(theta, phi)


def build_grid(dim: int, resolution, scheme: str | None = None) -> SphericalGrid:
    """Construct the standard grid on S^dim.

    Parameters
    ----------
    dim : 1 or 2
    resolution : int for S^1; (nlat, nlon) for S^2 (an int m means (m, 2m)).
    scheme : derivative scheme, see module docstring.
    """
    if dim not in (1, 2):
        raise UnsupportedDimension(f"only S^1 and S^2 are supported, got dim={dim}")
    if scheme is None:
        scheme = SCHEMES[dim][0]
    if scheme not in SCHEMES[dim]:
        raise ValueError(f"scheme {scheme!r} not available on S^{dim}; choose from {SCHEMES[dim]}")

    if dim == 1:
        if np.ndim(resolution) > 0:
            (resolution,) = tuple(resolution)
        n = int(resolution)
        if n < MIN_RESOLUTION:
            raise ResolutionTooSmall(f"need at least {MIN_RESOLUTION} nodes, got {n}")
        if n % 2:
            raise ValueError("node count must be even so that -x is a node")
        theta = 2.0 * np.pi * np.arange(n) / n
        nodes = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        frame = np.stack([-np.sin(theta), np.cos(theta)], axis=1)[:, None, :]
        weights = np.full(n, 2.0 * np.pi / n)
        return SphericalGrid(1, (n,), scheme, nodes, weights, frame)

    if np.ndim(resolution) == 0:
        resolution = (int(resolution), 2 * int(resolution))
    nlat, nlon = (int(r) for r in resolution)
    if min(nlat, nlon) < MIN_RESOLUTION:
        raise ResolutionTooSmall(f"need at least {MIN_RESOLUTION} nodes per axis, got {(nlat, nlon)}")
    if nlon % 2:
        raise ValueError("longitude count must be even so that -x is a node")
    theta = (np.arange(nlat) + 0.5) * np.pi / nlat
    phi = 2.0 * np.pi * np.arange(nlon) / nlon
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    st, ct, sp, cp = np.sin(th), np.cos(th), np.sin(ph), np.cos(ph)
    nodes = np.stack([st * cp, st * sp, ct], axis=-1).reshape(-1, 3)
    e1 = np.stack([ct * cp, ct * sp, -st], axis=-1).reshape(-1, 3)
    e2 = np.stack([-sp, cp, np.zeros_like(ph)], axis=-1).reshape(-1, 3)
    weights = np.outer(_fejer_weights(nlat), np.full(nlon, 2.0 * np.pi / nlon)).reshape(-1)
    return SphericalGrid(2, (nlat, nlon), scheme, nodes, weights, np.stack([e1, e2], axis=1))


def grid_from_descriptor(desc: dict) -> SphericalGrid:
    return build_grid(int(desc["dim"]), desc["resolution"], desc.get("scheme"))


@dataclass(frozen=True, eq=False)
class ScalarField:
    """One finite real value per grid node."""

    grid: SphericalGrid
    values: np.ndarray

    def __post_init__(self):
        values = self.grid.check(self.values).copy()
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid: SphericalGrid, func) -> "ScalarField":
        """Evaluate ``func(nodes)`` (nodes of shape (N, n+1)) on the grid."""
        return cls(grid, np.broadcast_to(np.asarray(func(grid.nodes), dtype=float), (grid.size,)))

    def __len__(self):
        return self.values.size


@dataclass(frozen=True, eq=False)
class SymMatField:
    """Symmetric n x n matrix per node, in the local frame."""

    grid: SphericalGrid
    values: np.ndarray

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.values)


def _same_grid(*fields):
    grid = fields[0].grid
    for other in fields[1:]:
        if other is not None and other.grid is not grid:
            raise GridMismatch("fields live on different grids")
    return grid


def gradient(field: ScalarField) -> np.ndarray:
    """Frame components of the gradient, shape (N, n)."""
    return field.grid.gradient(field.values)


def hessian(field: ScalarField) -> SymMatField:
    return SymMatField(field.grid, field.grid.hessian(field.values))


def integrate(field: ScalarField, weight_field: ScalarField | None = None) -> float:
    grid = _same_grid(field, weight_field)
    return grid.integrate(field.values, None if weight_field is None else weight_field.values)


def sample(field: ScalarField, direction) -> float:
    return field.grid.sample(field.values, direction)


def direction_sample(dim: int, count: int) -> np.ndarray:
    """Roughly uniform unit vectors on S^dim: equispaced on S^1, a Fibonacci lattice on S^2."""
    if dim == 1:
        t = 2.0 * np.pi * np.arange(count) / count
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    i = np.arange(count) + 0.5
    z = 1.0 - 2.0 * i / count
    phi = np.pi * (1.0 + 5.0**0.5) * i
    s = np.sqrt(1.0 - z * z)
    return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)
