import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial import ConvexHull, HalfspaceIntersection

from conftest import ellipse_support_exact
from mogflow.convex import (
    RadialBody,
    body_from_record,
    ellipsoid_support,
    gauss_curvature,
    make_support_body,
    radial_from_support,
    support_from_radial,
    widths,
    wulff_shape,
)
from mogflow.errors import NotConvex, NotPositive
from mogflow.sphere import ScalarField, build_grid


def offset_disk(grid, shift=0.3):
    return make_support_body(ScalarField(grid, 1.0 + shift * grid.nodes[:, 0]))


def test_unit_disk(circle256):
    body = make_support_body(ScalarField(circle256, np.ones(256)))
    assert np.allclose(body.b[:, 0, 0], 1.0)
    assert np.allclose(body.r, 1.0)
    assert np.allclose(body.xi, circle256.nodes)
    assert widths(body) == pytest.approx((2.0, 2.0))
    assert np.allclose(gauss_curvature(body).values, 1.0)


def test_offset_disk_geometry(circle256):
    body = offset_disk(circle256)
    assert np.allclose(body.b[:, 0, 0], 1.0, atol=1e-12)
    assert widths(body) == pytest.approx((2.0, 2.0), abs=1e-12)
    # boundary points lie on the circle of radius 1 about (0.3, 0)
    centred = body.boundary_points - np.array([0.3, 0.0])
    assert np.allclose(np.linalg.norm(centred, axis=1), 1.0, atol=1e-12)
    radial = radial_from_support(body)
    quarter = circle256.size // 4
    assert radial.r[quarter] == pytest.approx(np.sqrt(0.91), abs=1e-10)


def test_nonconvex_data_rejected_with_location(circle256):
    theta = circle256.angles
    with pytest.raises(NotConvex) as info:
        make_support_body(ScalarField(circle256, 1.0 + 0.9 * np.cos(2 * theta)))
    # b = 1 - 2.7 cos 2 theta is negative around theta = 0 and theta = pi
    assert np.cos(2 * theta[info.value.node]) > 1 / 2.7
    assert info.value.eigenvalue < 0
    with pytest.raises(NotPositive):
        make_support_body(ScalarField(circle256, np.cos(theta) + 0.5))


def test_ellipse_curvature_field(ellipse512):
    # radius of curvature at normal angle theta: a^2 b^2 / (a^2 cos^2 + b^2 sin^2)^(3/2)
    theta = ellipse512.grid.angles
    a, b = 2.0, 1.0
    rho = a * a * b * b / ((a * np.cos(theta)) ** 2 + (b * np.sin(theta)) ** 2) ** 1.5
    curvature = gauss_curvature(ellipse512).values
    assert curvature[0] == pytest.approx(a / b**2, abs=1e-4)
    assert np.max(np.abs(curvature - 1 / rho)) < 1e-8
    assert widths(ellipse512) == pytest.approx((2.0, 4.0), abs=1e-6)


def test_sphere_curvature_on_s2(sphere32):
    body = make_support_body(ScalarField(sphere32, np.full(sphere32.size, 1.7)))
    assert np.allclose(gauss_curvature(body).values, 1.7**-2, rtol=1e-10)


def test_xi_field_identities(ellipse512):
    body = ellipse512
    assert np.max(np.abs(np.linalg.norm(body.xi, axis=1) - 1)) < 1e-10
    tangent = body.grad[:, 0, None] * body.grid.frame[:, 0, :]
    assert np.allclose(body.r[:, None] * body.xi, body.u[:, None] * body.grid.nodes + tangent, atol=1e-10)
    assert np.all(body.r >= body.u - 1e-15)


def test_extremes_of_support_and_radial_agree(ellipse512):
    radial = radial_from_support(ellipse512)
    assert abs(ellipse512.u.max() - radial.r.max()) <= 1e-6
    assert abs(ellipse512.u.min() - radial.r.min()) <= 1e-6


def test_cone_inequality(ellipse512):
    u, nodes = ellipse512.u, ellipse512.grid.nodes
    top = int(np.argmax(u))
    cos = nodes @ nodes[top]
    front = cos > 0
    assert np.all(u[front] >= cos[front] * u[top] - 1e-14)


def test_radial_matches_pushforward_pairs(ellipse512):
    # the radial function sampled at xi(x) must be r(x)
    radial = radial_from_support(ellipse512)
    paired = radial.grid.interpolant(radial.r)(ellipse512.xi)
    assert np.max(np.abs(paired - ellipse512.r)) < 1e-8


def test_support_from_radial_parametrization_identity(ellipse512):
    # in the radial parametrization the support value at the normal of r(xi) xi is r^2 / sqrt(r^2 + |r'|^2)
    radial = radial_from_support(ellipse512)
    grid = radial.grid
    r = radial.r
    dr = grid.gradient(r)[:, 0]
    tangent = grid.frame[:, 0, :]
    normal = r[:, None] * grid.nodes - dr[:, None] * tangent
    normal /= np.linalg.norm(normal, axis=1)[:, None]
    u_at_normal = ellipse512.grid.interpolant(ellipse512.u)(normal)
    assert np.max(np.abs(u_at_normal - r * r / np.sqrt(r * r + dr * dr))) < 1e-7


@given(k=st.integers(0, 4), c=st.floats(-0.5, 0.5))
def test_change_of_variables(k, c):
    grid = build_grid(1, 512)
    body = make_support_body(ellipsoid_support(grid, [2.0, 1.0], [c, 0.0]))

    def phi(d):
        return np.exp(d[:, 0]) * np.cos(k * np.arctan2(d[:, 1], d[:, 0]))

    pulled = grid.integrate(body.u * body.det / body.r**2 * phi(body.xi))
    direct = grid.integrate(phi(grid.nodes))
    assert pulled == pytest.approx(direct, rel=1e-9, abs=1e-10)


def test_offset_disk_round_trip(circle256):
    body = offset_disk(circle256)
    back = support_from_radial(radial_from_support(body))
    assert np.max(np.abs(back.u - body.u)) < 1e-5


def test_constant_radial_gives_constant_support(circle256):
    hull = support_from_radial(RadialBody(ScalarField(circle256, np.full(256, 2.0))))
    assert np.allclose(hull.u, 2.0)


def test_spike_hull_matches_brute_force():
    grid = build_grid(1, 128)
    r = np.ones(128)
    r[10] = 1.5
    hull = support_from_radial(RadialBody(ScalarField(grid, r)), refine=False)
    points = r[:, None] * grid.nodes
    vertices = points[ConvexHull(points).vertices]
    brute = np.max(grid.nodes @ vertices.T, axis=1)
    assert np.allclose(hull.u, brute, atol=1e-14)
    assert np.allclose(hull.u, np.maximum(1.0, 1.5 * grid.nodes @ grid.nodes[10]), atol=1e-14)


def test_wulff_of_support_function_is_idempotent(ellipse512):
    again = wulff_shape(ellipse512.field)
    assert np.max(np.abs(again.u - ellipse512.u)) < 1e-8
    assert np.allclose(wulff_shape(ScalarField(ellipse512.grid, np.ones(512))).u, 1.0)


def test_wulff_shape_against_halfspace_intersection():
    grid = build_grid(1, 512)
    h = 1.0 + 0.5 * np.cos(2 * grid.angles)
    shape = wulff_shape(ScalarField(grid, h))
    assert np.all(shape.u <= h + 1e-12)
    assert np.any(shape.u < h - 1e-2)

    dense = np.linspace(0, 2 * np.pi, 8192, endpoint=False)
    normals = np.stack([np.cos(dense), np.sin(dense)], axis=1)
    halfspaces = np.hstack([normals, -(1.0 + 0.5 * np.cos(2 * dense))[:, None]])
    vertices = HalfspaceIntersection(halfspaces, np.zeros(2)).intersections
    brute = np.max(grid.nodes @ vertices.T, axis=1)
    assert np.max(np.abs(shape.u - brute)) < 2e-6


def test_wulff_rejects_nonpositive(circle256):
    with pytest.raises(NotPositive):
        wulff_shape(ScalarField(circle256, np.cos(circle256.angles)))


def test_record_round_trip(ellipse512):
    again = body_from_record(ellipse512.to_record())
    assert np.array_equal(again.u, ellipse512.u)
    assert again.grid.descriptor() == ellipse512.grid.descriptor()


def test_radial_on_s2():
    grid = build_grid(2, (64, 128))
    axes = np.array([1.2, 1.0, 0.8])
    body = make_support_body(ellipsoid_support(grid, axes))
    radial = radial_from_support(body)
    exact = 1.0 / np.sqrt(np.sum((grid.nodes / axes) ** 2, axis=1))
    assert np.max(np.abs(radial.r - exact)) < 1e-6
    exact_u = ellipse_support_exact(0.0, 1.2, 1.0)
    assert body.u.max() == pytest.approx(exact_u, abs=1e-3)
