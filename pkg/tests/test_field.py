import math

import numpy as np
import pytest

from hctransfer.field import (
    DEGREES,
    DGField,
    FieldFormatError,
    format_field,
    modal_basis,
    n_modes,
    nodal_layout,
    project_analytic,
    read_field,
    test_function as named_function,
    write_field,
)
from hctransfer.locate import Locator
from hctransfer.mesh import structured_grid, unstructured_grid
from hctransfer.quadrature import QuadSpec, tensor_gauss_rectangle

from conftest import random_poly


def gauss_l2(field, f, n=40):
    x0, x1, y0, y1 = field.mesh.bounds
    pts, w = tensor_gauss_rectangle(n, x0, x1, y0, y1)
    loc = Locator(field.mesh)(pts)
    diff = field.evaluate(loc.element, loc.barycentric) - f(pts[:, 0], pts[:, 1])
    return math.sqrt(w @ diff**2)


@pytest.mark.parametrize("k", DEGREES)
def test_orthonormal_basis(k):
    m = modal_basis(k).mass(QuadSpec(15, 1).realize())
    assert np.abs(m - np.eye(n_modes(k))).max() <= 1e-13


@pytest.mark.parametrize("k", DEGREES)
def test_basis_gradient_matches_finite_differences(k):
    b = modal_basis(k)
    rng = np.random.default_rng(k)
    xy = rng.dirichlet([1, 1, 1], 20)[:, 1:]
    step = 1e-6
    fd_x = (b.eval(xy + [step, 0]) - b.eval(xy - [step, 0])) / (2 * step)
    fd_y = (b.eval(xy + [0, step]) - b.eval(xy - [0, step])) / (2 * step)
    g = b.grad(xy)
    assert np.abs(g[..., 0] - fd_x).max() < 1e-6
    assert np.abs(g[..., 1] - fd_y).max() < 1e-6


@pytest.mark.parametrize("k", DEGREES)
def test_nodal_layout(k):
    nodes = nodal_layout(k)
    assert len(nodes) == n_modes(k) == (k + 1) * (k + 2) // 2
    assert len({tuple(np.round(p, 14)) for p in nodes}) == len(nodes)
    assert np.allclose(nodes.sum(axis=1), 1)
    assert np.array_equal(nodes[:3], np.eye(3))
    if k == 3:
        assert nodes[-1] == pytest.approx([1 / 3] * 3)
        assert nodes[3] == pytest.approx([2 / 3, 1 / 3, 0])


@pytest.mark.parametrize("k", DEGREES)
def test_nodal_modal_duality(k, box):
    mesh = unstructured_grid(2, box)
    rng = np.random.default_rng(0)
    vals = rng.standard_normal((mesh.n_triangles, n_modes(k)))
    back = DGField.from_nodal(mesh, k, vals).nodal_values()
    assert np.abs(back - vals).max() <= 1e-12


def test_constant_projection(grid3):
    for k in DEGREES:
        f = project_analytic(grid3[1], k, lambda x, y: np.ones_like(x))
        rng = np.random.default_rng(1)
        bary = rng.dirichlet([1, 1, 1], grid3[1].n_triangles)
        assert np.abs(f.evaluate(np.arange(grid3[1].n_triangles), bary) - 1).max() < 1e-13


def test_plane_on_two_triangles(unit_square):
    f = project_analytic(unit_square, 1, lambda x, y: x + 2 * y)
    vals = f.nodal_values()
    expected = unit_square.vertices[unit_square.triangles] @ [1.0, 2.0]
    assert np.abs(vals - expected).max() < 1e-14


@pytest.mark.parametrize("k", DEGREES)
def test_polynomial_reproduction(k, grid3):
    f, _ = random_poly(np.random.default_rng(10 + k), k)
    field = project_analytic(grid3[1], k, f)
    assert gauss_l2(field, f) <= 1e-12


def test_projection_requires_strong_rule(grid3):
    with pytest.raises(ValueError):
        project_analytic(grid3[0], 2, lambda x, y: x, QuadSpec(3, 0))


def test_integral_of_u1_projection_matches_vertex_average(u1, box):
    # P1 integral per element is area times the mean of its vertex values
    mesh = structured_grid(3, box)
    field = project_analytic(mesh, 1, u1)
    oracle = np.sum(mesh.areas * field.nodal_values().mean(axis=1))
    assert field.integral(QuadSpec(15, 0).realize()) == pytest.approx(oracle, abs=1e-13)


def test_gradient_of_plane(grid3):
    field = project_analytic(grid3[1], 1, lambda x, y: 3 * x - y)
    rng = np.random.default_rng(2)
    el = rng.integers(0, grid3[1].n_triangles, 200)
    g = field.gradient(el, rng.dirichlet([1, 1, 1], 200))
    assert np.abs(g - [3, -1]).max() < 1e-12


def test_gradient_of_square_at_midpoints(grid3):
    mesh = grid3[1]
    field = project_analytic(mesh, 2, lambda x, y: x**2)
    mids = (1 - np.eye(3)) / 2
    el = np.repeat(np.arange(mesh.n_triangles), 3)
    bary = np.tile(mids, (mesh.n_triangles, 1))
    g = field.gradient(el, bary)
    x = mesh.to_physical(el, bary)[:, 0]
    assert np.abs(g[:, 0] - 2 * x).max() < 1e-11
    assert np.abs(g[:, 1]).max() < 1e-11


def test_gradient_finite_difference_on_u1(u1, box):
    mesh = structured_grid(3, box)
    field = project_analytic(mesh, 2, u1)
    rng = np.random.default_rng(3)
    n = 100
    el = rng.integers(0, mesh.n_triangles, n)
    bary = rng.dirichlet([4, 4, 4], n)
    g = field.gradient(el, bary)
    step = 1e-5
    jinv = mesh.inverse_jacobians[el]
    for axis in range(2):
        e = np.zeros(2)
        e[axis] = step
        d_ref = np.einsum("nrx,x->nr", jinv, e)  # reference displacement
        d_bary = np.column_stack([-d_ref.sum(axis=1), d_ref])
        fd = (field.evaluate(el, bary + d_bary) - field.evaluate(el, bary - d_bary)) / (2 * step)
        assert np.abs(fd - g[:, axis]).max() <= 1e-6


def test_element_index_checked(grid3):
    field = DGField.constant(grid3[0], 1, 2.0)
    with pytest.raises(IndexError):
        field.evaluate([grid3[0].n_triangles], [[1, 0, 0]])


def test_named_functions():
    assert named_function("u1")(10.0, 10.0) == 1.0
    assert named_function("u2")(0.0, 0.0) == 0.0
    assert named_function("u3")(10.0, 10.0) == pytest.approx(12 + math.sin(20) ** 2, rel=1e-15)
    assert named_function("u2").domain.x0 == -1
    assert named_function("u3").domain.x1 == 15
    with pytest.raises(ValueError):
        named_function("u4")


@pytest.mark.parametrize("name", ["u1", "u2", "u3"])
def test_named_function_gradients(name):
    fn = named_function(name)
    d = fn.domain
    rng = np.random.default_rng(4)
    x = rng.uniform(d.x0, d.x1, 50)
    y = rng.uniform(d.y0, d.y1, 50)
    h = 1e-6
    gx, gy = fn.grad(x, y)
    scale = 1 + np.abs(gx) + np.abs(gy)
    assert np.all(np.abs((fn(x + h, y) - fn(x - h, y)) / (2 * h) - gx) <= 1e-5 * scale)
    assert np.all(np.abs((fn(x, y + h) - fn(x, y - h)) / (2 * h) - gy) <= 1e-5 * scale)


def test_field_io_round_trip(tmp_path, grid3, u3):
    field = project_analytic(grid3[1], 3, u3)
    p = tmp_path / "f.field"
    write_field(field, p)
    back = read_field(p, grid3[1])
    assert np.array_equal(back.coeffs, field.coeffs)
    assert format_field(back) == p.read_text()


def test_field_io_errors(tmp_path, grid3, unit_square):
    p = tmp_path / "f.field"
    p.write_text("nope\n")
    with pytest.raises(FieldFormatError, match="line 1"):
        read_field(p, unit_square)
    field = DGField.constant(unit_square, 1, 1.0)
    text = format_field(field).splitlines()
    p.write_text("\n".join(text[:4] + ["1.0 x 2.0"]) + "\n")
    with pytest.raises(FieldFormatError, match="line 5"):
        read_field(p, unit_square)
    write_field(field, p)
    with pytest.raises(FieldFormatError):
        read_field(p, grid3[0])
