import math

import numpy as np
import pytest

from hctransfer.mesh import (
    GRID_TABLE,
    Domain,
    MeshError,
    MeshFormatError,
    TriMesh,
    format_mesh,
    generate_structured,
    generate_unstructured,
    grid_cells,
    parse_mesh,
    read_mesh,
    structured_grid,
    unstructured_grid,
    write_mesh,
)


def check_topology(mesh):
    assert np.all(mesh.areas > 0)
    counts = np.bincount(mesh.triangle_edges.ravel(), minlength=len(mesh.edges))
    assert set(np.unique(counts)) <= {1, 2}
    assert np.array_equal(counts == 1, mesh.edge_triangles[:, 1] < 0)
    assert len(mesh.interior_edges) + len(mesh.boundary_edges) == len(mesh.edges)
    # Euler for a simply connected planar mesh
    assert mesh.n_vertices - len(mesh.edges) + mesh.n_triangles == 1
    for v in range(0, mesh.n_vertices, max(1, mesh.n_vertices // 17)):
        tris = mesh.vertex_to_triangles(v)
        assert np.all(np.any(mesh.triangles[tris] == v, axis=1))
        assert len(tris) == np.count_nonzero(np.any(mesh.triangles == v, axis=1))
    edges = mesh.corners[:, [1, 2, 0]] - mesh.corners
    assert mesh.h == pytest.approx(np.linalg.norm(edges, axis=2).max(), rel=1e-15)


def test_domain_parse_and_validation():
    d = Domain.parse("5,15,5,15")
    assert d == Domain.square(5, 15)
    assert d.area == 100
    with pytest.raises(ValueError):
        Domain(1, 0, 0, 1)
    with pytest.raises(ValueError):
        Domain.parse("1,2,3")


def test_structured_table_rows(box):
    m1 = generate_structured(box, 4)
    assert m1.n_triangles == 32
    assert m1.h == pytest.approx(3.535534, abs=1e-6)
    m7 = generate_structured(box, 256)
    assert m7.n_triangles == 131072
    assert m7.h == pytest.approx(0.055243, abs=1e-6)


def test_structured_single_cell():
    m = generate_structured(Domain.square(0, 1), 1)
    assert m.n_triangles == 2
    assert m.h == pytest.approx(math.sqrt(2), rel=1e-15)


@pytest.mark.parametrize("grid", range(1, 7))
def test_structured_grid_matches_table(box, grid):
    m = structured_grid(grid, box)
    n_struct, _, h = GRID_TABLE[grid]
    assert m.n_triangles == n_struct == 2 * grid_cells(grid) ** 2
    assert m.h == pytest.approx(h, abs=1e-6)
    assert m.areas.sum() == pytest.approx(box.area, rel=1e-12)


@pytest.mark.parametrize("grid", range(1, 6))
def test_structured_and_unstructured_topology(box, grid):
    check_topology(structured_grid(grid, box))
    check_topology(unstructured_grid(grid, box))


def test_unstructured_examples(box):
    m5 = generate_unstructured(box, 0.220971, seed=1)
    assert abs(m5.n_triangles - 8220) <= 0.25 * 8220
    m1 = generate_unstructured(box, 3.535534, seed=1)
    assert abs(m1.n_triangles - 28) <= 0.25 * 28


@pytest.mark.parametrize("grid", range(1, 7))
def test_unstructured_counts_near_table(box, grid):
    m = unstructured_grid(grid, box)
    assert abs(m.n_triangles - GRID_TABLE[grid][1]) <= 0.25 * GRID_TABLE[grid][1]


def test_unstructured_area_and_boundary(box):
    m = unstructured_grid(4, box)
    assert m.areas.sum() == pytest.approx(box.area, rel=1e-12)
    assert m.bounds == (5.0, 15.0, 5.0, 15.0)
    be = m.edges[m.boundary_edges]
    p, q = m.vertices[be[:, 0]], m.vertices[be[:, 1]]
    on_side = (
        (np.isclose(p[:, 0], q[:, 0]) & np.isin(p[:, 0], [5.0, 15.0]))
        | (np.isclose(p[:, 1], q[:, 1]) & np.isin(p[:, 1], [5.0, 15.0]))
    )
    assert on_side.all()


def test_unstructured_is_irregular_and_deterministic(box):
    a = generate_unstructured(box, 0.5, seed=3)
    b = generate_unstructured(box, 0.5, seed=3)
    c = generate_unstructured(box, 0.5, seed=4)
    assert np.array_equal(a.vertices, b.vertices) and np.array_equal(a.triangles, b.triangles)
    assert not np.array_equal(a.vertices, c.vertices)
    assert np.ptp(a.areas) > 0.1 * a.areas.mean()


def test_unstructured_rejects_bad_size(box):
    with pytest.raises(ValueError):
        generate_unstructured(box, 0.0)


def test_u2_domain_scaling():
    d = Domain.square(-1, 1)
    m = structured_grid(3, d)
    assert m.n_triangles == 512
    assert m.h == pytest.approx(GRID_TABLE[3][2] / 5, rel=1e-6)


def test_two_triangle_edges(unit_square):
    m = unit_square
    assert len(m.edges) == 5
    assert len(m.interior_edges) == 1
    assert len(m.boundary_edges) == 4
    assert tuple(m.edges[m.interior_edges[0]]) == (0, 2)
    # shared normal points out of the lower-index triangle (0) into triangle 1
    n = m.edge_normals[m.interior_edges[0]]
    assert n == pytest.approx([-math.sqrt(0.5), math.sqrt(0.5)])


def test_constructor_rejects_bad_input():
    v = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(MeshError):
        TriMesh(v, np.array([[0, 2, 1]]))  # clockwise
    with pytest.raises(MeshError):
        TriMesh(v, np.array([[0, 1, 3]]))
    with pytest.raises(MeshError):
        TriMesh(np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]), np.array([[0, 1, 2]]))


def test_mesh_is_read_only(unit_square):
    with pytest.raises(ValueError):
        unit_square.vertices[0, 0] = 3.0


def test_round_trip_bit_exact(tmp_path, box):
    m = unstructured_grid(3, box)
    p = tmp_path / "m.mesh"
    write_mesh(m, p)
    r = read_mesh(p)
    assert np.array_equal(r.vertices, m.vertices)
    assert np.array_equal(r.triangles, m.triangles)
    assert format_mesh(r) == p.read_text()


def test_parse_errors_carry_line_numbers(unit_square):
    text = format_mesh(unit_square)
    bad = text.replace("0 2 3", "0 2 9")
    with pytest.raises(MeshFormatError, match="line 9"):
        parse_mesh(bad)
    with pytest.raises(MeshFormatError, match="line 1"):
        parse_mesh("not a mesh\n")
    with pytest.raises(MeshFormatError, match="line 3"):
        parse_mesh(text.replace("0.0 0.0", "0.0 zero", 1))
    with pytest.raises(MeshFormatError, match="end of file"):
        parse_mesh("\n".join(text.splitlines()[:-1]))


def test_to_physical(unit_square):
    p = unit_square.to_physical(np.array([0, 1]), np.array([[1 / 3] * 3, [0.0, 0.5, 0.5]]))
    assert p == pytest.approx(np.array([[2 / 3, 1 / 3], [0.5, 1.0]]))
