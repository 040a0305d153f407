import math

import numpy as np
import pytest

from hctransfer.field import rule_points
from hctransfer.locate import (
    GeometryError,
    LocationError,
    Locator,
    barycentric,
    brute_force_locate,
    build_bvh,
    locate,
    point_in_triangle,
    subtriangle_of,
)
from hctransfer.mesh import structured_grid, unstructured_grid
from hctransfer.quadrature import QuadSpec

TRI = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]])


def contains(mesh, el, pts, rtol=1e-12):
    lam = barycentric(mesh.corners[el], pts)
    return np.abs(lam).sum(axis=1) - 1 <= rtol


def test_point_in_triangle():
    assert point_in_triangle(TRI, TRI.mean(axis=0))
    assert point_in_triangle(TRI, [1.0, 1.0])  # on the hypotenuse
    assert point_in_triangle(TRI, [0.0, 0.0])
    assert not point_in_triangle(TRI, [1.5, 1.5])  # sub-area sum exceeds the area
    assert not point_in_triangle(TRI, [-1e-6, 1.0])
    with pytest.raises(GeometryError):
        point_in_triangle([[0, 0], [1, 1], [2, 2]], [1, 1])


def test_two_triangle_bvh(unit_square):
    bvh = build_bvh(unit_square)
    assert len(bvh.leaves) == 2
    root_children = [bvh.left[0], bvh.right[0]]
    assert sorted(root_children) == sorted(bvh.leaves.tolist())


def test_bvh_structure(box):
    mesh = structured_grid(5, box)
    bvh = build_bvh(mesh)
    assert bvh.depth <= 2 * math.ceil(math.log2(8192))
    leaves = bvh.leaves
    owned = np.concatenate([bvh.order[bvh.start[n]:bvh.stop[n]] for n in leaves])
    assert np.array_equal(np.sort(owned), np.arange(mesh.n_triangles))
    # child boxes sit inside parent boxes
    inner = np.flatnonzero(bvh.left >= 0)
    for child in (bvh.left[inner], bvh.right[inner]):
        assert np.all(bvh.lo[child] >= bvh.lo[inner]) and np.all(bvh.hi[child] <= bvh.hi[inner])
    # leaf boxes hold their triangles
    for n in leaves[::97]:
        c = mesh.corners[bvh.order[bvh.start[n]:bvh.stop[n]]]
        assert np.all(c.min(axis=1) >= bvh.lo[n]) and np.all(c.max(axis=1) <= bvh.hi[n])
    again = build_bvh(mesh)
    assert np.array_equal(again.order, bvh.order) and np.array_equal(again.lo, bvh.lo)


def test_centroids_locate_to_themselves(grid3):
    for mesh in grid3:
        res = Locator(mesh)(mesh.corners.mean(axis=1))
        assert np.array_equal(res.element, np.arange(mesh.n_triangles))
        assert np.allclose(res.barycentric, 1 / 3)


def test_vertex_tie_break(box):
    mesh = structured_grid(3, box)
    loc = Locator(mesh)
    valence = mesh.vertex_valence
    v = int(np.flatnonzero(valence == 6)[0])
    res = loc(mesh.vertices[[v]])
    assert res.element[0] == mesh.vertex_to_triangles(v).min()
    res = loc(mesh.vertices)
    lowest = np.array([mesh.vertex_to_triangles(i).min() for i in range(mesh.n_vertices)])
    assert np.array_equal(res.element, lowest)


def test_barycenter_subtriangle_tie_break():
    assert subtriangle_of(np.array([[1 / 3, 1 / 3, 1 / 3]]))[0] == 0
    # strictly inside T_i = {G, a_{i+1}, a_{i+2}} means lambda_i is the smallest
    lam = np.array([[0.1, 0.45, 0.45], [0.45, 0.1, 0.45], [0.45, 0.45, 0.1]])
    assert subtriangle_of(lam).tolist() == [0, 1, 2]
    # on the internal edge G-a_0 (lambda_1 == lambda_2 < lambda_0): lower index wins
    assert subtriangle_of(np.array([[0.5, 0.25, 0.25]]))[0] == 1


def test_subtriangle_always_found():
    rng = np.random.default_rng(0)
    lam = rng.dirichlet([1, 1, 1], 10000)
    sub = subtriangle_of(lam)
    assert np.array_equal(sub, np.argmin(lam, axis=1)) or np.all(
        lam[np.arange(len(lam)), sub] <= lam.min(axis=1) + 1e-12
    )


def test_quadrature_points_locate_like_brute_force(grid3):
    src, tgt = grid3
    pts = rule_points(tgt, QuadSpec(15, 1).realize()).reshape(-1, 2)
    res = Locator(src)(pts)
    brute = brute_force_locate(src, pts)
    assert np.all(brute >= 0)
    same = res.element == brute
    assert np.all(same | contains(src, res.element, pts))
    assert same.mean() > 0.999


def test_random_points_and_reconstruction(box):
    mesh = unstructured_grid(4, box)
    rng = np.random.default_rng(5)
    pts = rng.uniform(5, 15, (5000, 2))
    res = Locator(mesh)(pts)
    back = mesh.to_physical(res.element, res.barycentric)
    assert np.abs(back - pts).max() <= 1e-10 * mesh.h
    assert np.all(res.barycentric >= -1e-12)
    assert np.allclose(res.barycentric.sum(axis=1), 1, atol=1e-14)
    assert np.array_equal(res.element, brute_force_locate(mesh, pts))


def test_boundary_and_corner_points(box):
    mesh = unstructured_grid(3, box)
    pts = np.array([[5.0, 5.0], [15.0, 15.0], [5.0, 10.0], [12.3, 15.0]])
    res = Locator(mesh)(pts)
    assert np.all(contains(mesh, res.element, pts))


def test_outside_point_fails(grid3):
    with pytest.raises(LocationError):
        Locator(grid3[0])(np.array([[10.0, 10.0], [15.5, 10.0]]))


def test_locate_function_form(grid3):
    mesh = grid3[1]
    bvh = build_bvh(mesh)
    res = locate(bvh, mesh, np.array([[7.0, 8.0]]))
    assert len(res) == 1
    assert point_in_triangle(mesh.corners[res.element[0]], [7.0, 8.0])
