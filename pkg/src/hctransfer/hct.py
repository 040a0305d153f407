"""Synchronization of DG data and the complete Hsieh-Clough-Tocher surrogate.

Each triangle ``T = {a_0, a_1, a_2}`` is split at its barycenter ``G`` into
``T_i = {G, a_{i+1}, a_{i+2}}`` (indices mod 3), where ``T_i`` holds the
edge ``l_i`` opposite ``a_i``, its midpoint ``b_i`` and the foot ``c_i`` of
the altitude from ``a_i``.  The twelve degrees of freedom are ordered per
vertex ``i`` as::

    v(a_i), grad v(a_i).(a_{i+2} - a_i), grad v(a_i).(a_{i+1} - a_i),
    grad v(b_i).(a_i - c_i)

The three cubics are found per element from a small constrained linear
system (interpolation plus C1 matching across the split edges), written in
the element's reference coordinates so only the three midpoint rows depend
on the element shape.  The shape-independent part is factored once.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .field import DGField
from .mesh import TriMesh
from .locate import GeometryError, Locator, subtriangle_of

log = logging.getLogger(__name__)

N_DOF = 12
RESIDUAL_TOL = 1e-9
_CHUNK = 4096

_REF = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
_G = np.array([1 / 3, 1 / 3])
_EXPS = np.array([(d - b, b) for d in range(4) for b in range(d + 1)])


class HCTError(ValueError):
    def __init__(self, message: str, element: int | None = None):
        self.element = element
        super().__init__(message if element is None else f"element {element}: {message}")


# --------------------------------------------------------------------------- synchronization


@dataclass(frozen=True, eq=False)
class SyncData:
    """Single-valued C1 data: vertex values/gradients and edge-midpoint normal slopes.

    ``normal_derivs[e]`` is taken along ``mesh.edge_normals[e]``, which points
    out of the lower-index triangle of edge ``e``.
    """

    mesh: TriMesh
    values: np.ndarray  # (V,)
    gradients: np.ndarray  # (V, 2)
    normal_derivs: np.ndarray  # (E,)


_VERTEX_BARY = np.eye(3)
# midpoint of local edge i (opposite vertex i)
_MID_BARY = (1.0 - np.eye(3)) / 2.0


def synchronize(field: DGField) -> SyncData:
    """Average element traces and derivatives at vertices and edge midpoints.

    Vertex value and gradient are arithmetic means over the incident
    elements; the midpoint normal derivative is the mean over the one or
    two elements sharing the edge, all expressed in the edge's fixed normal.
    """
    mesh = field.mesh
    m = mesh.n_triangles
    elems = np.repeat(np.arange(m), 3)
    vb = np.tile(_VERTEX_BARY, (m, 1))
    vals = field.evaluate(elems, vb)
    grads = field.gradient(elems, vb)
    vid = mesh.triangles.ravel()
    count = np.bincount(vid, minlength=mesh.n_vertices).astype(float)
    values = np.bincount(vid, weights=vals, minlength=mesh.n_vertices) / count
    gradients = np.stack(
        [np.bincount(vid, weights=grads[:, d], minlength=mesh.n_vertices) / count for d in (0, 1)],
        axis=1,
    )

    eid = mesh.triangle_edges.ravel()
    mb = np.tile(_MID_BARY, (m, 1))
    gm = field.gradient(elems, mb)
    dn = np.einsum("ij,ij->i", gm, mesh.edge_normals[eid])
    ecount = np.bincount(eid, minlength=len(mesh.edges)).astype(float)
    normal = np.bincount(eid, weights=dn, minlength=len(mesh.edges)) / ecount
    return SyncData(mesh, values, gradients, normal)


def sync_from_function(mesh: TriMesh, f, grad) -> SyncData:
    """Exact C1 data sampled from a smooth function and its gradient."""
    v = mesh.vertices
    gx, gy = grad(v[:, 0], v[:, 1])
    mid = mesh.edge_midpoints
    mx, my = grad(mid[:, 0], mid[:, 1])
    n = mesh.edge_normals
    return SyncData(
        mesh,
        np.asarray(f(v[:, 0], v[:, 1]), dtype=float) * np.ones(len(v)),
        np.stack([gx, gy], axis=1) * np.ones((len(v), 1)),
        (mx * n[:, 0] + my * n[:, 1]) * np.ones(len(n)),
    )


# --------------------------------------------------------------------------- geometry


def eccentricities(tri) -> np.ndarray:
    """``E_i = (|l_{i+2}|^2 - |l_{i+1}|^2) / |l_i|^2`` for one or many triangles."""
    tri = np.asarray(tri, dtype=float)
    single = tri.ndim == 2
    c = tri[None] if single else tri
    # |l_i|^2: edge opposite vertex i joins i+1 and i+2
    sq = np.stack(
        [np.sum((c[:, (i + 2) % 3] - c[:, (i + 1) % 3]) ** 2, axis=1) for i in range(3)], axis=1
    )
    if np.any(sq == 0):
        raise GeometryError("zero-length edge")
    e = np.stack([(sq[:, (i + 2) % 3] - sq[:, (i + 1) % 3]) / sq[:, i] for i in range(3)], axis=1)
    return e[0] if single else e


def altitude_feet(corners: np.ndarray, ecc: np.ndarray) -> np.ndarray:
    """Orthogonal projection ``c_i`` of ``a_i`` on edge ``l_i``, shape ``(m, 3, 2)``."""
    feet = []
    for i in range(3):
        p, q = corners[:, (i + 1) % 3], corners[:, (i + 2) % 3]
        feet.append(p + ((1 + ecc[:, i]) / 2)[:, None] * (q - p))
    return np.stack(feet, axis=1)


# --------------------------------------------------------------------------- local system


def _mono(xy: np.ndarray) -> np.ndarray:
    return xy[..., 0, None] ** _EXPS[:, 0] * xy[..., 1, None] ** _EXPS[:, 1]


def _mono_grad(xy: np.ndarray) -> np.ndarray:
    a, b = _EXPS[:, 0], _EXPS[:, 1]
    x, y = xy[..., 0, None], xy[..., 1, None]
    dx = np.where(a > 0, a * x ** np.maximum(a - 1, 0) * y**b, 0.0)
    dy = np.where(b > 0, b * x**a * y ** np.maximum(b - 1, 0), 0.0)
    return np.stack([dx, dy], axis=-1)  # (..., 10, 2)


def _row(sub: int, vec: np.ndarray) -> np.ndarray:
    r = np.zeros(30)
    r[10 * sub : 10 * sub + 10] = vec
    return r


@lru_cache(maxsize=None)
def _fixed_system():
    """Shape-independent rows of the local system and their DOF selectors.

    Returns ``(rows, select, mid_grad)`` where ``mid_grad[i]`` holds the
    monomial gradients at ``b_i``, used to build the shape-dependent rows.
    """
    rows, select = [], []
    for j in range(3):
        aj = _REF[j]
        d_prev = _REF[(j + 2) % 3] - aj  # a_j -> a_{j+2}
        d_next = _REF[(j + 1) % 3] - aj  # a_j -> a_{j+1}
        g = _mono_grad(aj)
        for sub in ((j + 1) % 3, (j + 2) % 3):
            for vec, dof in ((_mono(aj), 0), (g @ d_prev, 1), (g @ d_next, 2)):
                rows.append(_row(sub, vec))
                s = np.zeros(N_DOF)
                s[4 * j + dof] = 1.0
                select.append(s)
    # C0 and C1 across the split edge G-a_j, shared by T_{j+1} and T_{j+2}
    for j in range(3):
        s1, s2 = (j + 1) % 3, (j + 2) % 3
        for t in (0.0, 1 / 3, 2 / 3, 1.0):
            x = (1 - t) * _G + t * _REF[j]
            mv, mg = _mono(x), _mono_grad(x)
            rows.append(_row(s1, mv) - _row(s2, mv))
            select.append(np.zeros(N_DOF))
            for d in (0, 1):
                rows.append(_row(s1, mg[:, d]) - _row(s2, mg[:, d]))
                select.append(np.zeros(N_DOF))
    mids = np.array([(_REF[(i + 1) % 3] + _REF[(i + 2) % 3]) / 2 for i in range(3)])
    return np.array(rows), np.array(select), _mono_grad(mids)


@lru_cache(maxsize=None)
def _fixed_factor():
    """SVD of the shape-independent rows: particular map and null space.

    With the vertex DOFs fixed, the remaining freedom is three-dimensional;
    the midpoint rows pick one member of it per element.
    """
    rows, select, _ = _fixed_system()
    u, sv, vt = np.linalg.svd(rows)
    rank = int(np.sum(sv > 1e-10 * sv[0]))
    if rank != 27:
        raise AssertionError(f"fixed HCT rows have rank {rank}, expected 27")
    particular = vt[:rank].T @ ((u[:, :rank].T @ select) / sv[:rank, None])
    null = vt[rank:].T  # (30, 3)
    return particular, null


def local_maps(mesh: TriMesh, elements=None) -> np.ndarray:
    """Linear maps from the 12 DOFs to the 30 cubic coefficients, ``(n, 30, 12)``.

    The shape-independent rows are factored once by SVD; each element then
    solves a 3x3 system for its midpoint conditions.  The residual of the
    full system is checked per element.
    """
    if elements is None:
        elements = np.arange(mesh.n_triangles)
    elements = np.asarray(elements)
    rows, select, mid_grad = _fixed_system()
    particular, null = _fixed_factor()
    corners = mesh.corners[elements]
    ecc = eccentricities(corners)
    feet = altitude_feet(corners, ecc)
    jinv = mesh.inverse_jacobians[elements]
    n = len(elements)
    mid_rows = np.zeros((n, 3, 30))
    mid_sel = np.zeros((3, N_DOF))
    for i in range(3):
        w = np.einsum("nrx,nx->nr", jinv, corners[:, i] - feet[:, i])  # reference direction
        mid_rows[:, i, 10 * i : 10 * i + 10] = np.einsum("kr,nr->nk", mid_grad[i], w)
        mid_sel[i, 4 * i + 3] = 1.0
    small = mid_rows @ null  # (n, 3, 3)
    det = np.linalg.det(small)
    bad = np.flatnonzero(~(np.abs(det) > 1e-14))
    if len(bad):
        raise HCTError("singular HCT system (degenerate geometry)", int(elements[bad[0]]))
    rhs = mid_sel - mid_rows @ particular
    k = particular + null @ np.linalg.solve(small, rhs)
    resid = np.maximum(
        np.abs(rows @ k - select).max(axis=(1, 2)),
        np.abs(mid_rows @ k - mid_sel).max(axis=(1, 2)),
    )
    worst = np.flatnonzero(~(resid <= RESIDUAL_TOL))
    if len(worst):
        raise HCTError(f"HCT system residual {resid[worst[0]]:.3e}", int(elements[worst[0]]))
    return k


def element_dofs(sync: SyncData) -> np.ndarray:
    """The 12 DOFs per element from synchronized data, ``(m, 12)``."""
    mesh = sync.mesh
    tri = mesh.triangles
    corners = mesh.corners
    ecc = eccentricities(corners)
    feet = altitude_feet(corners, ecc)
    out = np.empty((mesh.n_triangles, N_DOF))
    for i in range(3):
        g = sync.gradients[tri[:, i]]
        ai = corners[:, i]
        out[:, 4 * i] = sync.values[tri[:, i]]
        out[:, 4 * i + 1] = np.einsum("nx,nx->n", g, corners[:, (i + 2) % 3] - ai)
        out[:, 4 * i + 2] = np.einsum("nx,nx->n", g, corners[:, (i + 1) % 3] - ai)
        e = mesh.triangle_edges[:, i]
        # a_i - c_i is normal to l_i, so only the normal slope contributes
        out[:, 4 * i + 3] = sync.normal_derivs[e] * np.einsum(
            "nx,nx->n", mesh.edge_normals[e], ai - feet[:, i]
        )
    return out


# --------------------------------------------------------------------------- surrogate


@dataclass(frozen=True, eq=False)
class HCTSurrogate:
    """Piecewise-cubic C1 surrogate: three cubic blocks per element."""

    mesh: TriMesh
    dofs: np.ndarray  # (m, 12)
    eccentricities: np.ndarray  # (m, 3)
    coeffs: np.ndarray  # (m, 3, 10), monomials in reference coordinates

    def _check(self, elements) -> np.ndarray:
        elements = np.asarray(elements)
        if elements.size and (elements.min() < 0 or elements.max() >= self.mesh.n_triangles):
            raise IndexError("element index out of range")
        return elements

    def evaluate(self, elements, bary, subtriangle=None) -> np.ndarray:
        elements = self._check(elements)
        bary = np.asarray(bary, dtype=float)
        if subtriangle is None:
            subtriangle = subtriangle_of(bary)
        c = self.coeffs[elements, subtriangle]
        return np.sum(_mono(bary[..., 1:]) * c, axis=-1)

    def gradient(self, elements, bary, subtriangle=None) -> np.ndarray:
        elements = self._check(elements)
        bary = np.asarray(bary, dtype=float)
        if subtriangle is None:
            subtriangle = subtriangle_of(bary)
        c = self.coeffs[elements, subtriangle]
        gref = np.einsum("...k,...kr->...r", c, _mono_grad(bary[..., 1:]))
        return np.einsum("...rx,...r->...x", self.mesh.inverse_jacobians[elements], gref)

    def evaluate_points(self, points, locator: Locator | None = None) -> np.ndarray:
        locator = locator or Locator(self.mesh)
        loc = locator(points)
        return self.evaluate(loc.element, loc.barycentric, loc.subtriangle)

    def recovered_dofs(self) -> np.ndarray:
        """Re-measure the 12 DOFs on the constructed cubics (duality check)."""
        mesh = self.mesh
        m = mesh.n_triangles
        corners = mesh.corners
        feet = altitude_feet(corners, self.eccentricities)
        out = np.empty((m, N_DOF))
        idx = np.arange(m)
        for i in range(3):
            sub = np.full(m, (i + 1) % 3)
            b = np.tile(np.eye(3)[i], (m, 1))
            out[:, 4 * i] = self.evaluate(idx, b, sub)
            g = self.gradient(idx, b, sub)
            out[:, 4 * i + 1] = np.einsum("nx,nx->n", g, corners[:, (i + 2) % 3] - corners[:, i])
            out[:, 4 * i + 2] = np.einsum("nx,nx->n", g, corners[:, (i + 1) % 3] - corners[:, i])
            gm = self.gradient(idx, np.tile(_MID_BARY[i], (m, 1)), np.full(m, i))
            out[:, 4 * i + 3] = np.einsum("nx,nx->n", gm, corners[:, i] - feet[:, i])
        return out


def build_surrogate(field_or_mesh, sync: SyncData | None = None) -> HCTSurrogate:
    """HCT-C surrogate from synchronized data.

    Accepts ``(field, sync)``, a bare ``field`` (synchronized here) or
    ``(mesh, sync)``.
    """
    if isinstance(field_or_mesh, DGField):
        mesh = field_or_mesh.mesh
        if sync is None:
            sync = synchronize(field_or_mesh)
    else:
        mesh = field_or_mesh
    if sync is None or sync.mesh is not mesh:
        raise ValueError("synchronized data must come from the same mesh")
    dofs = element_dofs(sync)
    coeffs = np.empty((mesh.n_triangles, 30))
    for c0 in range(0, mesh.n_triangles, _CHUNK):
        idx = np.arange(c0, min(c0 + _CHUNK, mesh.n_triangles))
        coeffs[idx] = np.einsum("nck,nk->nc", local_maps(mesh, idx), dofs[idx])
    ecc = eccentricities(mesh.corners)
    return HCTSurrogate(mesh, dofs, ecc, coeffs.reshape(-1, 3, 10))
