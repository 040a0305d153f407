"""Triangular meshes: representation, generation and the plain-text file format.

Vertex and triangle arrays are stored as read-only numpy arrays.  Derived
connectivity (edges, vertex-to-triangle adjacency) is computed lazily and
cached, so a :class:`TriMesh` can be shared between workers without copying.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay

log = logging.getLogger(__name__)

MESH_HEADER = "tri-mesh v1"


class MeshError(ValueError):
    """Invalid mesh geometry or topology."""


class MeshFormatError(ValueError):
    """Malformed mesh file."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Domain:
    """Axis-aligned rectangle ``[x0, x1] x [y0, y1]``."""

    x0: float
    x1: float
    y0: float
    y1: float

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError(f"empty domain {self}")

    @classmethod
    def square(cls, lo: float, hi: float) -> "Domain":
        return cls(lo, hi, lo, hi)

    @classmethod
    def parse(cls, text: str) -> "Domain":
        """Parse ``"x0,x1,y0,y1"``."""
        parts = [float(p) for p in text.split(",")]
        if len(parts) != 4:
            raise ValueError(f"domain needs 4 comma-separated numbers, got {text!r}")
        return cls(*parts)

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def diameter(self) -> float:
        return float(np.hypot(self.width, self.height))


def signed_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p = vertices[triangles]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Counterclockwise triangulation of a planar region.

    Local edge ``i`` of a triangle is the edge opposite its vertex ``i``,
    i.e. the edge joining local vertices ``i+1`` and ``i+2`` (mod 3).
    """

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 2:
            raise MeshError(f"vertices must have shape (n, 2), got {v.shape}")
        if t.ndim != 2 or t.shape[1] != 3:
            raise MeshError(f"triangles must have shape (m, 3), got {t.shape}")
        if len(t) == 0:
            raise MeshError("mesh has no triangles")
        if t.min() < 0 or t.max() >= len(v):
            raise MeshError("triangle references a vertex index out of range")
        areas = signed_areas(v, t)
        bad = np.flatnonzero(areas <= 0)
        if len(bad):
            raise MeshError(
                f"{len(bad)} triangle(s) with non-positive signed area, first is {bad[0]}"
            )
        object.__setattr__(self, "vertices", _readonly(v))
        object.__setattr__(self, "triangles", _readonly(t))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def __len__(self) -> int:
        return self.n_triangles

    @cached_property
    def areas(self) -> np.ndarray:
        return _readonly(signed_areas(self.vertices, self.triangles))

    @cached_property
    def corners(self) -> np.ndarray:
        """Vertex coordinates per triangle, shape ``(m, 3, 2)``."""
        return _readonly(self.vertices[self.triangles])

    @cached_property
    def jacobians(self) -> np.ndarray:
        """Affine map ``x = a1 + J @ (xi, eta)`` per triangle, shape ``(m, 2, 2)``."""
        c = self.corners
        jac = np.stack([c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]], axis=2)
        return _readonly(jac)

    @cached_property
    def inverse_jacobians(self) -> np.ndarray:
        return _readonly(np.linalg.inv(self.jacobians))

    @cached_property
    def h(self) -> float:
        """Largest edge length over all triangles."""
        c = self.corners
        lengths = np.linalg.norm(c - np.roll(c, -1, axis=1), axis=2)
        return float(lengths.max())

    @cached_property
    def bounds(self) -> tuple[float, float, float, float]:
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1])

    @cached_property
    def _edge_tables(self):
        t = self.triangles
        m = len(t)
        # local edge i joins local vertices i+1, i+2
        a = t[:, [1, 2, 0]].ravel()
        b = t[:, [2, 0, 1]].ravel()
        pairs = np.stack([np.minimum(a, b), np.maximum(a, b)], axis=1)
        edges, inverse, counts = np.unique(
            pairs, axis=0, return_inverse=True, return_counts=True
        )
        inverse = inverse.ravel()
        if counts.max() > 2:
            raise MeshError("non-manifold edge shared by more than two triangles")
        owner = np.repeat(np.arange(m), 3)
        local = np.tile(np.arange(3), m)
        # owners appear in increasing triangle order, so the first hit is the lower index
        order = np.argsort(inverse, kind="stable")
        first = np.ones(len(order), dtype=bool)
        first[1:] = inverse[order][1:] != inverse[order][:-1]
        left = np.full(len(edges), -1, dtype=np.int64)
        right = np.full(len(edges), -1, dtype=np.int64)
        left_local = np.full(len(edges), -1, dtype=np.int64)
        left[inverse[order][first]] = owner[order][first]
        left_local[inverse[order][first]] = local[order][first]
        right[inverse[order][~first]] = owner[order][~first]
        tri_edges = inverse.reshape(m, 3)
        return (
            _readonly(edges.astype(np.int64)),
            _readonly(np.stack([left, right], axis=1)),
            _readonly(tri_edges),
            _readonly(left_local),
        )

    @property
    def edges(self) -> np.ndarray:
        """Distinct edges as sorted vertex pairs, shape ``(e, 2)``."""
        return self._edge_tables[0]

    @property
    def edge_triangles(self) -> np.ndarray:
        """``(left, right)`` triangle per edge; ``left < right``, ``right == -1`` on the boundary."""
        return self._edge_tables[1]

    @property
    def triangle_edges(self) -> np.ndarray:
        """Global edge index of each local edge, shape ``(m, 3)``."""
        return self._edge_tables[2]

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        return _readonly(np.flatnonzero(self.edge_triangles[:, 1] < 0))

    @cached_property
    def interior_edges(self) -> np.ndarray:
        return _readonly(np.flatnonzero(self.edge_triangles[:, 1] >= 0))

    @cached_property
    def edge_normals(self) -> np.ndarray:
        """Unit normal per edge, pointing out of the left (lower-index) triangle."""
        e = self.edges
        left = self.edge_triangles[:, 0]
        local = self._edge_tables[3]
        tri = self.triangles[left]
        p = self.vertices[tri[np.arange(len(e)), (local + 1) % 3]]
        q = self.vertices[tri[np.arange(len(e)), (local + 2) % 3]]
        d = q - p
        # ccw triangle: outward normal of the directed edge p->q is (dy, -dx)
        n = np.stack([d[:, 1], -d[:, 0]], axis=1)
        return _readonly(n / np.linalg.norm(n, axis=1, keepdims=True))

    @cached_property
    def edge_midpoints(self) -> np.ndarray:
        return _readonly(self.vertices[self.edges].mean(axis=1))

    @cached_property
    def _v2t(self):
        flat = self.triangles.ravel()
        order = np.argsort(flat, kind="stable")
        counts = np.bincount(flat, minlength=self.n_vertices)
        offsets = np.concatenate([[0], np.cumsum(counts)])
        tris = order // 3
        return _readonly(offsets), _readonly(tris)

    def vertex_to_triangles(self, vertex: int) -> np.ndarray:
        """Triangles incident to ``vertex``, in increasing index order."""
        offsets, tris = self._v2t
        return tris[offsets[vertex] : offsets[vertex + 1]]

    @property
    def vertex_valence(self) -> np.ndarray:
        return np.diff(self._v2t[0])

    def to_physical(self, elements: np.ndarray, bary: np.ndarray) -> np.ndarray:
        """Map barycentric points to physical coordinates.

        ``bary`` is ``(..., 3)`` and broadcasts against ``elements``.
        """
        c = self.corners[elements]
        return np.einsum("...i,...ij->...j", bary, c)


# --------------------------------------------------------------------------- generators


def generate_structured(domain: Domain, n: int) -> TriMesh:
    """``n x n`` uniform cells, each split along its bottom-left to top-right diagonal."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    xs = np.linspace(domain.x0, domain.x1, n + 1)
    ys = np.linspace(domain.y0, domain.y1, n + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.stack([X.ravel(), Y.ravel()], axis=1)
    i, j = np.meshgrid(np.arange(n), np.arange(n))
    v00 = (j * (n + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    lower = np.stack([v00, v10, v11], axis=1)
    upper = np.stack([v00, v11, v01], axis=1)
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return TriMesh(vertices, triangles)


def generate_unstructured(domain: Domain, target_h: float, seed: int = 0) -> TriMesh:
    """Delaunay mesh of a jittered lattice with an exactly rectangular boundary.

    ``target_h`` plays the role of the longest-edge size ``h`` of the
    structured family, so lattice spacing is ``target_h / sqrt(2)`` and the
    element count is close to ``4 * area / target_h**2``.  Only interior
    points are jittered, by up to ``0.25 * target_h`` per coordinate.
    """
    if not target_h > 0:
        raise ValueError(f"target_h must be positive, got {target_h}")
    spacing = target_h / np.sqrt(2.0)
    nx = max(1, int(round(domain.width / spacing)))
    ny = max(1, int(round(domain.height / spacing)))
    xs = np.linspace(domain.x0, domain.x1, nx + 1)
    ys = np.linspace(domain.y0, domain.y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    points = np.stack([X.ravel(), Y.ravel()], axis=1)
    ii, jj = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1))
    interior = ((ii > 0) & (ii < nx) & (jj > 0) & (jj < ny)).ravel()

    rng = np.random.default_rng(seed)
    amp = 0.25 * target_h
    jitter = rng.uniform(-amp, amp, size=(int(interior.sum()), 2))
    # keep jittered points at least a quarter cell away from the boundary
    dx, dy = domain.width / nx, domain.height / ny
    moved = points[interior] + jitter
    moved[:, 0] = np.clip(moved[:, 0], domain.x0 + 0.25 * dx, domain.x1 - 0.25 * dx)
    moved[:, 1] = np.clip(moved[:, 1], domain.y0 + 0.25 * dy, domain.y1 - 0.25 * dy)
    points[interior] = moved

    try:
        tri = Delaunay(points)
    except Exception as exc:  # qhull raises its own error type
        raise MeshError(f"Delaunay triangulation failed: {exc}") from exc
    simplices = np.asarray(tri.simplices, dtype=np.int64)
    if len(tri.coplanar):
        raise MeshError(f"{len(tri.coplanar)} points dropped by the triangulation")
    areas = signed_areas(points, simplices)
    flip = areas < 0
    simplices[flip] = simplices[flip][:, [0, 2, 1]]
    if np.any(np.abs(areas) <= 1e-14 * domain.area):
        raise MeshError("degenerate triangle in Delaunay output")
    # canonical element order: sort by centroid (row-major), for stable numbering
    cent = points[simplices].mean(axis=1)
    order = np.lexsort((cent[:, 0], cent[:, 1]))
    return TriMesh(points, simplices[order])


# reference sizes per grid: (structured count, unstructured count, h)
# sequence number, for a domain of side 10.
GRID_TABLE = {
    1: (32, 28, 3.535534),
    2: (128, 124, 1.767767),
    3: (512, 512, 0.883883),
    4: (2048, 2064, 0.441942),
    5: (8192, 8220, 0.220971),
    6: (32768, 32964, 0.110485),
    7: (131072, 130800, 0.055243),
}


def grid_cells(grid: int) -> int:
    """Cells per side of structured grid ``grid`` (4, 8, ..., 256)."""
    if grid not in GRID_TABLE:
        raise ValueError(f"grid sequence number must be in 1..7, got {grid}")
    return 2 ** (grid + 1)


def structured_grid(grid: int, domain: Domain) -> TriMesh:
    return generate_structured(domain, grid_cells(grid))


def unstructured_grid(grid: int, domain: Domain, seed: int = 1) -> TriMesh:
    # same n per row whatever the domain; h scales with the side length
    h = domain.width / grid_cells(grid) * np.sqrt(2.0)
    return generate_unstructured(domain, h, seed)


# --------------------------------------------------------------------------- file IO


def format_mesh(mesh: TriMesh) -> str:
    lines = [MESH_HEADER, str(mesh.n_vertices)]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines.append(str(mesh.n_triangles))
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    return "\n".join(lines) + "\n"


def write_mesh(mesh: TriMesh, path) -> None:
    Path(path).write_text(format_mesh(mesh))


def parse_mesh(text: str) -> TriMesh:
    lines = text.splitlines()
    pos = 0

    def take() -> tuple[int, str]:
        nonlocal pos
        while pos < len(lines) and not lines[pos].strip():
            pos += 1
        if pos >= len(lines):
            raise MeshFormatError("unexpected end of file", pos + 1)
        pos += 1
        return pos, lines[pos - 1].strip()

    lineno, header = take()
    if header != MESH_HEADER:
        raise MeshFormatError(f"expected header {MESH_HEADER!r}, got {header!r}", lineno)

    def count() -> int:
        lineno, s = take()
        try:
            n = int(s)
        except ValueError:
            raise MeshFormatError(f"expected a count, got {s!r}", lineno) from None
        if n < 0:
            raise MeshFormatError("negative count", lineno)
        return n

    nv = count()
    vertices = np.empty((nv, 2))
    for i in range(nv):
        lineno, s = take()
        parts = s.split()
        if len(parts) != 2:
            raise MeshFormatError(f"expected 'x y', got {s!r}", lineno)
        try:
            vertices[i] = [float(parts[0]), float(parts[1])]
        except ValueError:
            raise MeshFormatError(f"bad coordinate in {s!r}", lineno) from None

    nt = count()
    triangles = np.empty((nt, 3), dtype=np.int64)
    for i in range(nt):
        lineno, s = take()
        parts = s.split()
        if len(parts) != 3:
            raise MeshFormatError(f"expected 'i j k', got {s!r}", lineno)
        try:
            idx = [int(p) for p in parts]
        except ValueError:
            raise MeshFormatError(f"bad vertex index in {s!r}", lineno) from None
        if min(idx) < 0 or max(idx) >= nv:
            raise MeshFormatError(f"vertex index out of range [0, {nv})", lineno)
        triangles[i] = idx

    try:
        return TriMesh(vertices, triangles)
    except MeshError as exc:
        raise MeshFormatError(str(exc)) from exc


def read_mesh(path) -> TriMesh:
    return parse_mesh(Path(path).read_text())
