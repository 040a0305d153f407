"""Point location in triangle meshes.

A bounding volume hierarchy narrows each query to a handful of candidate
triangles; membership is then decided by comparing the triangle area with
the sum of the absolute areas of the three triangles the query point forms
with its edges.  The per-point tree walk is compiled with numba.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .mesh import TriMesh

MEMBERSHIP_RTOL = 1e-12
BOX_EPS = 1e-9  # relative to the mesh bounding-box diameter


class GeometryError(ValueError):
    pass


class LocationError(RuntimeError):
    def __init__(self, point, index: int | None = None):
        self.point = tuple(float(c) for c in point)
        self.index = index
        where = f" (query {index})" if index is not None else ""
        super().__init__(f"no element contains point {self.point}{where}")


def _det(ax, ay, bx, by):
    return ax * by - ay * bx


def point_in_triangle(tri, p, rtol: float = MEMBERSHIP_RTOL) -> bool:
    """Boundary-inclusive containment via the sub-area sum test."""
    (x1, y1), (x2, y2), (x3, y3) = np.asarray(tri, dtype=float)
    px, py = p
    area = abs(_det(x2 - x1, y2 - y1, x3 - x1, y3 - y1))
    if area == 0.0:
        raise GeometryError("degenerate triangle")
    s = (
        abs(_det(x1 - px, y1 - py, x2 - px, y2 - py))
        + abs(_det(x2 - px, y2 - py, x3 - px, y3 - py))
        + abs(_det(x3 - px, y3 - py, x1 - px, y1 - py))
    )
    return bool(s - area <= rtol * area)


def barycentric(corners: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of ``points (n, 2)`` in triangles ``corners (n, 3, 2)``."""
    d = corners - points[:, None, :]
    # signed doubled areas of (p, a_{i+1}, a_{i+2})
    sub = np.stack(
        [
            _det(d[:, 1, 0], d[:, 1, 1], d[:, 2, 0], d[:, 2, 1]),
            _det(d[:, 2, 0], d[:, 2, 1], d[:, 0, 0], d[:, 0, 1]),
            _det(d[:, 0, 0], d[:, 0, 1], d[:, 1, 0], d[:, 1, 1]),
        ],
        axis=1,
    )
    e1 = corners[:, 1] - corners[:, 0]
    e2 = corners[:, 2] - corners[:, 0]
    area2 = _det(e1[:, 0], e1[:, 1], e2[:, 0], e2[:, 1])
    return sub / area2[:, None]


def _contains(bary: np.ndarray, rtol: float = MEMBERSHIP_RTOL) -> np.ndarray:
    # the sub-area sum test, normalised by the element area
    return np.abs(bary).sum(axis=1) - 1.0 <= rtol


def subtriangle_of(bary: np.ndarray, rtol: float = MEMBERSHIP_RTOL) -> np.ndarray:
    """Index ``i`` of the split triangle ``{G, a_{i+1}, a_{i+2}}`` holding each point.

    Ties (points on the internal split edges, or ``G`` itself) go to the
    lowest index.
    """
    bary = np.asarray(bary, dtype=float)
    out = np.full(bary.shape[:-1], -1, dtype=np.int64)
    for i in (2, 1, 0):
        li, lj, lk = bary[..., i], bary[..., (i + 1) % 3], bary[..., (i + 2) % 3]
        # barycentrics w.r.t. (G, a_{i+1}, a_{i+2})
        mu = np.stack([3 * li, lj - li, lk - li], axis=-1)
        inside = np.abs(mu).sum(axis=-1) - 1.0 <= rtol
        out[inside] = i
    missing = out < 0
    if np.any(missing):
        out[missing] = np.argmin(bary[missing], axis=-1)
    return out


@dataclass(frozen=True, eq=False)
class Bvh:
    """Binary tree of axis-aligned boxes; leaves own contiguous runs of ``order``."""

    lo: np.ndarray  # (nodes, 2)
    hi: np.ndarray
    left: np.ndarray  # child ids, -1 for leaves
    right: np.ndarray
    start: np.ndarray  # leaf range into ``order``
    stop: np.ndarray
    order: np.ndarray  # triangle permutation
    depth: int
    eps: float

    @property
    def n_nodes(self) -> int:
        return len(self.lo)

    @property
    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.left < 0)


def build_bvh(mesh: TriMesh, leaf_size: int = 1) -> Bvh:
    """Median-split BVH, built breadth first.

    Each node splits its triangles at the median centroid along the longer
    side of the centroid bounding box.  The result depends only on the mesh.
    """
    corners = mesh.corners
    tlo = corners.min(axis=1)
    thi = corners.max(axis=1)
    cent = corners.mean(axis=1)
    m = len(corners)
    order = np.arange(m)

    start = np.array([0])
    stop = np.array([m])
    left = np.array([-1])
    right = np.array([-1])
    level = np.array([0])
    frontier = np.array([0])
    depth = 0
    while True:
        frontier = frontier[(stop[frontier] - start[frontier]) > leaf_size]
        if len(frontier) == 0:
            break
        depth += 1
        s, e = start[frontier], stop[frontier]
        counts = e - s
        offs = np.concatenate([[0], np.cumsum(counts)[:-1]])
        seg = np.repeat(np.arange(len(frontier)), counts)
        pos = np.repeat(s - offs, counts) + np.arange(counts.sum())
        c = cent[order[pos]]
        cmin = np.minimum.reduceat(c, offs, axis=0)
        cmax = np.maximum.reduceat(c, offs, axis=0)
        axis = np.argmax(cmax - cmin, axis=1)
        key = c[np.arange(len(pos)), axis[seg]]
        # tie-break on triangle index keeps the build deterministic
        perm = np.lexsort((order[pos], key, seg))
        order[pos] = order[pos][perm]
        mid = s + counts // 2
        n, base = len(frontier), len(start)
        left[frontier] = base + np.arange(n)
        right[frontier] = base + n + np.arange(n)
        start = np.concatenate([start, s, mid])
        stop = np.concatenate([stop, mid, e])
        left = np.concatenate([left, np.full(2 * n, -1)])
        right = np.concatenate([right, np.full(2 * n, -1)])
        level = np.concatenate([level, np.full(2 * n, depth)])
        frontier = base + np.arange(2 * n)

    lo = np.empty((len(start), 2))
    hi = np.empty((len(start), 2))
    leaf = np.flatnonzero(left < 0)
    leaf = leaf[np.argsort(start[leaf])]
    lo[leaf] = np.minimum.reduceat(tlo[order], start[leaf], axis=0)
    hi[leaf] = np.maximum.reduceat(thi[order], start[leaf], axis=0)
    for d in range(depth, -1, -1):
        nodes = np.flatnonzero((level == d) & (left >= 0))
        lo[nodes] = np.minimum(lo[left[nodes]], lo[right[nodes]])
        hi[nodes] = np.maximum(hi[left[nodes]], hi[right[nodes]])
    x0, x1, y0, y1 = mesh.bounds
    eps = BOX_EPS * float(np.hypot(x1 - x0, y1 - y0))
    return Bvh(lo, hi, left, right, start, stop, order, depth, eps)


@njit(cache=True)
def _walk(points, lo, hi, left, right, start, stop, order, corners, areas2, eps, rtol):
    """Lowest-index triangle passing the area test per point (-1 if none)."""
    n = points.shape[0]
    out = np.full(n, -1, dtype=np.int64)
    stack = np.empty(128, dtype=np.int64)
    for q in range(n):
        px = points[q, 0]
        py = points[q, 1]
        best = -1
        top = 0
        stack[0] = 0
        top = 1
        while top > 0:
            top -= 1
            node = stack[top]
            if (
                px < lo[node, 0] - eps
                or px > hi[node, 0] + eps
                or py < lo[node, 1] - eps
                or py > hi[node, 1] + eps
            ):
                continue
            if left[node] >= 0:
                stack[top] = right[node]
                stack[top + 1] = left[node]
                top += 2
                continue
            for slot in range(start[node], stop[node]):
                t = order[slot]
                if best >= 0 and t >= best:
                    continue
                x1 = corners[t, 0, 0] - px
                y1 = corners[t, 0, 1] - py
                x2 = corners[t, 1, 0] - px
                y2 = corners[t, 1, 1] - py
                x3 = corners[t, 2, 0] - px
                y3 = corners[t, 2, 1] - py
                s = abs(x1 * y2 - y1 * x2) + abs(x2 * y3 - y2 * x3) + abs(x3 * y1 - y3 * x1)
                if s - areas2[t] <= rtol * areas2[t]:
                    best = t
        out[q] = best
    return out


def _candidates(bvh: Bvh, points: np.ndarray):
    """All (point, triangle) pairs whose eps-expanded leaf box holds the point."""
    pidx = np.arange(len(points))
    node = np.zeros(len(points), dtype=np.int64)
    out_p, out_t = [], []
    eps = bvh.eps
    while len(pidx):
        p = points[pidx]
        inside = np.all((p >= bvh.lo[node] - eps) & (p <= bvh.hi[node] + eps), axis=1)
        pidx, node = pidx[inside], node[inside]
        is_leaf = bvh.left[node] < 0
        if np.any(is_leaf):
            lp, ln = pidx[is_leaf], node[is_leaf]
            counts = bvh.stop[ln] - bvh.start[ln]
            rp = np.repeat(lp, counts)
            offs = np.repeat(bvh.start[ln] - np.concatenate([[0], np.cumsum(counts)[:-1]]), counts)
            slots = offs + np.arange(counts.sum())
            out_p.append(rp)
            out_t.append(bvh.order[slots])
        pidx, node = pidx[~is_leaf], node[~is_leaf]
        pidx = np.concatenate([pidx, pidx])
        node = np.concatenate([bvh.left[node], bvh.right[node]])
    if not out_p:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    return np.concatenate(out_p), np.concatenate(out_t)


@dataclass(frozen=True, eq=False)
class LocateResult:
    element: np.ndarray  # (n,)
    barycentric: np.ndarray  # (n, 3)
    subtriangle: np.ndarray  # (n,), 0-based split-triangle index

    def __len__(self) -> int:
        return len(self.element)


def _pick_lowest(pairs_p, pairs_t, ok, n):
    best = np.full(n, np.iinfo(np.int64).max)
    np.minimum.at(best, pairs_p[ok], pairs_t[ok])
    found = best != np.iinfo(np.int64).max
    return np.where(found, best, -1)


def locate(bvh: Bvh, mesh: TriMesh, points) -> LocateResult:
    """Containing element, barycentrics and split-triangle index per point.

    Points on shared edges or vertices resolve to the lowest element index.
    Points that pass no membership test are assigned the nearest candidate
    triangle if they lie within the BVH tolerance of it; otherwise
    :class:`LocationError` is raised.
    """
    points = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=float)))
    corners = mesh.corners
    elem = _walk(
        points, bvh.lo, bvh.hi, bvh.left, bvh.right, bvh.start, bvh.stop,
        bvh.order, corners, 2.0 * mesh.areas, bvh.eps, MEMBERSHIP_RTOL,
    )
    missing = np.flatnonzero(elem < 0)
    if len(missing):
        elem[missing] = _fallback(mesh, bvh, points[missing])
    bary = barycentric(corners[elem], points)
    return LocateResult(elem, bary, subtriangle_of(bary))


def _fallback(mesh: TriMesh, bvh: Bvh, pts: np.ndarray) -> np.ndarray:
    """Nearest candidate within ``bvh.eps`` for points that failed the area test."""
    cp, ct = _candidates(bvh, pts)
    lam = barycentric(mesh.corners[ct], pts[cp])
    lengths = np.linalg.norm(mesh.corners - np.roll(mesh.corners, -1, axis=1), axis=2)
    out = np.empty(len(pts), dtype=np.int64)
    for q in range(len(pts)):
        sel = np.flatnonzero(cp == q)
        if len(sel) == 0:
            raise LocationError(pts[q])
        tris = ct[sel]
        # distance outside ~ -lambda_min * altitude; altitude >= 2A / longest edge
        alt = 2 * mesh.areas[tris] / lengths[tris].max(axis=1)
        dist = np.maximum(-lam[sel].min(axis=1), 0.0) * alt
        best = np.lexsort((tris, dist))[0]
        if dist[best] > bvh.eps:
            raise LocationError(pts[q])
        out[q] = tris[best]
    return out


def brute_force_locate(mesh: TriMesh, points, chunk: int = 256) -> np.ndarray:
    """Lowest-index containing element by scanning every triangle (-1 if none)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    corners = mesh.corners
    m = len(corners)
    out = np.full(len(points), -1, dtype=np.int64)
    for c0 in range(0, len(points), chunk):
        pts = points[c0 : c0 + chunk]
        k = len(pts)
        cp = np.repeat(np.arange(k), m)
        ct = np.tile(np.arange(m), k)
        lam = barycentric(corners[ct], pts[cp])
        ok = _contains(lam).reshape(k, m)
        hit = ok.any(axis=1)
        out[c0 : c0 + k] = np.where(hit, ok.argmax(axis=1), -1)
    return out


class Locator:
    """BVH bound to its mesh, for repeated queries."""

    def __init__(self, mesh: TriMesh, leaf_size: int = 1):
        self.mesh = mesh
        self.bvh = build_bvh(mesh, leaf_size)

    def __call__(self, points) -> LocateResult:
        return locate(self.bvh, self.mesh, points)
