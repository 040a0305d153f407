"""Solution transfer between non-matching triangular meshes.

Methods
-------
TRANS1     L2 projection of the raw discontinuous source field.
TRANS2     L2 projection of the synchronized HCT surrogate of the source.
TRANS3     TRANS1 followed by clamping to local source bounds (k = 1).
LINEAR     Source sampled at target vertices, linear per element.
QUADRATIC  Source sampled at the six P2 nodes of each target element (k = 2).
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from enum import Enum

import numpy as np

from .field import DGField, _nodal_vandermonde, l2_project_samples, modal_basis, nodal_layout, rule_points
from .hct import HCTSurrogate, build_surrogate
from .locate import Locator, LocationError, barycentric, _candidates
from .mesh import TriMesh
from .quadrature import REFERENCE_AREA, CompositeRule, QuadSpec

log = logging.getLogger(__name__)

LIMITER_RTOL = 1e-9
_CHUNK_ELEMENTS = 8192


class TransferError(RuntimeError):
    pass


class Method(str, Enum):
    TRANS1 = "TRANS1"
    TRANS2 = "TRANS2"
    TRANS3 = "TRANS3"
    LINEAR = "LINEAR"
    QUADRATIC = "QUADRATIC"

    def __str__(self) -> str:
        return self.value


METHODS_BY_DEGREE = {
    1: (Method.TRANS1, Method.TRANS2, Method.TRANS3, Method.LINEAR),
    2: (Method.TRANS1, Method.TRANS2, Method.LINEAR, Method.QUADRATIC),
}

_VALID_DEGREES = {
    Method.TRANS1: (1, 2, 3),
    Method.TRANS2: (1, 2, 3),
    Method.TRANS3: (1,),
    Method.LINEAR: (1, 2),
    Method.QUADRATIC: (2,),
}


@dataclass(frozen=True)
class TransferConfig:
    method: Method
    degree: int
    quad: QuadSpec = dc_field(default_factory=lambda: QuadSpec(15, 1))

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if self.degree not in _VALID_DEGREES[self.method]:
            raise ValueError(
                f"{self.method} is defined for k in {_VALID_DEGREES[self.method]}, got k={self.degree}"
            )

    @property
    def limiter_enabled(self) -> bool:
        return self.method is Method.TRANS3


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("HCT_THREADS", "1")))
    except ValueError:
        return 1


def _chunked(fn, n: int, chunk: int | None = None) -> np.ndarray:
    """Apply ``fn(slice)`` over element chunks; results concatenated in order."""
    chunk = chunk or _CHUNK_ELEMENTS
    slices = [slice(i, min(i + chunk, n)) for i in range(0, n, chunk)]
    workers = min(_threads(), len(slices))
    if workers <= 1:
        parts = [fn(s) for s in slices]
    else:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(fn, slices))
    return np.concatenate(parts)


# --------------------------------------------------------------------------- projection


@dataclass(frozen=True, eq=False)
class ProjectionSystem:
    """Local L2-projection system ``M f = B`` of one target element."""

    mass: np.ndarray
    load: np.ndarray
    solution: np.ndarray
    area_ratio: float


def projection_system(
    mesh: TriMesh, element: int, samples: np.ndarray, rule: CompositeRule, k: int
) -> ProjectionSystem:
    phi = modal_basis(k).eval(rule.reference_xy)
    ratio = float(mesh.areas[element] / REFERENCE_AREA)
    mass = ratio * (phi * rule.weights[:, None]).T @ phi
    load = ratio * (phi.T @ (rule.weights * samples))
    return ProjectionSystem(mass, load, np.linalg.solve(mass, load), ratio)


def _sample_source(source, locator: Locator, points: np.ndarray) -> np.ndarray:
    try:
        loc = locator(points)
    except LocationError as exc:
        raise TransferError(f"transfer failed: {exc}") from exc
    if isinstance(source, HCTSurrogate):
        return source.evaluate(loc.element, loc.barycentric, loc.subtriangle)
    return source.evaluate(loc.element, loc.barycentric)


def _project(source, target: TriMesh, k: int, rule: CompositeRule, locator: Locator) -> DGField:
    xy = rule_points(target, rule)

    def work(s: slice) -> np.ndarray:
        pts = xy[s].reshape(-1, 2)
        return _sample_source(source, locator, pts).reshape(-1, len(rule))

    samples = _chunked(work, target.n_triangles)
    return DGField(target, k, l2_project_samples(target, k, samples, rule))


def _interpolate(source: DGField, target: TriMesh, k: int, nodes_deg: int, locator: Locator) -> DGField:
    """Sample the source at target nodes of degree ``nodes_deg`` and lift to degree ``k``."""
    nodes = nodal_layout(nodes_deg)
    xy = np.einsum("qi,mij->mqj", nodes, target.corners)
    vals = _sample_source(source, locator, xy.reshape(-1, 2)).reshape(target.n_triangles, -1)
    if nodes_deg == k:
        return DGField.from_nodal(target, k, vals)
    # P1 data on a P_k layout: interpolate linearly at the finer nodes
    return DGField.from_nodal(target, k, vals @ nodal_layout(k).T)


def transfer(
    source: DGField,
    target: TriMesh,
    cfg: TransferConfig,
    locator: Locator | None = None,
    surrogate: HCTSurrogate | None = None,
) -> DGField:
    """Move ``source`` onto ``target`` with the method in ``cfg``.

    ``locator`` (a BVH over the source mesh) and ``surrogate`` may be passed
    in to reuse them across calls.
    """
    if source.degree != cfg.degree:
        raise ValueError(f"source degree {source.degree} does not match config k={cfg.degree}")
    locator = locator or Locator(source.mesh)
    k = cfg.degree
    method = cfg.method
    if method in (Method.TRANS1, Method.TRANS3):
        out = _project(source, target, k, cfg.quad.realize(), locator)
        if method is Method.TRANS3:
            out = limit(out, source, locator)
        return out
    if method is Method.TRANS2:
        surrogate = surrogate or build_surrogate(source)
        return _project(surrogate, target, k, cfg.quad.realize(), locator)
    if method is Method.LINEAR:
        return _interpolate(source, target, k, 1, locator)
    if method is Method.QUADRATIC:
        return _interpolate(source, target, k, 2, locator)
    raise ValueError(f"unknown method {method}")


# --------------------------------------------------------------------------- limiting


def local_bounds(source: DGField, points: np.ndarray, locator: Locator):
    """Min/max of source nodal values over the source elements touching each point."""
    mesh = source.mesh
    nodal = source.nodal_values()
    emin, emax = nodal.min(axis=1), nodal.max(axis=1)
    cp, ct = _candidates(locator.bvh, points)
    lam = barycentric(mesh.corners[ct], points[cp])
    ok = np.abs(lam).sum(axis=1) - 1.0 <= LIMITER_RTOL
    lo = np.full(len(points), np.inf)
    hi = np.full(len(points), -np.inf)
    np.minimum.at(lo, cp[ok], emin[ct[ok]])
    np.maximum.at(hi, cp[ok], emax[ct[ok]])
    missing = np.flatnonzero(~np.isfinite(lo))
    if len(missing):
        loc = locator(points[missing])
        lo[missing] = emin[loc.element]
        hi[missing] = emax[loc.element]
    return lo, hi


_ULP_STEPS = np.stack(np.meshgrid(*[np.arange(-3, 4)] * 3, indexing="ij"), -1).reshape(-1, 3)
_ULP_STEPS = _ULP_STEPS[np.argsort(np.abs(_ULP_STEPS).sum(axis=1), kind="stable")]


def _exact_modal(nodal: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Modal coefficients whose re-evaluated nodal values stay inside ``[lo, hi]``.

    The nodal/modal round trip can drift by an ulp or two, which matters when
    a bound interval is only a few ulps wide.  Offending elements get their
    nodal targets perturbed by the smallest ulp offsets that restore the bound.
    """
    v, vinv = _nodal_vandermonde(1)
    coeffs = nodal @ vinv.T
    back = coeffs @ v.T
    bad = np.flatnonzero(np.any((back > hi) | (back < lo), axis=1))
    if not len(bad):
        return coeffs
    ulp = np.spacing(np.abs(nodal[bad]).max(axis=1))[:, None, None]
    tries = nodal[bad, None, :] + _ULP_STEPS * ulp
    cand = tries @ vinv.T
    ok = np.all((cand @ v.T >= lo[bad, None]) & (cand @ v.T <= hi[bad, None]), axis=2)
    if not ok.any(axis=1).all():
        raise TransferError("limiter could not meet its bounds after rounding correction")
    coeffs[bad] = cand[np.arange(len(bad)), ok.argmax(axis=1)]
    return coeffs


def limit(target: DGField, source: DGField, locator: Locator | None = None) -> DGField:
    """Clamp target vertex values into the local range of the source nodal values.

    Values already inside their bounds are left untouched.  No mass is
    redistributed, so the result is generally not conservative.
    """
    if target.degree != 1 or source.degree != 1:
        raise ValueError("the limiter is only defined for k = 1")
    locator = locator or Locator(source.mesh)
    mesh = target.mesh
    lo_v, hi_v = local_bounds(source, mesh.vertices, locator)
    nodal = target.nodal_values()
    lo = lo_v[mesh.triangles]
    hi = hi_v[mesh.triangles]
    clamped = np.minimum(np.maximum(nodal, lo), hi)
    changed = np.any(clamped != nodal, axis=1)
    coeffs = np.array(target.coeffs)
    if np.any(changed):
        coeffs[changed] = _exact_modal(clamped[changed], lo[changed], hi[changed])
    log.debug("limiter touched %d of %d elements", int(changed.sum()), mesh.n_triangles)
    return DGField(mesh, 1, coeffs)


# --------------------------------------------------------------------------- mass


def mass(field: DGField, rule: CompositeRule | QuadSpec | None = None) -> float:
    """Integral of ``field`` over its mesh, element by element."""
    if rule is None:
        rule = QuadSpec(15, 0).realize()
    elif isinstance(rule, QuadSpec):
        rule = rule.realize()
    if rule.degree < field.degree:
        raise ValueError("rule too weak for the field degree")
    return field.integral(rule)
