"""Study drivers over the structured-to-unstructured grid families, and VTK export."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .field import DGField, nodal_layout, project_analytic, test_function
from .hct import HCTSurrogate, build_surrogate
from .locate import Locator
from .mesh import GRID_TABLE, TriMesh, structured_grid, unstructured_grid
from .metrics import StudyRow, fill_orders, format_csv, l2_error, mass_variation
from .quadrature import QuadSpec
from .transfer import METHODS_BY_DEGREE, Method, TransferConfig, transfer

log = logging.getLogger(__name__)

QUADRATURE_SPECS = tuple(
    QuadSpec.parse(s) for s in ("15x0", "15x1", "3x0", "3x1", "3x2", "3x3", "6x1", "6x2")
)
DEFAULT_QUAD = QuadSpec(15, 1)


@dataclass
class StudyConfig:
    function: str = "u1"
    grids: tuple[int, ...] = (1, 2, 3, 4, 5, 6)
    degrees: tuple[int, ...] = (1, 2)
    methods: tuple[str, ...] | None = None  # None: the standard list per degree
    quads: tuple[QuadSpec, ...] = (DEFAULT_QUAD,)
    seed: int = 1
    csv_path: Path | None = None
    record_time: bool = False

    def __post_init__(self):
        self.grids = tuple(int(g) for g in self.grids)
        bad = [g for g in self.grids if g not in GRID_TABLE]
        if bad:
            raise ValueError(f"grid numbers must lie in 1..7, got {bad}")
        self.degrees = tuple(int(k) for k in self.degrees)
        self.quads = tuple(q if isinstance(q, QuadSpec) else QuadSpec.parse(q) for q in self.quads)
        if self.methods is not None:
            self.methods = tuple(Method(m).value for m in self.methods)
        test_function(self.function)

    def methods_for(self, k: int) -> tuple[Method, ...]:
        standard = METHODS_BY_DEGREE.get(k, (Method.TRANS1, Method.TRANS2))
        if self.methods is None:
            return standard
        return tuple(m for m in standard if m.value in self.methods)


@dataclass
class StudyReport:
    rows: list[StudyRow]
    mesh_counts: list[tuple[int, int, int, int, int]] = dc_field(default_factory=list)
    record_time: bool = False

    @property
    def csv(self) -> str:
        return format_csv(self.rows, with_time=self.record_time)

    def write(self, path) -> None:
        Path(path).write_text(self.csv)


def _grid_pair(grid: int, domain, seed: int, report: StudyReport):
    src = structured_grid(grid, domain)
    tgt = unstructured_grid(grid, domain, seed)
    ts, tu, _ = GRID_TABLE[grid]
    report.mesh_counts.append((grid, src.n_triangles, ts, tgt.n_triangles, tu))
    log.info(
        "grid %d: structured %d elements (table %d), unstructured %d elements (table %d)",
        grid, src.n_triangles, ts, tgt.n_triangles, tu,
    )
    return src, tgt


def _finish(cfg: StudyConfig, report: StudyReport) -> StudyReport:
    if cfg.csv_path is not None:
        report.write(cfg.csv_path)
    return report


def run_quadrature_study(cfg: StudyConfig) -> StudyReport:
    """Mass variation of TRANS1, k = 1 on u1 for each quadrature spec and grid."""
    f = test_function("u1")
    quads = cfg.quads if cfg.quads != (DEFAULT_QUAD,) else QUADRATURE_SPECS
    report = StudyReport([], record_time=cfg.record_time)
    for g in cfg.grids:
        src_mesh, tgt_mesh = _grid_pair(g, f.domain, cfg.seed, report)
        source = project_analytic(src_mesh, 1, f)
        locator = Locator(src_mesh)
        for q in quads:
            t0 = time.perf_counter()
            out = transfer(source, tgt_mesh, TransferConfig(Method.TRANS1, 1, q), locator)
            mv = mass_variation(source, out)
            report.rows.append(
                StudyRow(g, src_mesh.h, src_mesh.n_triangles, tgt_mesh.n_triangles, "TRANS1", 1,
                         str(q), mv, seconds=time.perf_counter() - t0)
            )
            log.info("grid %d quad %s: mv %.4e", g, q, mv)
    return _finish(cfg, report)


def _method_study(cfg: StudyConfig, with_error: bool) -> StudyReport:
    f = test_function(cfg.function)
    report = StudyReport([], record_time=cfg.record_time)
    for g in cfg.grids:
        src_mesh, tgt_mesh = _grid_pair(g, f.domain, cfg.seed, report)
        src_loc = Locator(src_mesh)
        tgt_loc = Locator(tgt_mesh) if with_error else None
        for k in cfg.degrees:
            source = project_analytic(src_mesh, k, f)
            surrogate = None
            for m in cfg.methods_for(k):
                for q in cfg.quads:
                    t0 = time.perf_counter()
                    if m is Method.TRANS2 and surrogate is None:
                        surrogate = build_surrogate(source)
                    out = transfer(source, tgt_mesh, TransferConfig(m, k, q), src_loc, surrogate)
                    mv = mass_variation(source, out)
                    err = l2_error(source, out, source_locator=src_loc, target_locator=tgt_loc) if with_error else None
                    report.rows.append(
                        StudyRow(g, src_mesh.h, src_mesh.n_triangles, tgt_mesh.n_triangles, m.value, k,
                                 str(q), mv, err, seconds=time.perf_counter() - t0)
                    )
                    log.info("grid %d k=%d %s %s: mv %.4e l2 %s", g, k, m.value, q, mv,
                             "-" if err is None else f"{err:.4e}")
    if with_error:
        fill_orders(report.rows)
    return _finish(cfg, report)


def run_mass_study(cfg: StudyConfig) -> StudyReport:
    """Mass variation of every method per degree and grid."""
    return _method_study(cfg, with_error=False)


def run_error_study(cfg: StudyConfig) -> StudyReport:
    """Mass variation, L2 error and per-step convergence order per method, degree and grid."""
    return _method_study(cfg, with_error=True)


# --------------------------------------------------------------------------- visualization

# children of a midpoint split, as indices into the 6 P2 layout nodes
_SUBCELLS = np.array([[0, 3, 5], [3, 1, 4], [5, 4, 2], [3, 4, 5]])


@dataclass(frozen=True, eq=False)
class VizExport:
    points: np.ndarray  # (n, 2)
    cells: np.ndarray  # (m, 3)
    value: np.ndarray  # (n,)
    grad_mag: np.ndarray  # (n,)

    def to_vtk(self, title: str = "hctransfer field") -> str:
        n, m = len(self.points), len(self.cells)
        out = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID"]
        out.append(f"POINTS {n} double")
        out += [f"{x!r} {y!r} 0.0" for x, y in self.points.tolist()]
        out.append(f"CELLS {m} {4 * m}")
        out += [f"3 {a} {b} {c}" for a, b, c in self.cells.tolist()]
        out.append(f"CELL_TYPES {m}")
        out += ["5"] * m
        out.append(f"POINT_DATA {n}")
        for name, data in (("value", self.value), ("grad_mag", self.grad_mag)):
            out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            out += [repr(v) for v in data.tolist()]
        return "\n".join(out) + "\n"

    def write(self, path, title: str = "hctransfer field") -> None:
        Path(path).write_text(self.to_vtk(title))


def subdivide(source: DGField | HCTSurrogate) -> VizExport:
    """Split every element at its edge midpoints and sample value and gradient magnitude.

    DG input keeps six private points per element so jumps stay visible; an
    HCT surrogate shares vertices and midpoints across elements.
    """
    mesh: TriMesh = source.mesh
    m = mesh.n_triangles
    nodes = nodal_layout(2)  # 3 vertices then midpoints of a1a2, a2a3, a3a1
    elems = np.repeat(np.arange(m), 6).reshape(m, 6)
    bary = np.broadcast_to(nodes, (m, 6, 3))
    value = source.evaluate(elems, bary)
    grad = np.linalg.norm(source.gradient(elems, bary), axis=-1)
    xy = np.einsum("qi,mij->mqj", nodes, mesh.corners)
    if isinstance(source, DGField):
        cells = (np.arange(m)[:, None, None] * 6 + _SUBCELLS).reshape(-1, 3)
        return VizExport(xy.reshape(-1, 2), cells, value.ravel(), grad.ravel())
    nv = mesh.n_vertices
    te = mesh.triangle_edges  # local edge i lies opposite vertex i
    ids = np.concatenate([mesh.triangles, nv + te[:, [2, 0, 1]]], axis=1)
    n = nv + len(mesh.edges)
    pts = np.zeros((n, 2))
    val = np.zeros(n)
    gm = np.zeros(n)
    pts[ids.ravel()] = xy.reshape(-1, 2)
    val[ids.ravel()] = value.ravel()
    gm[ids.ravel()] = grad.ravel()
    cells = np.take_along_axis(ids, _SUBCELLS.reshape(1, -1).repeat(m, 0), axis=1).reshape(-1, 3)
    return VizExport(pts, cells, val, gm)


def export_viz(source: DGField | HCTSurrogate, path, title: str = "hctransfer field") -> VizExport:
    viz = subdivide(source)
    viz.write(path, title)
    return viz
