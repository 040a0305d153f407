"""Conservation and accuracy measures for a transfer, plus study-row plumbing."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, fields
from typing import Iterable, Sequence

import numpy as np

from .field import DGField
from .locate import Locator
from .quadrature import REFERENCE_AREA, QuadSpec, tensor_gauss_rectangle
from .transfer import mass

MASS_RULE = QuadSpec(15, 0)
GAUSS_POINTS = 40

CSV_COLUMNS = ("grid", "h", "elements_src", "elements_tgt", "method", "k", "quad", "mv", "l2", "order", "seconds")


def mass_variation(source: DGField, target: DGField) -> float:
    """``|mass(source) - mass(target)|`` with the 15-point rule per element."""
    if source is target:
        return 0.0
    rule = MASS_RULE.realize()
    return abs(mass(source, rule) - mass(target, rule))


def _sample(field: DGField, points: np.ndarray, locator: Locator | None) -> np.ndarray:
    loc = (locator or Locator(field.mesh))(points)
    return field.evaluate(loc.element, loc.barycentric)


def l2_error(
    source: DGField,
    target: DGField,
    n: int = GAUSS_POINTS,
    source_locator: Locator | None = None,
    target_locator: Locator | None = None,
) -> float:
    """L2 norm of ``source - target`` from an ``n x n`` Gauss rule over the bounding box."""
    x0, x1, y0, y1 = source.mesh.bounds
    pts, w = tensor_gauss_rectangle(n, x0, x1, y0, y1)
    u = _sample(source, pts, source_locator)
    g = u if target is source else _sample(target, pts, target_locator)
    return math.sqrt(math.fsum((w * (u - g) ** 2).tolist()))


def l2_error_fine(
    source: DGField,
    target: DGField,
    rule: QuadSpec = QuadSpec(15, 1),
    source_locator: Locator | None = None,
) -> float:
    """L2 norm of ``source - target`` integrated element by element on the target mesh.

    Only the source is piecewise across a target element, so this converges
    far faster than the fixed tensor Gauss rule once ``h`` drops below its
    point spacing.  Diagnostic companion to :func:`l2_error`.
    """
    r = rule.realize()
    mesh = target.mesh
    m = mesh.n_triangles
    xy = np.einsum("qi,mij->mqj", r.points, mesh.corners).reshape(-1, 2)
    u = _sample(source, xy, source_locator).reshape(m, -1)
    g = target.evaluate(np.repeat(np.arange(m), len(r)).reshape(m, -1), np.broadcast_to(r.points, (m, len(r), 3)))
    per_elem = ((u - g) ** 2 @ r.weights) * (mesh.areas / REFERENCE_AREA)
    return math.sqrt(math.fsum(per_elem.tolist()))


def convergence_order(errors: Sequence[float], hs: Sequence[float]) -> list[float | None]:
    """Orders between consecutive rows; ``None`` where an error is zero or h repeats."""
    if len(errors) != len(hs):
        raise ValueError("errors and hs must have the same length")
    out: list[float | None] = []
    for (e1, h1), (e2, h2) in zip(zip(errors, hs), zip(errors[1:], hs[1:])):
        if e1 <= 0 or e2 <= 0 or h1 == h2:
            out.append(None)
        else:
            out.append(math.log(e1 / e2) / math.log(h1 / h2))
    return out


def fitted_order(errors: Sequence[float], hs: Sequence[float]) -> float | None:
    """Least-squares slope of ``log E`` against ``log h``."""
    e = np.asarray(errors, dtype=float)
    h = np.asarray(hs, dtype=float)
    if len(e) < 2 or np.any(e <= 0):
        return None
    return float(np.polyfit(np.log(h), np.log(e), 1)[0])


@dataclass
class StudyRow:
    grid: int
    h: float
    elements_src: int
    elements_tgt: int
    method: str
    k: int
    quad: str
    mv: float
    l2: float | None = None
    order: float | None = None
    seconds: float = 0.0

    def __post_init__(self):
        if self.mv < 0 or (self.l2 is not None and self.l2 < 0):
            raise ValueError("mass variation and L2 error must be non-negative")

    def as_csv(self, with_time: bool = True) -> list[str]:
        def num(v):
            return "" if v is None else f"{v:.10e}"

        return [
            str(self.grid),
            f"{self.h:.6f}",
            str(self.elements_src),
            str(self.elements_tgt),
            self.method,
            str(self.k),
            self.quad,
            num(self.mv),
            num(self.l2),
            "" if self.order is None else f"{self.order:.4f}",
            f"{self.seconds:.3f}" if with_time else "",
        ]


def fill_orders(rows: list[StudyRow]) -> None:
    """Set ``order`` on each row from its predecessor in the same (method, k, quad) series."""
    series: dict[tuple, list[StudyRow]] = {}
    for r in rows:
        series.setdefault((r.method, r.k, r.quad), []).append(r)
    for group in series.values():
        group.sort(key=lambda r: r.grid)
        if any(r.l2 is None for r in group):
            continue
        orders = convergence_order([r.l2 for r in group], [r.h for r in group])
        group[0].order = None
        for r, o in zip(group[1:], orders):
            r.order = o


def format_csv(rows: Iterable[StudyRow], with_time: bool = True) -> str:
    """CSV text with a header; ``with_time=False`` blanks the runtime for reproducible output."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow(r.as_csv(with_time))
    return buf.getvalue()


def read_csv(text: str) -> list[StudyRow]:
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):

        def opt(key):
            return float(rec[key]) if rec[key] else None

        rows.append(
            StudyRow(
                grid=int(rec["grid"]),
                h=float(rec["h"]),
                elements_src=int(rec["elements_src"]),
                elements_tgt=int(rec["elements_tgt"]),
                method=rec["method"],
                k=int(rec["k"]),
                quad=rec["quad"],
                mv=float(rec["mv"]),
                l2=opt("l2"),
                order=opt("order"),
                seconds=opt("seconds") or 0.0,
            )
        )
    return rows


assert tuple(f.name for f in fields(StudyRow)) == CSV_COLUMNS
