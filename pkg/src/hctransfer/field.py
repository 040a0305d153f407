"""Discontinuous piecewise-polynomial fields on triangular meshes.

Each element carries modal coefficients in an orthonormal (Dubiner-type)
basis of P_k on the reference triangle, k = 1, 2, 3.  Basis values and
gradients come from the Jacobi recurrence, which stays well conditioned
where expanded monomial coefficients would cancel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from math import factorial
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import eval_jacobi

from .mesh import Domain, TriMesh
from .quadrature import REFERENCE_AREA, CompositeRule, QuadSpec

FIELD_HEADER = "dg-field v1"
DEGREES = (1, 2, 3)


class FieldFormatError(ValueError):
    pass


def n_modes(k: int) -> int:
    return (k + 1) * (k + 2) // 2


def monomial_integral(a: int, b: int) -> float:
    """Exact integral of ``x**a y**b`` over the reference triangle."""
    return factorial(a) * factorial(b) / factorial(a + b + 2)


def _mode_indices(k: int) -> list[tuple[int, int]]:
    return [(d - q, q) for d in range(k + 1) for q in range(d + 1)]


@dataclass(frozen=True, eq=False)
class ModalBasis:
    """Orthonormal Dubiner basis of P_k on the reference triangle.

    Mode ``(p, q)`` is ``(1-y)**p P_p((2x-1+y)/(1-y)) P_q^(2p+1,0)(2y-1)``
    scaled to unit L2 norm.  The collapsed-coordinate factor is evaluated
    by its three-term recurrence in ``s = 2x-1+y`` and ``t = 1-y``, which
    stays polynomial (no division) and numerically tame up to the top vertex.
    """

    degree: int

    @property
    def size(self) -> int:
        return n_modes(self.degree)

    @cached_property
    def modes(self) -> list[tuple[int, int]]:
        return _mode_indices(self.degree)

    def _collapsed(self, xy):
        x, y = xy[..., 0], xy[..., 1]
        s, t = 2 * x - 1 + y, 1 - y
        one, zero = np.ones_like(x), np.zeros_like(x)
        q = [one, s]
        dq = [(zero, zero), (2 * one, one)]
        for n in range(1, self.degree):
            qn, qm = q[n], q[n - 1]
            (dqx, dqy), (dmx, dmy) = dq[n], dq[n - 1]
            q.append(((2 * n + 1) * s * qn - n * t * t * qm) / (n + 1))
            dq.append(
                (
                    ((2 * n + 1) * (2 * qn + s * dqx) - n * t * t * dmx) / (n + 1),
                    ((2 * n + 1) * (qn + s * dqy) - n * (t * t * dmy - 2 * t * qm)) / (n + 1),
                )
            )
        return q, dq

    def eval(self, xy: np.ndarray) -> np.ndarray:
        """Basis values at reference points ``(..., 2)`` -> ``(..., n_modes)``."""
        xy = np.asarray(xy, dtype=float)
        q, _ = self._collapsed(xy)
        z = 2 * xy[..., 1] - 1
        cols = []
        for p, qq in self.modes:
            norm = np.sqrt(2.0 * (2 * p + 1) * (p + qq + 1))
            cols.append(norm * q[p] * eval_jacobi(qq, 2 * p + 1, 0, z))
        return np.stack(cols, axis=-1)

    def grad(self, xy: np.ndarray) -> np.ndarray:
        """Reference gradients ``(..., n_modes, 2)``."""
        xy = np.asarray(xy, dtype=float)
        q, dq = self._collapsed(xy)
        z = 2 * xy[..., 1] - 1
        out = []
        for p, qq in self.modes:
            norm = np.sqrt(2.0 * (2 * p + 1) * (p + qq + 1))
            jac = eval_jacobi(qq, 2 * p + 1, 0, z)
            if qq > 0:
                djac = (qq + 2 * p + 2) * eval_jacobi(qq - 1, 2 * p + 2, 1, z)
            else:
                djac = np.zeros_like(z)
            dx = dq[p][0] * jac
            dy = dq[p][1] * jac + q[p] * djac
            out.append(norm * np.stack([dx, dy], axis=-1))
        return np.stack(out, axis=-2)

    def mass(self, rule: CompositeRule) -> np.ndarray:
        v = self.eval(rule.reference_xy)
        return (v * rule.weights[:, None]).T @ v


@lru_cache(maxsize=None)
def modal_basis(k: int) -> ModalBasis:
    """Orthonormal basis of P_k on the reference triangle."""
    if k not in DEGREES:
        raise ValueError(f"degree must be one of {DEGREES}, got {k}")
    return ModalBasis(k)


@lru_cache(maxsize=None)
def nodal_layout(k: int) -> np.ndarray:
    """Barycentric nodes: vertices, then edge nodes (edges a1a2, a2a3, a3a1), then interior."""
    if k not in DEGREES:
        raise ValueError(f"degree must be one of {DEGREES}, got {k}")
    nodes = [(1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)]
    for i in range(3):
        a = np.eye(3)[i]
        b = np.eye(3)[(i + 1) % 3]
        for s in range(1, k):
            nodes.append(tuple((1 - s / k) * a + (s / k) * b))
    if k == 3:
        nodes.append((1 / 3, 1 / 3, 1 / 3))
    out = np.array(nodes)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def _nodal_vandermonde(k: int):
    v = modal_basis(k).eval(nodal_layout(k)[:, 1:])
    return v, np.linalg.inv(v)


@dataclass(frozen=True, eq=False)
class DGField:
    """Per-element modal coefficients of degree ``degree`` on ``mesh``."""

    mesh: TriMesh
    degree: int
    coeffs: np.ndarray

    def __post_init__(self):
        if self.degree not in DEGREES:
            raise ValueError(f"degree must be one of {DEGREES}, got {self.degree}")
        c = np.array(self.coeffs, dtype=float)
        expected = (self.mesh.n_triangles, n_modes(self.degree))
        if c.shape != expected:
            raise ValueError(f"coefficient array has shape {c.shape}, expected {expected}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def basis(self) -> ModalBasis:
        return modal_basis(self.degree)

    def _check(self, elements) -> np.ndarray:
        elements = np.asarray(elements)
        if elements.size and (elements.min() < 0 or elements.max() >= self.mesh.n_triangles):
            raise IndexError("element index out of range")
        return elements

    def evaluate(self, elements, bary) -> np.ndarray:
        """Values at barycentric points; ``elements`` and ``bary[..., :]`` broadcast."""
        elements = self._check(elements)
        bary = np.asarray(bary, dtype=float)
        phi = self.basis.eval(bary[..., 1:])
        return np.sum(phi * self.coeffs[elements], axis=-1)

    def gradient(self, elements, bary) -> np.ndarray:
        """Physical ``(d/dx, d/dy)`` at barycentric points, shape ``(..., 2)``."""
        elements = self._check(elements)
        bary = np.asarray(bary, dtype=float)
        dphi = self.basis.grad(bary[..., 1:])  # (..., n, 2)
        gref = np.einsum("...n,...nr->...r", self.coeffs[elements], dphi)
        jinv = self.mesh.inverse_jacobians[elements]
        # grad_x = J^{-T} grad_ref
        return np.einsum("...rx,...r->...x", jinv, gref)

    def nodal_values(self) -> np.ndarray:
        """Values at :func:`nodal_layout` nodes, shape ``(m, n_nodes)``."""
        v, _ = _nodal_vandermonde(self.degree)
        return self.coeffs @ v.T

    @classmethod
    def from_nodal(cls, mesh: TriMesh, degree: int, values) -> "DGField":
        _, vinv = _nodal_vandermonde(degree)
        return cls(mesh, degree, np.asarray(values, dtype=float) @ vinv.T)

    @classmethod
    def constant(cls, mesh: TriMesh, degree: int, value: float) -> "DGField":
        # only the constant mode, so gradients vanish exactly
        coeffs = np.zeros((mesh.n_triangles, n_modes(degree)))
        coeffs[:, 0] = float(value) / modal_basis(degree).eval(np.zeros((1, 2)))[0, 0]
        return cls(mesh, degree, coeffs)

    def integral(self, rule: CompositeRule) -> float:
        """Sum over elements of the quadrature integral of the field."""
        phi = self.basis.eval(rule.reference_xy)
        per_ref = self.coeffs @ (phi.T @ rule.weights)
        per_elem = per_ref * (self.mesh.areas / REFERENCE_AREA)
        # correctly rounded, so totals do not depend on element order
        return math.fsum(per_elem.tolist())


# --------------------------------------------------------------------------- projection


def l2_project_samples(
    mesh: TriMesh, k: int, samples: np.ndarray, rule: CompositeRule
) -> np.ndarray:
    """Element-wise L2 projection from samples at the rule's points.

    ``samples`` has shape ``(m, n_points)``.  Returns modal coefficients
    ``(m, n_modes)`` solving ``M f = B`` per element, where both the mass
    matrix and the load vector carry the area ratio ``A_T / A_R``.
    """
    basis = modal_basis(k)
    if rule.degree < 2 * k:
        raise ValueError(f"rule of degree {rule.degree} too weak for k={k}")
    phi = basis.eval(rule.reference_xy)  # (q, n)
    ratio = mesh.areas / REFERENCE_AREA
    load = ratio[:, None] * ((samples * rule.weights) @ phi)
    m_ref = (phi * rule.weights[:, None]).T @ phi
    factor = cho_factor(m_ref)
    return cho_solve(factor, load.T).T / ratio[:, None]


def rule_points(mesh: TriMesh, rule: CompositeRule) -> np.ndarray:
    """Physical coordinates of every rule point in every element, ``(m, q, 2)``."""
    return np.einsum("qi,mij->mqj", rule.points, mesh.corners)


def project_analytic(
    mesh: TriMesh,
    k: int,
    f: Callable[[np.ndarray, np.ndarray], np.ndarray],
    rule: CompositeRule | QuadSpec | None = None,
) -> DGField:
    """Element-wise L2 projection of ``f(x, y)`` onto P_k."""
    if rule is None:
        rule = QuadSpec(15, 1).realize()
    elif isinstance(rule, QuadSpec):
        rule = rule.realize()
    xy = rule_points(mesh, rule)
    samples = np.asarray(f(xy[..., 0], xy[..., 1]), dtype=float)
    samples = np.broadcast_to(samples, xy.shape[:-1])
    return DGField(mesh, k, l2_project_samples(mesh, k, samples, rule))


# --------------------------------------------------------------------------- test functions


@dataclass(frozen=True)
class TestFunction:
    name: str
    f: Callable[[np.ndarray, np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]
    domain: Domain

    __test__ = False  # not a pytest class

    def __call__(self, x, y):
        return self.f(x, y)


def _u1(x, y):
    return np.exp(-1.5 * ((x - 10) ** 2 + (y - 10) ** 2))


def _u1_grad(x, y):
    g = _u1(x, y)
    return -3.0 * (x - 10) * g, -3.0 * (y - 10) * g


def _u2(x, y):
    return np.tanh(100 * (y + 0.3 * np.sin(-2 * x)))


def _u2_grad(x, y):
    sech2 = 1 - _u2(x, y) ** 2
    return 100 * sech2 * (-0.6 * np.cos(-2 * x)), 100 * sech2


def _u3(x, y):
    return 12 * np.exp(-0.3 * ((x - 10) ** 2 + (y - 10) ** 2)) + np.sin(2 * x) * np.sin(2 * y)


def _u3_grad(x, y):
    g = 12 * np.exp(-0.3 * ((x - 10) ** 2 + (y - 10) ** 2))
    return (
        -0.6 * (x - 10) * g + 2 * np.cos(2 * x) * np.sin(2 * y),
        -0.6 * (y - 10) * g + 2 * np.sin(2 * x) * np.cos(2 * y),
    )


_FUNCTIONS = {
    "u1": TestFunction("u1", _u1, _u1_grad, Domain.square(5.0, 15.0)),
    "u2": TestFunction("u2", _u2, _u2_grad, Domain.square(-1.0, 1.0)),
    "u3": TestFunction("u3", _u3, _u3_grad, Domain.square(5.0, 15.0)),
}


def test_function(name: str) -> TestFunction:
    try:
        return _FUNCTIONS[name]
    except KeyError:
        raise ValueError(f"unknown test function {name!r}; choose from {sorted(_FUNCTIONS)}") from None


test_function.__test__ = False


# --------------------------------------------------------------------------- IO


def format_field(field: DGField) -> str:
    lines = [FIELD_HEADER, str(field.degree), str(field.mesh.n_triangles)]
    lines += [" ".join(repr(c) for c in row) for row in field.coeffs.tolist()]
    return "\n".join(lines) + "\n"


def write_field(field: DGField, path) -> None:
    Path(path).write_text(format_field(field))


def read_field(path, mesh: TriMesh) -> DGField:
    lines = [ln for ln in Path(path).read_text().splitlines()]
    if not lines or lines[0].strip() != FIELD_HEADER:
        raise FieldFormatError(f"line 1: expected header {FIELD_HEADER!r}")
    try:
        degree = int(lines[1])
        count = int(lines[2])
    except (IndexError, ValueError):
        raise FieldFormatError("lines 2-3: expected degree and element count") from None
    if count != mesh.n_triangles:
        raise FieldFormatError(
            f"line 3: field has {count} elements, mesh has {mesh.n_triangles}"
        )
    rows = []
    for i in range(count):
        lineno = i + 4
        try:
            rows.append([float(v) for v in lines[i + 3].split()])
        except IndexError:
            raise FieldFormatError(f"line {lineno}: unexpected end of file") from None
        except ValueError:
            raise FieldFormatError(f"line {lineno}: bad coefficient") from None
        if len(rows[-1]) != n_modes(degree):
            raise FieldFormatError(f"line {lineno}: expected {n_modes(degree)} coefficients")
    return DGField(mesh, degree, np.array(rows))
