"""Symmetric triangle quadrature and its h-refinement into composite rules.

Points are barycentric triples ``(l1, l2, l3)`` on the reference triangle
with vertices ``(0, 0), (1, 0), (0, 1)``, so reference coordinates are
``(xi, eta) = (l2, l3)``.  Weights sum to the reference area 1/2.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence, Union

import numpy as np

REFERENCE_AREA = 0.5
MAX_REFINEMENT = 4


class QuadratureError(ValueError):
    """Unknown rule or invalid refinement request."""


def _s3():
    return [(1 / 3, 1 / 3, 1 / 3)]


def _s21(a):
    b = 1.0 - 2.0 * a
    return [(a, a, b), (a, b, a), (b, a, a)]


def _s111(a, b):
    c = 1.0 - a - b
    return [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]


def _rule(orbits):
    pts, wts = [], []
    for kind, params, weight in orbits:
        p = {"s3": _s3, "s21": _s21, "s111": _s111}[kind](*params)
        pts += p
        wts += [weight] * len(p)
    return np.array(pts), np.array(wts)


# Orbit parameters were obtained by solving the symmetric moment equations
# to machine precision; tests re-check them against exact monomial integrals.
# Weights here are for the reference triangle (sum 1/2).
_BASE_RULES = {
    3: (2, [("s21", (1 / 6,), 1 / 6)]),
    6: (
        4,
        [
            ("s21", (0.4459484909159648,), 0.11169079483900532),
            ("s21", (0.0915762135097723,), 0.054975871827661366),
        ],
    ),
    15: (
        7,
        [
            ("s21", (0.23199832207920457,), 0.05191349672897604),
            ("s21", (0.06438820145770871,), 0.026108397096173235),
            ("s21", (0.4124682486063848,), 0.019496011236493933),
            ("s111", (0.3124485841107389, 0.043487452722220835), 0.03457438080251171),
        ],
    ),
}

BASE_RULES = tuple(sorted(_BASE_RULES))


@lru_cache(maxsize=None)
def base_rule(npoints: int) -> tuple[np.ndarray, np.ndarray, int]:
    """``(points, weights, degree)`` of a base symmetric rule."""
    if npoints not in _BASE_RULES:
        raise QuadratureError(
            f"unknown base rule {npoints!r}; choose from {list(BASE_RULES)}"
        )
    degree, orbits = _BASE_RULES[npoints]
    pts, wts = _rule(orbits)
    pts.setflags(write=False)
    wts.setflags(write=False)
    return pts, wts, degree


@dataclass(frozen=True)
class QuadSpec:
    """A base rule applied on ``4**level`` congruent subtriangles."""

    base_rule: int = 15
    refinement_level: int = 1

    def __post_init__(self):
        if self.base_rule not in _BASE_RULES:
            raise QuadratureError(
                f"unknown base rule {self.base_rule!r}; choose from {list(BASE_RULES)}"
            )
        if not 0 <= self.refinement_level <= MAX_REFINEMENT:
            raise QuadratureError(
                f"refinement level must be in 0..{MAX_REFINEMENT}, got {self.refinement_level}"
            )

    @classmethod
    def parse(cls, text: str) -> "QuadSpec":
        """Parse the ``BASExLEVEL`` form, e.g. ``"15x1"``."""
        m = re.fullmatch(r"\s*(\d+)\s*[xX]\s*(\d+)\s*", text)
        if not m:
            raise QuadratureError(f"bad quadrature spec {text!r}, expected e.g. '15x1'")
        return cls(int(m.group(1)), int(m.group(2)))

    def __str__(self) -> str:
        return f"{self.base_rule}x{self.refinement_level}"

    @property
    def degree(self) -> int:
        return _BASE_RULES[self.base_rule][0]

    @property
    def npoints(self) -> int:
        return self.base_rule * 4**self.refinement_level

    def realize(self) -> "CompositeRule":
        return realize(self)


@dataclass(frozen=True, eq=False)
class CompositeRule:
    points: np.ndarray  # (n, 3) barycentric
    weights: np.ndarray  # (n,)
    degree: int

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def reference_xy(self) -> np.ndarray:
        return self.points[:, 1:]


def _split4(corners: np.ndarray) -> np.ndarray:
    """Split triangles ``(m, 3, 3)`` (corners in barycentric form) at edge midpoints."""
    a, b, c = corners[:, 0], corners[:, 1], corners[:, 2]
    ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
    children = np.stack(
        [
            np.stack([a, ab, ca], axis=1),
            np.stack([ab, b, bc], axis=1),
            np.stack([ca, bc, c], axis=1),
            np.stack([bc, ca, ab], axis=1),
        ],
        axis=1,
    )
    return children.reshape(-1, 3, 3)


def _map_rule(corners: np.ndarray, pts: np.ndarray, wts: np.ndarray, scale: float):
    mapped = np.einsum("qi,sij->sqj", pts, corners).reshape(-1, 3)
    weights = np.tile(wts * scale, len(corners))
    return mapped, weights


def realize(spec: QuadSpec) -> CompositeRule:
    """Points and weights of ``spec`` on the reference triangle."""
    return _realize(spec.base_rule, spec.refinement_level)


@lru_cache(maxsize=None)
def _realize(npoints: int, level: int) -> CompositeRule:
    pts, wts, degree = base_rule(npoints)
    corners = np.eye(3)[None]
    for _ in range(level):
        corners = _split4(corners)
    mapped, weights = _map_rule(corners, pts, wts, 4.0**-level)
    # snap rounding so barycentrics sum to one exactly
    mapped[:, 0] = 1.0 - mapped[:, 1] - mapped[:, 2]
    mapped.setflags(write=False)
    weights.setflags(write=False)
    return CompositeRule(mapped, weights, degree)


RefinementTree = Union[int, Sequence["RefinementTree"]]


def realize_tree(tree: RefinementTree) -> CompositeRule:
    """Non-uniform composite rule from a manual subdivision tree.

    A leaf is a base rule size (3, 6 or 15); an inner node is a list of four
    subtrees for the corner subtriangles at ``a``, ``b``, ``c`` and the
    middle one, as produced by a midpoint split.  ``[3, 3, 3, 15]`` is one
    split with a stronger rule in the middle subtriangle.
    """
    pts_out, wts_out, degrees = [], [], []

    def walk(node, corners, scale):
        if isinstance(node, (int, np.integer)):
            pts, wts, degree = base_rule(int(node))
            p, w = _map_rule(corners[None], pts, wts, scale)
            pts_out.append(p)
            wts_out.append(w)
            degrees.append(degree)
            return
        if len(node) != 4:
            raise QuadratureError("each refinement node needs exactly 4 children")
        for child, sub in zip(node, _split4(corners[None])):
            walk(child, sub, scale / 4)

    walk(tree, np.eye(3), 1.0)
    pts = np.concatenate(pts_out)
    pts[:, 0] = 1.0 - pts[:, 1] - pts[:, 2]
    return CompositeRule(pts, np.concatenate(wts_out), min(degrees))


def integrate_reference(rule: CompositeRule, f: Callable[[np.ndarray], np.ndarray]) -> float:
    """Integrate ``f`` over the reference triangle.

    ``f`` receives the ``(n, 3)`` barycentric points and returns ``n`` values.
    """
    values = np.asarray(f(rule.points), dtype=float)
    return float(values @ rule.weights)


def tensor_gauss_1d(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on ``[0, 1]``."""
    if not 1 <= n <= 64:
        raise QuadratureError(f"Gauss rule size must be in 1..64, got {n}")
    x, w = np.polynomial.legendre.leggauss(n)
    return (x + 1) / 2, w / 2


def tensor_gauss_rectangle(n: int, x0: float, x1: float, y0: float, y1: float):
    """``n x n`` tensor Gauss rule on a rectangle: ``(points (n*n, 2), weights)``."""
    x, w = tensor_gauss_1d(n)
    px = x0 + (x1 - x0) * x
    py = y0 + (y1 - y0) * x
    X, Y = np.meshgrid(px, py, indexing="ij")
    W = np.outer(w * (x1 - x0), w * (y1 - y0))
    return np.stack([X.ravel(), Y.ravel()], axis=1), W.ravel()
