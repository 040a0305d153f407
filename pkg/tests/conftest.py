import numpy as np
import pytest

from hctransfer.mesh import Domain, TriMesh, structured_grid, unstructured_grid
from hctransfer.field import test_function as named_function

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def record():
    """Store a pass/fail line for an acceptance criterion."""

    def _record(number: int, ok: bool, detail: str) -> None:
        ACCEPTANCE[number] = (bool(ok), detail)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def unit_square():
    v = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    return TriMesh(v, np.array([[0, 1, 2], [0, 2, 3]]))


@pytest.fixture(scope="session")
def box():
    return Domain(5.0, 15.0, 5.0, 15.0)


@pytest.fixture(scope="session")
def grid3(box):
    return structured_grid(3, box), unstructured_grid(3, box)


@pytest.fixture(scope="session")
def u1():
    return named_function("u1")


@pytest.fixture(scope="session")
def u2():
    return named_function("u2")


@pytest.fixture(scope="session")
def u3():
    return named_function("u3")


def random_poly(rng, k):
    """Random polynomial of total degree k with its gradient, centred on [5,15]^2."""
    c = rng.standard_normal((k + 1, k + 1))
    terms = [(a, b) for a in range(k + 1) for b in range(k + 1 - a)]

    def f(x, y):
        X, Y = (np.asarray(x) - 10) / 5, (np.asarray(y) - 10) / 5
        return sum(c[a, b] * X**a * Y**b for a, b in terms) + 0 * X

    def grad(x, y):
        X, Y = (np.asarray(x) - 10) / 5, (np.asarray(y) - 10) / 5
        gx = sum(c[a, b] * a * X ** max(a - 1, 0) * Y**b for a, b in terms if a) + 0 * X
        gy = sum(c[a, b] * b * X**a * Y ** max(b - 1, 0) for a, b in terms if b) + 0 * X
        return gx / 5, gy / 5

    return f, grad
