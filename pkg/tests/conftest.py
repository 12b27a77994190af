import itertools

import numpy as np
import pytest

from kwise.cube_fourier import Density


def random_density(rng, n, power=2.0):
    """Explicit density with uneven weights (``power`` sharpens them)."""
    return Density.from_weights(rng.random(1 << n) ** power + 1e-3)


def subset_character(S, x):
    return (-1) ** bin(S & x).count("1")


def _vertices(G, h):
    n = G.shape[1]
    for idx in itertools.combinations(range(len(G)), n):
        sub = G[list(idx)]
        if abs(np.linalg.det(sub)) < 1e-9:
            continue
        x = np.linalg.solve(sub, h[list(idx)])
        if np.all(G @ x <= h + 1e-7):
            yield x


def _stack(A, b, senses, n):
    rows, rhs = [], []
    for a, bi, s in zip(np.asarray(A, float).reshape(-1, n), b, senses):
        if s in ("le", "eq"):
            rows.append(a)
            rhs.append(bi)
        if s in ("ge", "eq"):
            rows.append(-a)
            rhs.append(-bi)
    rows.extend(-np.eye(n))
    rhs.extend([0.0] * n)
    return np.array(rows).reshape(-1, n), np.array(rhs, float)


def vertex_enumeration(c, A, b, senses):
    """Optimum of ``min c@x`` over ``A x (sense) b, x >= 0`` by trying every
    vertex of the feasible set and of its normalized recession cone.

    Returns ``("optimal", value)``, ``("infeasible", None)`` or ``("unbounded", None)``.
    """
    c = np.asarray(c, float)
    n = c.size
    G, h = _stack(A, b, senses, n)
    # x >= 0 makes the feasible set pointed, so it is empty iff it has no vertex
    vals = [c @ x for x in _vertices(G, h)]
    if not vals:
        return "infeasible", None
    # improving ray: d in the recession cone with sum(d) = 1 and c@d < 0
    R = np.vstack([G, np.ones((1, n)), -np.ones((1, n))])
    r = np.concatenate([np.zeros(len(G)), [1.0, -1.0]])
    if any(c @ d < -1e-9 for d in _vertices(R, r)):
        return "unbounded", None
    return "optimal", float(min(vals))


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(1234))


# acceptance criteria report: number -> (ok, detail)
ACCEPTANCE = {}


def report_criterion(number, title, ok, detail):
    ACCEPTANCE[number] = (title, bool(ok), detail)
    print(f"criterion {number} {'PASS' if ok else 'FAIL'}: {title}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
