"""Small brute-force equivalence checks, run by ``kwise selftest``.

Each check is a named function returning ``None`` on success or a short
failure message. The Krawtchouk table provider can be swapped, which is how
the test suite plants a corrupted table.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from .closeness import closeness_exact, epsilon_k, mend_min_weight, fourier_distance_bound
from .constructions import chi2_bruteforce, chi2_tuple_vs_uniform, PairwiseShiftParams
from .cube_fourier import Density, fourier_transform, fourier_weight, inverse_transform
from .lp_solver import LinearProgram, solve
from .seeding import make_rng
from .special_poly import hermite, hermite_explicit, krawtchouk_table
from .testers import expected_delta

CHECKS = []


def check(fn):
    CHECKS.append(fn)
    return fn


def _table(provider, n, k):
    tab = provider(n, k)
    return [list(tab[j]) for j in range(k + 1)]


@check
def krawtchouk_definition(provider):
    for n in range(0, 11):
        tab = _table(provider, n, n)
        for k, t in itertools.product(range(n + 1), range(n + 1)):
            ref = sum((-1) ** j * math.comb(t, j) * math.comb(n - t, k - j) for j in range(k + 1))
            if tab[k][t] != ref:
                return f"K_{k}^({n})({t}) = {tab[k][t]}, defining sum gives {ref}"


@check
def krawtchouk_orthogonality(provider):
    n = 14
    tab = _table(provider, n, 6)
    for k, l in itertools.product(range(7), repeat=2):
        s = sum(math.comb(n, t) * tab[k][t] * tab[l][t] for t in range(n + 1))
        want = (1 << n) * math.comb(n, k) if k == l else 0
        if s != want:
            return f"orthogonality fails at k={k}, l={l}: {s} != {want}"


@check
def level_kernel_subsets(provider):
    n = 6
    tab = _table(provider, n, 4)
    for x, y in itertools.product(range(1 << n), repeat=2):
        d = bin(x ^ y).count("1")
        z = x ^ y
        for k in range(1, 5):
            brute = sum((-1) ** bin(z & S).count("1") for S in range(1 << n) if bin(S).count("1") == k)
            if brute != tab[k][d]:
                return f"level kernel mismatch at n={n}, k={k}, d={d}"
        if x > 8:
            break


@check
def hermite_forms(provider):
    z = np.linspace(-10, 10, 81)
    for k in range(0, 21):
        a = hermite(k, z)
        b = np.array([hermite_explicit(k, float(v)) for v in z])
        err = np.max(np.abs(a - b) / np.maximum(1.0, np.abs(a)))
        if err > 1e-9:
            return f"recurrence and explicit form differ by {err:.2e} at k={k}"


@check
def fourier_roundtrip(provider):
    rng = make_rng(11)
    for n in (1, 3, 6, 9):
        d = Density.from_weights(rng.random(1 << n))
        s = fourier_transform(d)
        back = inverse_transform(s)
        if np.max(np.abs(back.values - d.values)) > 1e-10:
            return f"round trip error at n={n}"
        if abs(np.sum(s.coeffs ** 2) - np.mean(d.values ** 2)) > 1e-7:
            return f"Parseval fails at n={n}"


@check
def symmetric_vs_explicit(provider):
    n = 9
    rng = make_rng(12)
    prof = rng.random(n + 1)
    pmf = np.array([math.comb(n, t) for t in range(n + 1)]) / 2 ** n
    d = Density.symmetric(n, prof / (pmf @ prof))
    a = fourier_transform(d).coeffs
    b = fourier_transform(d.to_explicit()).coeffs
    for j in range(n + 1):
        if abs(a[j] - b[(1 << j) - 1]) > 1e-10:
            return f"level {j} coefficient differs between modes"


@check
def delta_expectation(provider):
    rng = make_rng(13)
    for n, k in ((4, 1), (5, 2), (6, 3)):
        d = Density.from_weights(rng.random(1 << n) ** 2)
        if abs(expected_delta(d, k) - fourier_weight(d, 1, k)) > 1e-9:
            return f"E[Delta] != W at n={n}, k={k}"


@check
def lp_examples(provider):
    if solve(LinearProgram([1.0], [[1.0]], [3.0], "ge")).x[0] != 3.0:
        return "min x s.t. x >= 3 did not give 3"
    if solve(LinearProgram([0.0], [[1.0], [1.0]], [1.0, 0.0], ("ge", "le"))).status != "infeasible":
        return "contradictory bounds not infeasible"
    if solve(LinearProgram([-1.0], np.zeros((0, 1)), [], ())).status != "unbounded":
        return "min -x not unbounded"


@check
def closeness_chain(provider):
    rng = make_rng(14)
    for n, k in ((3, 1), (4, 2)):
        d = Density.from_weights(rng.random(1 << n) ** 3)
        dist = closeness_exact(d, k).distance
        w = mend_min_weight(d, k).w
        if not dist <= w + 1e-9 <= fourier_distance_bound(d, k) + 2e-6:
            return f"distance {dist:.6g}, mend {w:.6g}, bound {fourier_distance_bound(d, k):.6g} out of order"
        if k == 1 and dist > epsilon_k(d, 1) + 1e-9:
            return "k=1 distance exceeds max bias"


@check
def chi2_exact(provider):
    for n, m in ((4, 2), (6, 3)):
        a = chi2_tuple_vs_uniform(PairwiseShiftParams(n, 0.4, m))
        b = chi2_bruteforce(n, 0.4, m)
        if abs(a - b) > 1e-9:
            return f"chi2 mismatch at n={n}, m={m}: {a} vs {b}"


def run_selftest(provider=krawtchouk_table, names=None):
    """Run the checks; returns a list of ``(name, ok, message)``."""
    out = []
    for fn in CHECKS:
        if names and fn.__name__ not in names:
            continue
        try:
            msg = fn(provider)
        except Exception as exc:  # a crash is a failure of that check
            msg = f"{type(exc).__name__}: {exc}"
        out.append((fn.__name__, msg is None, msg or ""))
    return out


def format_report(results) -> str:
    lines = []
    for name, ok, msg in results:
        lines.append(f"{'PASS' if ok else 'FAIL'} {name}" + (f": {msg}" if msg else ""))
    npass = sum(ok for _, ok, _ in results)
    lines.append(f"{npass}/{len(results)} checks passed")
    return "\n".join(lines) + "\n"
