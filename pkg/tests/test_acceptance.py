"""Acceptance criteria at their stated tolerances; one report line each."""
import itertools
import json
import math
import time
import warnings

import numpy as np
import pytest

from kwise.cli import main
from kwise.closeness import (
    closeness_exact,
    epsilon_k,
    fourier_distance_bound,
    lower_bound_witness,
    mend_min_weight,
    validate_witness,
)
from kwise.constructions import (
    DensitySource,
    LowerBoundParams,
    PairwiseShiftParams,
    RepeatedStringSource,
    UniformSource,
    chi2_bruteforce,
    chi2_tuple_vs_uniform,
    lower_bound_density,
)
from kwise.cube_fourier import Density, fourier_weight, sample
from kwise.special_poly import hermite, kravchuk_hermite_gap
from kwise.testers import (
    delta_statistic_trials,
    empirical_error_rate,
    expected_delta,
    filter_test,
    kwise_test,
    l_k,
    pair_kernel,
    variance_bound,
)
from conftest import random_density, report_criterion


def _rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


def test_criterion_1_estimator_unbiased():
    rng = _rng(101)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(1, 9))
        k = int(rng.integers(1, min(3, n) + 1))
        d = random_density(rng, n, power=float(rng.uniform(1, 4)))
        worst = max(worst, abs(expected_delta(d, k) - fourier_weight(d, 1, k)))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and elapsed < 10
    report_criterion(1, "E[Delta] = W^{1..k}", ok, f"max error {worst:.2e} over 50 densities in {elapsed:.2f}s")
    assert ok


def test_criterion_2_variance_bound():
    start = time.perf_counter()
    trials = 10_000
    rows, ok = [], True
    for n in (8, 10):
        d = random_density(_rng(200 + n), n, power=3)
        for k, m in itertools.product((1, 2, 3), (4, 16, 64)):
            idx = _draw_indices(d, m, trials, seed=1000 * n + 10 * k + m)
            vals = delta_statistic_trials(idx, n, k)
            bound = variance_bound(l_k(d, k), fourier_weight(d, 1, k), m)
            var = float(vals.var(ddof=1))
            rows.append((n, k, m, var / bound))
            ok &= var <= bound
    elapsed = time.perf_counter() - start
    ok &= elapsed < 120
    worst = max(rows, key=lambda r: r[3])
    report_criterion(2, "Var[Delta] <= variance bound", ok,
                     f"max Var/bound {worst[3]:.3f} at (n,k,m)={worst[:3]}, {len(rows)} settings in {elapsed:.1f}s")
    assert ok


def _draw_indices(d, m, trials, seed):
    # one batch of trials * m draws, split into trials; same law as per-trial sampling
    return sample(d, m * trials, seed).indices().reshape(trials, m)


def test_criterion_3_closeness_chain():
    rng = _rng(303)
    start = time.perf_counter()
    bad, slack = [], []
    for i in range(100):
        n = int(rng.integers(1, 9))
        k = int(rng.integers(1, min(3, n) + 1))
        d = random_density(rng, n, power=float(rng.uniform(1, 5)))
        dist = closeness_exact(d, k).distance
        w = mend_min_weight(d, k).w
        bound = fourier_distance_bound(d, k)
        good = dist <= w + 1e-9 and w <= bound + 1e-6
        if k == 1:
            good &= dist <= epsilon_k(d, 1) + 1e-9
        if not good:
            bad.append((i, n, k, dist, w, bound))
        slack.append(w / bound if bound else 0)
    elapsed = time.perf_counter() - start
    ok = not bad and elapsed < 300
    report_criterion(3, "distance <= mend weight <= e^k sqrt(W)", ok,
                     f"{100 - len(bad)}/100 chains hold, max mend/bound {max(slack):.3f}, {elapsed:.1f}s")
    assert ok, bad[:3]


def test_criterion_4_duality_sandwich():
    ok, parts = True, []
    for n in (6, 8, 10):
        params = LowerBoundParams(n, 2, 4.0)
        phi = lower_bound_density(params).to_explicit()
        w = lower_bound_witness(params)
        validate_witness(n, 2, w.p, w.q)
        dist = closeness_exact(phi, 2).distance
        good = 0 < w.value <= 2 * dist + 1e-6
        ok &= good
        parts.append(f"n={n}: {w.value:.4g} in (0, {2 * dist:.4g}]")
    report_criterion(4, "0 < dual value <= 2 * LP distance", ok, "; ".join(parts))
    assert ok


def test_criterion_5_chi2():
    worst = 0.0
    for n in range(2, 9):
        for m in range(1, 5):
            for delta in (0.1, 0.5, 0.9):
                a = chi2_tuple_vs_uniform(PairwiseShiftParams(n, delta, m))
                worst = max(worst, abs(a - chi2_bruteforce(n, delta, m)))
    checked, violations = 0, []
    for n in (10, 100, 1000, 10_000):
        for delta in (0.1, 0.5, 0.9):
            mmax = int(n / (2 * delta ** 2))
            for m in sorted({1, 2, 3, max(1, mmax // 10), max(1, mmax // 2), max(1, mmax)}):
                r = m * delta ** 2 / n
                if r > 0.5:
                    continue
                val = chi2_tuple_vs_uniform(PairwiseShiftParams(n, delta, m))
                bound = sum(r ** l for l in range(1, m + 1))
                checked += 1
                if val > bound:
                    violations.append((n, delta, m, val, bound))
    ok = worst <= 1e-9 and not violations
    report_criterion(5, "chi2 exact = brute force, <= geometric bound", ok,
                     f"max brute-force error {worst:.1e}; {checked - len(violations)}/{checked} bound checks hold")
    assert ok, violations[:3]


def test_criterion_6_tester_default_constants():
    n, k, delta, trials = 16, 2, 0.5, 200
    theta = (delta / math.e ** k) ** 2
    x = np.arange(1 << n)
    far = Density.explicit(1 + 2 * math.sqrt(theta) * (1 - 2 * (x & 1)))
    W = fourier_weight(far, 1, k)
    start = time.perf_counter()
    rates = {}
    for name, src in (("uniform", DensitySource(Density.uniform(n))), ("far", DensitySource(far))):
        row, _ = empirical_error_rate(lambda s: kwise_test(src, n, k, delta, s), trials, 6,
                                      construction=name, tester="kwise_test", n=n, k=k, delta=delta)
        rates[name] = row
    elapsed = time.perf_counter() - start
    acc = rates["uniform"].accept_rate
    rej = 1 - rates["far"].accept_rate
    ok = W > theta and acc >= 0.7 and rej >= 0.7 and elapsed < 600
    report_criterion(6, "kwise_test with default constants", ok,
                     f"m={rates['uniform'].m}, uniform accepted {acc:.1%}, W={W / theta:.2f} theta source "
                     f"rejected {rej:.1%}, {elapsed:.1f}s")
    assert ok


def test_criterion_7_filter():
    n, kbar, t, m1, trials = 64, 4, 7.9, 6, 200
    assert m1 ** 2 <= t ** kbar / (5 * kbar ** (kbar / 2))
    up, _ = empirical_error_rate(lambda s: filter_test(UniformSource(n), n, t, m1, s), trials, 7)
    adv, _ = empirical_error_rate(lambda s: filter_test(RepeatedStringSource(n), n, t, m1, s), trials, 8)
    ok = up.accept_rate >= 0.85 and adv.accept_rate == 0.0
    report_criterion(7, "Filter Test accept/reject rates", ok,
                     f"t={t}, m1={m1}: uniform accepted {up.accept_rate:.1%}, identical rejected "
                     f"{1 - adv.accept_rate:.1%}")
    assert ok


def _oracle_kernel(z, n, k):
    """sum_{1<=|S|<=k} (-1)^{|S & z|} by enumerating subsets."""
    S = np.arange(1, 1 << n, dtype=np.uint64)
    S = S[np.bitwise_count(S) <= k]
    par = np.bitwise_count(np.asarray(z, dtype=np.uint64)[:, None] & S[None, :]) & 1
    return (1 - 2 * par.astype(np.int64)).sum(axis=1)


def test_criterion_8_pair_kernel():
    checked, mismatches = 0, 0
    rng = _rng(808)
    for n in range(1, 11):
        if n <= 6:
            pairs = np.array(list(itertools.product(range(1 << n), repeat=2)), dtype=np.int64)
        elif n in (8, 10):
            pairs = rng.integers(0, 1 << n, size=(100_000, 2))
        else:
            continue
        z = pairs[:, 0] ^ pairs[:, 1]
        for k in range(1, min(4, n) + 1):
            want = _oracle_kernel(z, n, k)
            got = np.array([pair_kernel(int(x), int(y), k, n=n) for x, y in pairs])
            mismatches += int(np.sum(got != want))
            checked += len(pairs)
    # the sign-vector interface on a sample of pairs
    for _ in range(200):
        n = int(rng.integers(1, 11))
        x, y = (1 - 2 * rng.integers(0, 2, size=(2, n)))
        zb = sum(1 << i for i in range(n) if x[i] != y[i])
        k = int(rng.integers(1, min(4, n) + 1))
        mismatches += int(pair_kernel(x, y, k) != _oracle_kernel([zb], n, k)[0])
        checked += 1
    ok = mismatches == 0
    report_criterion(8, "pair_kernel = subset enumeration", ok, f"{checked - mismatches}/{checked} exact matches")
    assert ok


def test_criterion_9_hermite_krawtchouk():
    h = 1e-4
    z = np.linspace(-5, 5, 1001)
    fd_err = {}
    for k in range(1, 11):
        fd = (hermite(k, z + h) - hermite(k, z - h)) / (2 * h)
        fd_err[k] = float(np.max(np.abs(fd - math.sqrt(k) * hermite(k - 1, z))))
    fd_ok = all(e <= 1e-6 for e in fd_err.values())
    fd_bad = [k for k, e in fd_err.items() if e > 1e-6]

    p1 = all(np.all(np.abs(hermite(k, np.linspace(-k, k, 1000))) <= hermite(k, float(k)) + 1e-12)
             for k in range(0, 11))
    p2 = all(np.all(np.diff(hermite(k, np.linspace(k, 3 * k, 1000))) > 0) and hermite(k, float(k)) > 0
             for k in range(1, 11))
    p3 = all(hermite(k, C * k) <= (C * k) ** k / math.sqrt(math.factorial(k)) for C in (1, 2, 4) for k in range(1, 11))
    zs = np.linspace(-3, 3, 61)
    gaps = {k: (np.mean([kravchuk_hermite_gap(100, k, v) for v in zs]),
                np.mean([kravchuk_hermite_gap(10_000, k, v) for v in zs])) for k in range(1, 5)}
    shrink = all(b < a for a, b in gaps.values())
    ok = fd_ok and p1 and p2 and p3 and shrink
    detail = (f"finite difference {'ok' if fd_ok else f'error above 1e-6 for k={fd_bad}'} "
              f"(max {max(fd_err.values()):.2e} at k={max(fd_err, key=fd_err.get)}); "
              f"property 1 {p1}, property 2 {p2}, property 3 {p3}; gap shrinks {shrink} "
              f"({', '.join(f'k={k}: {a:.2e}->{b:.2e}' for k, (a, b) in gaps.items())})")
    report_criterion(9, "Hermite and Krawtchouk properties", ok, detail)
    assert ok, detail


def test_criterion_10_determinism(tmp_path):
    cfg = {"schema": "kwise-experiment/1", "command": "test",
           "construction": {"name": "uniform", "params": {"n": 16}},
           "tester": {"name": "kwise_test", "params": {"k": 2, "delta": 0.5}},
           "trials": 100, "seed": 7}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    outs = []
    for i in range(2):
        out = tmp_path / f"run{i}.csv"
        assert main(["test", "--config", str(path), "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    ok = outs[0] == outs[1] and len(outs[0]) > 0
    report_criterion(10, "byte-identical CSV on rerun", ok, f"{len(outs[0])} bytes, identical={outs[0] == outs[1]}")
    assert ok
