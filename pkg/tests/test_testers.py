import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from kwise.constructions import DensitySource, RepeatedStringSource, UniformSource
from kwise.cube_fourier import Density, SampleBatch, fourier_transform, fourier_weight, sample
from kwise.testers import (
    DEFAULT_CONSTANTS,
    Constants,
    EstimationParams,
    ParameterError,
    SampleBoundError,
    delta_from_counts,
    delta_statistic,
    delta_statistic_trials,
    empirical_error_rate,
    estimation_test,
    expected_delta,
    filter_test,
    first_skewed_pair,
    kwise_test,
    l_k,
    majority_vote,
    overall_algorithm,
    overall_parameters,
    pair_kernel,
    variance_bound,
    wilson_interval,
)
from conftest import random_density, subset_character


def brute_pair_kernel(x, y, k, n):
    return sum(subset_character(S, x ^ y) for S in range(1, 1 << n) if bin(S).count("1") <= k)


class FixedBatch:
    """Sampler that always returns the same batch."""

    supports_counts = False

    def __init__(self, batch):
        self.batch = batch
        self.n = batch.n

    def draw(self, m, rng):
        assert m == self.batch.m
        return self.batch


def test_pair_kernel_examples():
    x = np.array([1, 1, 1])
    assert pair_kernel(x, x, 2) == 6
    assert pair_kernel(x, -x, 2) == 0
    assert pair_kernel(0b101, 0b101, 2, n=3) == 6
    with pytest.raises(ValueError):
        pair_kernel(np.array([1, 0, 1]), x, 1)
    with pytest.raises(ValueError):
        pair_kernel(x, np.array([1, 1]), 1)


def test_pair_kernel_bruteforce(rng):
    for _ in range(300):
        n = int(rng.integers(1, 13))
        k = int(rng.integers(1, min(4, n) + 1))
        x, y = (int(v) for v in rng.integers(0, 1 << n, size=2))
        assert pair_kernel(x, y, k, n=n) == brute_pair_kernel(x, y, k, n)


def test_delta_examples():
    x = np.array([[1, -1, 1]])
    assert delta_statistic(SampleBatch.from_signs(np.repeat(x, 5, axis=0)), 1) == 3
    assert delta_statistic(SampleBatch.from_signs(np.vstack([x, -x])), 1) == -3


@pytest.mark.parametrize("n,k,m", [(4, 1, 50), (6, 2, 120), (8, 3, 2000), (10, 2, 5)])
def test_delta_methods_agree_exactly(n, k, m):
    d = random_density(np.random.Generator(np.random.PCG64(n + m)), n)
    b = sample(d, m, 17)
    a = delta_statistic(b, k, method="pairs", exact=True)
    c = delta_statistic(b, k, method="counts", exact=True)
    assert isinstance(a, Fraction) and a == c
    if m <= 300:
        # brute force over all pairs
        idx = b.indices().astype(int).tolist()
        total = sum(brute_pair_kernel(x, y, k, n) for x, y in itertools.combinations(idx, 2))
        assert a == Fraction(total, m * (m - 1) // 2)
    assert delta_statistic_trials(b.indices()[None, :], n, k)[0] == pytest.approx(float(a), rel=1e-12)


def test_delta_statistic_wide_strings(rng):
    bits = rng.integers(0, 2, size=(40, 150)).astype(np.uint8)
    b = SampleBatch.from_bits(bits)
    s = 1 - 2 * bits.astype(np.int64)
    dots = s @ s.T
    iu = np.triu_indices(40, 1)
    # k = 1 kernel is the inner product
    assert delta_statistic(b, 1) == pytest.approx(dots[iu].mean())


@pytest.mark.parametrize("seed", range(10))
def test_expected_delta_is_fourier_weight(seed):
    rng = np.random.Generator(np.random.PCG64(seed))
    n = int(rng.integers(1, 9))
    k = int(rng.integers(1, min(3, n) + 1))
    d = random_density(rng, n, power=2)
    assert expected_delta(d, k) == pytest.approx(fourier_weight(d, 1, k), abs=1e-9)


def test_delta_unbiased_monte_carlo():
    d = random_density(np.random.Generator(np.random.PCG64(3)), 5, power=3)
    idx = np.stack([sample(d, 30, s).indices() for s in range(4000)])
    vals = delta_statistic_trials(idx, 5, 2)
    se = vals.std() / math.sqrt(vals.size)
    assert abs(vals.mean() - fourier_weight(d, 1, 2)) < 5 * se


def test_l_k_examples():
    for n in (3, 6):
        assert l_k(Density.uniform(n), 1) == pytest.approx(n)
    d = Density.explicit([2.0, 0.0, 2.0, 0.0])  # 1 + x_1 on n = 2
    coeffs = fourier_transform(d).coeffs
    direct = sum(coeffs[a ^ b] ** 2 for a in (1, 2) for b in (1, 2))
    assert l_k(d, 1) == pytest.approx(direct)


def test_l_k_double_sum(rng):
    n, k = 5, 2
    d = random_density(rng, n)
    c = fourier_transform(d).coeffs
    sets = [S for S in range(1, 1 << n) if bin(S).count("1") <= k]
    assert l_k(d, k) == pytest.approx(sum(c[a ^ b] ** 2 for a in sets for b in sets))


@pytest.mark.parametrize("seed", range(6))
def test_l_k_bound(seed):
    rng = np.random.Generator(np.random.PCG64(seed))
    n = int(rng.integers(4, 13))
    k = int(rng.integers(1, 3))
    d = random_density(rng, n, power=4)
    W = fourier_transform(d).level_weights()
    A = max(W[i] / n ** (i / 2) for i in range(0, 2 * k + 1))
    assert l_k(d, k) <= 2 ** (2 * k + 2) * A * n ** k


def test_estimation_decision_rule():
    b = sample(random_density(np.random.Generator(np.random.PCG64(5)), 4, power=4), 40, 2)
    delta = delta_statistic(b, 2)
    assert delta > 0
    src = FixedBatch(b)
    low = estimation_test(src, EstimationParams(2, delta / 0.5, 1.0, 40), 0, enforce_bound=False)
    high = estimation_test(src, EstimationParams(2, delta / 1.25, 1.0, 40), 0, enforce_bound=False)
    assert (low.decision, high.decision) == ("low", "high")
    assert low.threshold == pytest.approx(0.75 * delta / 0.5)
    assert low.consistent() and high.consistent()


def test_estimation_threshold_examples():
    p = EstimationParams(1, 0.04, 1.0, 10)
    assert p.low_threshold == pytest.approx(0.03)
    for realized, want in ((0.02, "low"), (0.05, "high")):
        assert ("low" if realized <= p.low_threshold else "high") == want


def test_sample_bound_enforced():
    src = DensitySource(Density.uniform(6))
    with pytest.raises(SampleBoundError):
        estimation_test(src, EstimationParams(2, 0.1, 1.0, 100), 0)


def test_estimation_uniform_low_rate():
    src = DensitySource(Density.uniform(16))
    p = EstimationParams(2, 0.1, 1.0, EstimationParams.required_m(16, 2, 0.1, 1.0))
    row, _ = empirical_error_rate(lambda s: estimation_test(src, p, s), 200, 1)
    assert row.accept_rate >= 0.75 - 0.05


def test_kwise_test_at_small_scale():
    # far source: distance confirmed exactly, then Monte Carlo with a modest m
    from kwise.closeness import closeness_exact
    n, k, delta = 6, 1, 0.19
    far = Density.explicit(np.where(np.arange(64) & 1, 0.6, 1.4))
    assert closeness_exact(far, k).distance >= delta
    c = DEFAULT_CONSTANTS.with_overrides({"est_const": 2.0})
    rej = [kwise_test(DensitySource(far), n, k, delta, s, constants=c).decision for s in range(40)]
    acc = [kwise_test(DensitySource(Density.uniform(n)), n, k, delta, s, constants=c).decision for s in range(40)]
    assert rej.count("reject") >= 30 and acc.count("accept") >= 30


def test_determinism():
    src = DensitySource(random_density(np.random.Generator(np.random.PCG64(1)), 8))
    a = kwise_test(src, 8, 2, 0.5, 99, m=5000, enforce_bound=False)
    b = kwise_test(src, 8, 2, 0.5, 99, m=5000, enforce_bound=False)
    assert a.statistic == b.statistic and a.decision == b.decision


def test_constants_overrides():
    c = DEFAULT_CONSTANTS.with_overrides({"est_const": 5})
    assert c.est_const == 5 and DEFAULT_CONSTANTS.est_const == 1000
    with pytest.raises(KeyError):
        DEFAULT_CONSTANTS.with_overrides({"bogus": 1})


def test_filter_examples():
    n = 16
    same = SampleBatch.from_indices(n, [5, 5])
    assert first_skewed_pair(same, 1.0) == (0, 1, n)
    half = SampleBatch.from_indices(n, [0, 0xFF])
    assert first_skewed_pair(half, 0.01) is None
    v = filter_test(RepeatedStringSource(64), 64, 7.9, 6, 0)
    assert v.decision == "reject"
    assert filter_test(FixedBatch(half), n, 0.01, 2, 0).decision == "accept"


def test_filter_first_pair_order():
    b = SampleBatch.from_indices(8, [1, 2, 3, 2, 1])
    s, u, dot = first_skewed_pair(b, 2.2)  # limit 6.22: only equal strings are skewed
    assert (s, u) == (0, 4) and dot == 8


def test_filter_uniform_accept_rate():
    src = UniformSource(64)
    row, _ = empirical_error_rate(lambda s: filter_test(src, 64, 7.9, 6, s), 100, 3)
    assert row.accept_rate >= 0.85


def test_overall_default_parameters():
    fp = overall_parameters(16, 1, 4, 0.5)
    t = math.sqrt(1e11 * 4 * math.e ** 4 * 16 * 16 / 0.0625)
    assert fp.kbar == 4 and fp.t == pytest.approx(t, rel=1e-12)
    assert fp.m1 == pytest.approx(math.sqrt(t ** 4 / 80), rel=1e-12)
    assert fp.m2 == math.floor(fp.m1 / 200)
    with pytest.raises(ParameterError) as err:
        overall_algorithm(UniformSource(16), 16, 1, 4, 0.5, 0)
    assert err.value.m1 == fp.m1


def test_overall_fully_uniform_parameters():
    fp = overall_parameters(64, 1, None, 0.5, mode="fully-uniform")
    assert fp.t ** 2 / 2 + math.log(0.1) == pytest.approx(2 * math.log(200 * 1005 * 2 * math.e ** 2 * fp.t * 8 / 0.25),
                                                          abs=1e-6)


def test_overall_with_overrides():
    kw = dict(t=7.9, m1=6, m2=20_000, constants=DEFAULT_CONSTANTS.with_overrides({"m2_ratio": 1e-5}))
    acc = overall_algorithm(UniformSource(64), 64, 1, 4, 0.5, 1, **kw)
    rej = overall_algorithm(RepeatedStringSource(64), 64, 1, 4, 0.5, 1, **kw)
    assert acc.decision == "accept" and rej.decision == "reject" and rej.details["stage"] == "filter"


def test_alpha_validation():
    with pytest.raises(ParameterError):
        overall_parameters(16, 2, 2, 0.5)
    with pytest.warns(UserWarning):
        assert overall_parameters(16, 1, 3, 0.5, t=10.0).kbar == 4


def test_majority_and_wilson():
    src = DensitySource(Density.uniform(4))
    v = majority_vote(lambda s: kwise_test(src, 4, 1, 0.5, s, m=200, enforce_bound=False), 5, 0)
    assert v.decision == "accept" and len(v.details["votes"]) == 5
    lo, hi = wilson_interval(70, 100)
    assert lo < 0.7 < hi
    assert wilson_interval(0, 10)[0] == 0.0


def test_threaded_trials_identical(monkeypatch):
    src = DensitySource(random_density(np.random.Generator(np.random.PCG64(1)), 6))
    test = lambda s: kwise_test(src, 6, 2, 0.5, s, m=3000, enforce_bound=False)
    r1, v1 = empirical_error_rate(test, 20, 5, workers=1)
    r4, v4 = empirical_error_rate(test, 20, 5, workers=4)
    assert r1 == r4 and [v.statistic for v in v1] == [v.statistic for v in v4]


def test_variance_bound_formula():
    assert variance_bound(4.0, 0.5, 2) == pytest.approx(4 * 4 / 4 + 4 * 2 * 0.5 / 2)
