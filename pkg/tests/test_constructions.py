import math
import warnings

import numpy as np
import pytest

from kwise.constructions import (
    ConstructionWarning,
    DensitySource,
    LowerBoundParams,
    PairwiseShiftParams,
    RepeatedStringSource,
    ShiftedPairwiseSource,
    UniformSource,
    chi2_bruteforce,
    chi2_geometric_bound,
    chi2_tuple_vs_uniform,
    epsilon_perturbed_family,
    lower_bound_density,
    lower_bound_profile,
    pairwise_density,
    psi_j_density,
    shifted_tuple_sampler,
)
from kwise.cube_fourier import (
    Density,
    NegativityError,
    bias,
    convolve,
    fourier_transform,
    fourier_weight,
    is_kwise_uniform,
    masks_by_level,
    shift,
)
from kwise.special_poly import krawtchouk


def test_mu_formula():
    p = LowerBoundParams(8, 2, 4.0)
    assert p.mu == pytest.approx(math.sqrt(2) / (2 * 8 ** 2))
    assert p.eps == pytest.approx(p.mu / math.sqrt(28))
    assert p.valid


def test_small_C_warns_or_raises():
    with pytest.warns(ConstructionWarning):
        p = LowerBoundParams(8, 2, 1.0)
    assert p.mu == pytest.approx(math.sqrt(2) / 8) and not p.valid
    with pytest.raises(ValueError):
        LowerBoundParams(8, 2, 1.0, strict=True)
    for bad in [(8, 3), (8, 0), (4, 6)]:
        with pytest.raises(ValueError):
            LowerBoundParams(*bad)


def test_mu_zero_is_uniform():
    d = lower_bound_density(LowerBoundParams(8, 2), mu=0.0)
    assert np.all(d.values == 1.0)


@pytest.mark.parametrize("n,k,C", [(8, 2, 1.0), (8, 2, 4.0), (10, 4, 4.0), (12, 2, 2.0)])
def test_lower_bound_spectrum(n, k, C):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConstructionWarning)
        p = LowerBoundParams(n, k, C)
    d = lower_bound_density(p)
    assert d.mode == "symmetric"
    prof = lower_bound_profile(n, k, p.mu)
    for t in range(n + 1):
        assert prof[t] == pytest.approx(1 + p.mu * krawtchouk(n, k, t) / math.sqrt(math.comb(n, k)))
    spec = fourier_transform(d.to_explicit()).coeffs
    lvl = masks_by_level(n, k, k)
    assert np.max(np.abs(spec[lvl] - p.eps)) <= 1e-10
    others = np.setdiff1d(np.arange(1, 1 << n), lvl)
    assert np.max(np.abs(spec[others])) <= 1e-12
    assert fourier_weight(d, k, k) == pytest.approx(p.mu ** 2, rel=1e-10)


def test_lower_bound_custom_mu():
    d = lower_bound_density(LowerBoundParams(8, 2), mu=0.1)
    assert bias(d.to_explicit(), 0b101) == pytest.approx(0.1 / math.sqrt(28))


def test_lower_bound_negativity_detected():
    with pytest.raises(NegativityError) as err:
        lower_bound_density(LowerBoundParams(8, 2), mu=5.0)
    assert err.value.point is not None


def test_lower_bound_large_n():
    d = lower_bound_density(LowerBoundParams(2000, 2))
    assert d.mean() == pytest.approx(1.0, abs=1e-9)


def test_pairwise_density():
    assert np.allclose(pairwise_density(5, 0.0).values, 1.0)
    d = pairwise_density(2, 0.6).to_explicit()
    assert np.allclose(d.values, [1.3, 0.7, 0.7, 1.3])
    for n in (6, 9, 12):
        spec = fourier_transform(pairwise_density(n, 0.5).to_explicit()).coeffs
        assert np.allclose(spec[masks_by_level(n, 2, 2)], 0.5 / n)


def test_pairwise_self_convolution():
    n, delta = 7, 0.8
    d = pairwise_density(n, delta).to_explicit()
    expect = pairwise_density(n, delta ** 2 / n).to_explicit()
    assert np.allclose(convolve(d, d).values, expect.values)


def test_shift_preserves_pairwise_uniformity():
    rng = np.random.Generator(np.random.PCG64(2))
    x = np.arange(1 << 8)
    base = Density.explicit(np.where(np.bitwise_count(x.astype(np.uint64)) % 2 == 0, 2.0, 0.0))
    for t in rng.integers(0, 256, size=5):
        assert is_kwise_uniform(shift(base, int(t)), 7)
    assert not is_kwise_uniform(shift(pairwise_density(8, 0.5).to_explicit(), 3), 2)


def test_chi2_examples():
    assert chi2_tuple_vs_uniform(PairwiseShiftParams(10, 0.7, 1)) == pytest.approx(0.0, abs=1e-15)
    delta = 0.9
    assert chi2_tuple_vs_uniform(PairwiseShiftParams(2, delta, 2)) == pytest.approx(delta ** 4 / 16, abs=1e-15)
    v = chi2_tuple_vs_uniform(PairwiseShiftParams(64, 0.5, 64))
    assert v <= 0.5 and v <= chi2_geometric_bound(64, 0.5, 64)


@pytest.mark.parametrize("n", range(2, 9))
def test_chi2_bruteforce(n):
    for m in range(1, 5):
        for delta in (0.2, 0.7):
            assert chi2_tuple_vs_uniform(PairwiseShiftParams(n, delta, m)) == pytest.approx(
                chi2_bruteforce(n, delta, m), abs=1e-9)


def test_chi2_geometric_bound_regime():
    assert chi2_geometric_bound(100, 0.5, 1000) == math.inf
    assert chi2_geometric_bound(100, 0.5, 10) == pytest.approx(sum(0.025 ** l for l in range(1, 11)))


def test_shift_sampler_single_marginal_uniform():
    n, trials = 6, 4000
    p = PairwiseShiftParams(n, 0.9, 1)
    idx = np.array([b.indices()[0] for b in shifted_tuple_sampler(p, trials, 4)], dtype=np.int64)
    counts = np.bincount(idx, minlength=1 << n)
    expected = trials / (1 << n)
    stat = float(np.sum((counts - expected) ** 2 / expected))
    # chi-square with 63 dof: mean 63, sd ~11
    assert stat < 63 + 5 * 11.3


def test_shift_sampler_zero_delta_uniform():
    p = PairwiseShiftParams(8, 0.0, 20_000)
    b = next(shifted_tuple_sampler(p, 1, 9))
    freq = np.bincount(b.indices().astype(np.int64), minlength=256) / 20_000
    assert np.max(np.abs(freq - 1 / 256)) < 5 * math.sqrt(1 / 256 / 20_000)


def test_shift_sampler_pair_correlation():
    # within a batch, x_i x_j has mean delta/n regardless of the shift
    n, delta, m = 8, 0.9, 400_000
    b = ShiftedPairwiseSource(n, delta).draw(m, 11)
    s = b.signs().astype(np.int64)
    corr = np.mean(s[:, 0] * s[:, 1] * s[:, 2] * s[:, 3])  # level-4 stays 0
    tt = (s[:, 0] * s[:, 1]).mean()
    # the shift flips the sign of x_1 x_2 by t_1 t_2, so compare magnitudes
    assert abs(abs(tt) - delta / n) < 5 / math.sqrt(m)
    assert abs(corr) < 5 / math.sqrt(m)


def test_shift_warns_outside_regime():
    with pytest.warns(ConstructionWarning):
        next(shifted_tuple_sampler(PairwiseShiftParams(4, 0.9, 100), 1, 0))


def test_psi_j():
    assert Density.point_mass(3, 0b111).values.tolist() == psi_j_density(3, 1).values.tolist()
    assert psi_j_density(2, 2).values.tolist() == [0, 0, 2, 2]
    n = 6
    for j in range(1, n + 1):
        d = psi_j_density(n, j)
        for i in range(1, n + 1):
            assert bias(d, 1 << (i - 1)) == (-1 if i >= j else 0)
    with pytest.raises(ValueError):
        psi_j_density(3, 4)


@pytest.mark.parametrize("shape", ["single-set", "random-signs-level-k", "planted-mixture"])
def test_family_max_bias(shape):
    assert np.all(epsilon_perturbed_family(5, 2, 0.0, shape, 0).values == 1)
    for n in (4, 8, 12):
        d = epsilon_perturbed_family(n, 2, 0.01, shape, 3)
        top = fourier_transform(d).max_abs(1, 2)
        assert top == pytest.approx(0.01, abs=1e-12)


def test_single_set_family():
    d = epsilon_perturbed_family(4, 2, 0.2, "single-set", 0, S=1)
    assert fourier_weight(d, 1, 2) == pytest.approx(0.04)
    with pytest.raises(NegativityError):
        epsilon_perturbed_family(4, 2, 1.5, "single-set", 0)


def test_sources():
    rng = np.random.Generator(np.random.PCG64(0))
    u = UniformSource(130).draw(50, rng)
    assert u.words.shape == (50, 3) and u.n == 130
    r = RepeatedStringSource(70).draw(5, 1)
    assert np.all(r.words == r.words[0])
    ds = DensitySource(Density.uniform(4))
    assert ds.supports_counts and ds.counts(100, 1).sum() == 100
    assert not DensitySource(Density.uniform(4, "symmetric")).supports_counts
