"""Instance builders: the symmetric degree-k lower-bound density, the pairwise
density and its random shifts, the k=1 mending densities, and perturbed
families for tester experiments."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp
from scipy.stats import binom

from .cube_fourier import (
    Density,
    DensityError,
    NegativityError,
    SampleBatch,
    fourier_transform,
    fwht,
    masks_by_level,
    random_strings_of_weight,
    sample,
    sample_counts,
)
from .seeding import make_rng, trial_seed
from .special_poly import krawtchouk_table, normalized_krawtchouk

__all__ = [
    "LowerBoundParams",
    "PairwiseShiftParams",
    "ConstructionWarning",
    "lower_bound_density",
    "lower_bound_profile",
    "pairwise_density",
    "shifted_tuple_sampler",
    "DensitySource",
    "ShiftedPairwiseSource",
    "UniformSource",
    "RepeatedStringSource",
    "chi2_tuple_vs_uniform",
    "chi2_bruteforce",
    "chi2_geometric_bound",
    "psi_j_density",
    "epsilon_perturbed_family",
    "SHAPES",
]

DEFAULT_C = 4.0


class ConstructionWarning(UserWarning):
    pass


# --------------------------------------------------------------------------
# symmetric degree-k density

@dataclass(frozen=True)
class LowerBoundParams:
    """``mu = sqrt(k!) / (2 (C k)^k)`` and ``eps = mu / sqrt(C(n, k))``.

    ``mu < 2**(-3k/2)`` is the validity condition of the construction; small
    ``C`` can break it, which gives a warning (an error when ``strict``).
    """

    n: int
    k: int
    C: float = DEFAULT_C
    strict: bool = False
    mu: float = field(init=False)
    eps: float = field(init=False)

    def __post_init__(self):
        n, k = int(self.n), int(self.k)
        if k < 2 or k % 2 or k > n:
            raise ValueError(f"k must be even with 2 <= k <= n, got k={k}, n={n}")
        if self.C < 1:
            raise ValueError(f"C must be >= 1, got {self.C}")
        mu = math.sqrt(math.factorial(k)) / (2 * (self.C * k) ** k)
        eps = mu * math.exp(-0.5 * _log_comb(n, k))
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "eps", eps)
        if not mu < 2.0 ** (-1.5 * k):
            msg = f"mu={mu:.4g} violates mu < 2^(-3k/2)={2.0 ** (-1.5 * k):.4g} (C={self.C}, k={k})"
            if self.strict:
                raise ValueError(msg)
            warnings.warn(msg, ConstructionWarning, stacklevel=3)

    @property
    def valid(self) -> bool:
        return self.mu < 2.0 ** (-1.5 * self.k)


def _log_comb(n, k):
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def lower_bound_profile(n: int, k: int, mu: float) -> np.ndarray:
    """``1 + mu C(n,k)^{-1/2} K_k(t)`` for ``t = 0..n``."""
    if mu == 0:
        return np.ones(n + 1)
    if n <= 64:
        tab = krawtchouk_table(n, k)
        c = math.comb(n, k)
        return np.array([1.0 + mu * (v / c) * math.sqrt(c) for v in tab[k]])
    kt = normalized_krawtchouk(n, k)[k]
    return 1.0 + mu * kt * math.exp(0.5 * _log_comb(n, k))


def lower_bound_density(p: LowerBoundParams, mu: float | None = None) -> Density:
    """Symmetric density ``1 + mu C(n,k)^{-1/2} sum_{|S|=k} x^S``.

    ``mu`` defaults to ``p.mu``. Raises :class:`NegativityError` naming the
    weight class if the profile goes negative at this ``(n, k, C)``.
    """
    mu = p.mu if mu is None else float(mu)
    prof = lower_bound_profile(p.n, p.k, mu)
    _check_profile(prof, f"degree-{p.k} construction at n={p.n}")
    return Density.symmetric(p.n, prof)


def _check_profile(prof, what):
    worst = int(np.argmin(prof))
    if prof[worst] < 0:
        raise NegativityError(f"{what} is negative at weight class t={worst}: {prof[worst]:.6g}",
                              point=worst, value=float(prof[worst]))


# --------------------------------------------------------------------------
# pairwise density and random shifts

def pairwise_density(n: int, delta: float) -> Density:
    """Symmetric density ``1 + (delta/n) sum_{i<j} x_i x_j``."""
    t = np.arange(n + 1, dtype=float)
    k2 = ((n - 2 * t) ** 2 - n) / 2  # K_2 in closed form, exact in floats for n < 2**26
    prof = 1.0 + (delta / n) * k2
    _check_profile(prof, f"pairwise density (n={n}, delta={delta})")
    return Density.symmetric(n, prof)


@dataclass(frozen=True)
class PairwiseShiftParams:
    n: int
    delta: float
    m: int
    t: object = "random"  # "random" or a fixed shift index (n <= 64)

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("need n >= 2")
        if not 0 <= self.delta < 1:
            raise ValueError(f"delta must be in [0, 1), got {self.delta}")
        if self.m < 1:
            raise ValueError("need m >= 1")

    @property
    def regime(self) -> float:
        """``m delta^2 / n``; bounds hold when this is below 1."""
        return self.m * self.delta ** 2 / self.n

    @property
    def warn(self) -> bool:
        return self.regime >= 1


class DensitySource:
    """Sample source backed by a fixed density."""

    def __init__(self, density: Density, name: str = "density"):
        self.density = density
        self.n = density.n
        self.name = name

    def draw(self, m: int, rng) -> SampleBatch:
        return sample(self.density, m, make_rng(rng))

    @property
    def supports_counts(self) -> bool:
        return self.density.mode == "explicit"

    def counts(self, m: int, rng) -> np.ndarray:
        return sample_counts(self.density, m, make_rng(rng))


class ShiftedPairwiseSource:
    """Draws batches from ``phi^{+t}`` with a fresh uniform ``t`` per batch.

    Samples are ``y o t`` with ``y ~ phi``, since ``phi^{+t}(y o t) = phi(y)``.
    """

    supports_counts = False

    def __init__(self, n: int, delta: float, shift="random"):
        self.n = int(n)
        self.delta = float(delta)
        self.density = pairwise_density(n, delta)
        self.shift = shift
        self.name = "pairwise_shift"

    def _shift_words(self, rng) -> np.ndarray:
        nw = max(1, -(-self.n // 64))
        if self.shift != "random":
            t = int(self.shift)
            return np.array([(t >> (64 * i)) & 0xFFFFFFFFFFFFFFFF for i in range(nw)], dtype=np.uint64)
        bits = rng.integers(0, 2, size=(1, self.n), dtype=np.uint8)
        return SampleBatch.from_bits(bits).words[0]

    def draw(self, m: int, rng) -> SampleBatch:
        rng = make_rng(rng)
        t = self._shift_words(rng)
        base = self.density
        cdf = np.cumsum(base.probabilities())
        cdf /= cdf[-1]
        weights = np.minimum(np.searchsorted(cdf, rng.random(int(m)), side="right"), self.n)
        words = random_strings_of_weight(self.n, weights, rng)
        return SampleBatch(self.n, words ^ t[None, :])


class UniformSource:
    """Fully uniform strings on ``{-1,1}^n`` for any ``n``."""

    supports_counts = False

    def __init__(self, n: int):
        self.n = int(n)
        self.name = "uniform"

    def draw(self, m: int, rng) -> SampleBatch:
        rng = make_rng(rng)
        nw = max(1, -(-self.n // 64))
        words = rng.integers(0, 2 ** 64, size=(int(m), nw), dtype=np.uint64)
        tail = self.n - 64 * (nw - 1)
        if tail < 64:
            words[:, -1] &= np.uint64((1 << tail) - 1)
        return SampleBatch(self.n, words)


class RepeatedStringSource:
    """Adversary that returns one uniformly random string ``m`` times."""

    supports_counts = False

    def __init__(self, n: int):
        self.n = int(n)
        self.name = "identical"

    def draw(self, m: int, rng) -> SampleBatch:
        one = UniformSource(self.n).draw(1, rng).words
        return SampleBatch(self.n, np.repeat(one, int(m), axis=0))


def shifted_tuple_sampler(p: PairwiseShiftParams, trials: int, seed: int):
    """Yield ``trials`` batches of ``p.m`` strings; batch ``i`` uses its own seed stream."""
    if p.warn:
        warnings.warn(f"m*delta^2/n = {p.regime:.3g} >= 1: outside the bound's regime",
                      ConstructionWarning, stacklevel=2)
    src = ShiftedPairwiseSource(p.n, p.delta, p.t)
    for i in range(int(trials)):
        yield src.draw(p.m, trial_seed(seed, i))


def chi2_tuple_vs_uniform(p: PairwiseShiftParams) -> float:
    """``E_uniform[(phi*phi)^m] - 1`` summed exactly over weight classes.

    ``phi*phi = 1 + (delta^2/n^2) K_2(t)``; terms are accumulated as
    ``expm1`` when safe and in log space otherwise.
    """
    n, m = p.n, p.m
    if n > 100_000:
        raise ValueError("chi2_tuple_vs_uniform supports n <= 1e5")
    t = np.arange(n + 1, dtype=float)
    k2 = ((n - 2 * t) ** 2 - n) / 2
    a = (p.delta ** 2 / n ** 2) * k2
    expo = m * np.log1p(a)
    logpmf = binom.logpmf(np.arange(n + 1), n, 0.5)
    if np.max(expo) < 600:
        return float(np.sum(np.exp(logpmf) * np.expm1(expo)))
    # large exponents: expm1 ~ exp there, combined with the pmf in log space
    small = expo < 600
    head = float(np.sum(np.exp(logpmf[small]) * np.expm1(expo[small])))
    val = logsumexp(logpmf[~small] + expo[~small])
    return head + math.exp(val) if val < 700 else math.inf


def chi2_geometric_bound(n: int, delta: float, m: int) -> float:
    """``sum_{l=1}^m (m delta^2/n)^l``; ``inf`` outside the regime ``m delta^2/n <= 1/2``."""
    r = m * delta ** 2 / n
    if r > 0.5:
        return math.inf
    return float(r * (1 - r ** m) / (1 - r)) if r > 0 else 0.0


def chi2_bruteforce(n: int, delta: float, m: int) -> float:
    """``E_{t,t'}[<phi^{+t}, phi^{+t'}>^m] - 1`` by direct enumeration (small ``n``)."""
    if n > 12:
        raise ValueError("brute force needs n <= 12")
    phi = pairwise_density(n, delta).to_explicit().values
    N = 1 << n
    x = np.arange(N)
    # inner[t, t'] = E_x phi(x o t) phi(x o t')
    shifted = phi[x[None, :] ^ x[:, None]]
    inner = shifted @ shifted.T / N
    return float(np.mean(inner ** m) - 1.0)


# --------------------------------------------------------------------------
# k = 1 mending densities

def psi_j_density(n: int, j: int) -> Density:
    """Uniform on coordinates ``1..j-1``, constantly -1 on coordinates ``j..n``."""
    if not 1 <= j <= n:
        raise ValueError(f"need 1 <= j <= n, got j={j}, n={n}")
    fixed = ((1 << n) - 1) ^ ((1 << (j - 1)) - 1)
    v = np.zeros(1 << n)
    free = np.arange(1 << (j - 1))
    v[free | fixed] = float(1 << (n - j + 1))
    return Density(n, "explicit", v)


# --------------------------------------------------------------------------
# perturbed families

SHAPES = ("single-set", "random-signs-level-k", "planted-mixture")


def epsilon_perturbed_family(n: int, k: int, eps: float, shape: str, seed: int,
                             S: int = 1, points: int = 4) -> Density:
    """An ``(eps, k)``-wise uniform explicit density whose max bias is ``eps``.

    * ``single-set``: ``1 + eps x^S`` (``W^{1..k} = eps^2`` when ``|S| <= k``).
    * ``random-signs-level-k``: ``1 + eps sum_{|S|=k} s_S x^S`` with random signs
      (``W^{1..k} = eps^2 C(n,k)``).
    * ``planted-mixture``: ``(1-lam) uniform + lam * (uniform over `points` random
      strings)`` with ``lam`` chosen so the max bias on levels ``1..k`` is ``eps``.
    """
    if shape not in SHAPES:
        raise ValueError(f"unknown shape {shape!r}; choose from {SHAPES}")
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}")
    if eps < 0:
        raise ValueError("eps must be >= 0")
    N = 1 << n
    if eps == 0:
        return Density.uniform(n)
    if shape == "single-set":
        S = int(S)
        if S <= 0 or S >> n:
            raise ValueError(f"S must be a non-empty subset mask of [{n}]")
        chi = 1 - 2 * _parity(np.arange(N), S)
        vals = 1.0 + eps * chi
        return _as_density(vals, shape, eps)
    rng = make_rng(seed)
    if shape == "random-signs-level-k":
        coeffs = np.zeros(N)
        idx = masks_by_level(n, k, k)
        coeffs[idx] = eps * (1 - 2 * rng.integers(0, 2, size=idx.size))
        coeffs[0] = 1.0
        return _as_density(fwht(coeffs), shape, eps)
    pts = rng.choice(N, size=min(int(points), N), replace=False)
    planted = np.zeros(N)
    planted[pts] = N / pts.size
    spec = fourier_transform(Density(n, "explicit", planted))
    top = spec.max_abs(1, k)
    if top == 0:
        raise DensityError("planted family has no bias on levels 1..k")
    lam = eps / top
    if lam > 1:
        raise NegativityError(f"eps={eps} exceeds the planted family's max bias {top:.4g}",
                              value=1 - lam)
    return Density(n, "explicit", (1 - lam) + lam * planted)


def _parity(x, S):
    return np.bitwise_count(np.asarray(x, dtype=np.uint64) & np.uint64(S)).astype(np.int64) & 1


def _as_density(vals, shape, eps):
    worst = int(np.argmin(vals))
    if vals[worst] < -1e-12:
        raise NegativityError(f"eps={eps} is too large for shape {shape!r}: value {vals[worst]:.4g} at index {worst}",
                              point=worst, value=float(vals[worst]))
    return Density.explicit(np.maximum(vals, 0.0))
