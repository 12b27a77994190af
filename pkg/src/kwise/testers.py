"""Sample-based tests: the Delta(X) estimator of ``W^{1..k}``, the estimation
test, the k-wise uniformity tester, the Filter Test and the Overall Algorithm.

Every algorithm constant is a field of :class:`Constants`; the defaults are the
proven values and experiments override them by name.
"""
from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction

import numpy as np
from scipy.stats import binomtest

from .cube_fourier import (
    Density,
    DensityError,
    SampleBatch,
    fourier_transform,
    fwht,
    hamming,
    masks_by_level,
)
from .seeding import make_rng, trial_seed
from .special_poly import krawtchouk_sum

__all__ = [
    "Constants",
    "DEFAULT_CONSTANTS",
    "EstimationParams",
    "FilterParams",
    "TesterVerdict",
    "ParameterError",
    "SampleBoundError",
    "pair_kernel",
    "kernel_table",
    "delta_statistic",
    "delta_from_counts",
    "delta_statistic_trials",
    "expected_delta",
    "l_k",
    "variance_bound",
    "estimation_test",
    "kwise_test",
    "first_skewed_pair",
    "filter_test",
    "overall_parameters",
    "overall_algorithm",
    "majority_vote",
    "RateRow",
    "wilson_interval",
    "empirical_error_rate",
    "worker_count",
]


class ParameterError(ValueError):
    """Parameters are invalid or imply an infeasible sample budget."""

    def __init__(self, message, m1=None):
        super().__init__(message)
        self.m1 = m1


class SampleBoundError(ParameterError):
    """The sample count is below the bound that carries the test's guarantee."""


@dataclass(frozen=True)
class Constants:
    """Named constants of the tests (defaults are the proven values)."""

    est_const: float = 1000.0           # estimation bound m >= est_const 2^k sqrt(A) n^{k/2} / theta
    filter_t_const: float = 1e11        # t = (filter_t_const (4e^4)^k kbar^{kbar/2} n^k / delta^4)^{1/(kbar-2k)}
    skew_const: float = 1e7             # filter soundness: Pr[skewed] >= skew_const / m1^2
    m2_ratio: float = 200.0             # m2 = m1 / m2_ratio
    A_factor: float = 1.01              # A = A_factor t^{2k}
    m1_denominator: float = 5.0         # m1 = sqrt(t^kbar / (m1_denominator kbar^{kbar/2}))
    fully_uniform_const: float = 0.1    # m1^2 <= fully_uniform_const e^{t^2/2}
    fully_uniform_est_const: float = 1005.0  # m2 >= this (2e^2)^k t^k n^{k/2} / delta^2

    def with_overrides(self, overrides: dict | None) -> "Constants":
        if not overrides:
            return self
        names = {f.name for f in fields(self)}
        unknown = sorted(set(overrides) - names)
        if unknown:
            raise KeyError(f"unknown constant(s) {unknown}; known: {sorted(names)}")
        return replace(self, **{k: float(v) for k, v in overrides.items()})


DEFAULT_CONSTANTS = Constants()


# --------------------------------------------------------------------------
# pair kernel and the Delta statistic

def kernel_table(n: int, k: int) -> list:
    """``F(d) = sum_{j=1..k} K_j(d)`` for ``d = 0..n`` as exact ints."""
    return krawtchouk_sum(n, k)


def _as_signs(x, n):
    if isinstance(x, (int, np.integer)):
        if n is None:
            raise ValueError("n is required when strings are given as integers")
        return int(x)
    arr = np.asarray(x)
    if arr.ndim != 1:
        raise ValueError("a string must be one-dimensional")
    if np.any((arr != 1) & (arr != -1)):
        raise ValueError("sign vectors must contain only +1 and -1")
    bits = 0
    for i, v in enumerate(arr.tolist()):
        if v == -1:
            bits |= 1 << i
    return bits


def pair_kernel(x, y, k: int, n: int | None = None) -> int:
    """``sum_{1<=|S|<=k} x^S y^S`` through the Hamming distance.

    ``x`` and ``y`` are +-1 vectors or bit-encoded ints (then ``n`` is needed).
    """
    if not isinstance(x, (int, np.integer)):
        nx, ny = len(x), len(y)
        if nx != ny:
            raise ValueError(f"length mismatch: {nx} vs {ny}")
        n = nx
    xb, yb = _as_signs(x, n), _as_signs(y, n)
    if (xb >> n) or (yb >> n):
        raise ValueError(f"strings longer than n={n}")
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}")
    d = bin(xb ^ yb).count("1")
    return kernel_table(n, k)[d]


def _distance_histogram(batch: SampleBatch) -> np.ndarray:
    """Counts of Hamming distances over all unordered pairs of the batch."""
    m, n = batch.m, batch.n
    hist = np.zeros(n + 1, dtype=np.int64)
    words = batch.words
    block = max(1, 2_000_000 // max(m * words.shape[1], 1))
    for start in range(0, m - 1, block):
        stop = min(m - 1, start + block)
        rows = words[start:stop]
        d = hamming(rows[:, None, :], words[None, start + 1:, :])
        # pair (start + a, start + 1 + b) is counted when b >= a
        mask = np.arange(d.shape[1])[None, :] >= np.arange(d.shape[0])[:, None]
        hist += np.bincount(d[mask], minlength=n + 1)
    return hist


def delta_from_counts(counts, n: int, k: int, exact: bool = False):
    """Delta(X) from the occupancy counts of a sample (explicit ``n``).

    With ``c_S = sum_s x_s^S`` (the WHT of the counts),
    ``Delta = (sum_{1<=|S|<=k} c_S^2 - m N_k) / (m (m - 1))`` where
    ``N_k`` is the number of sets with ``1 <= |S| <= k``.
    """
    counts = np.asarray(counts, dtype=np.int64)
    if counts.size != (1 << n):
        raise ValueError(f"counts need length 2^n = {1 << n}")
    m = int(counts.sum())
    if m < 2:
        raise ValueError("Delta needs at least 2 samples")
    c = fwht(counts)[masks_by_level(n, 1, k)]
    total = sum(v * v for v in c.tolist())
    val = Fraction(total - m * int(c.size), m * (m - 1))
    return val if exact else float(val)


def delta_statistic(batch: SampleBatch, k: int, method: str = "auto", exact: bool = False):
    """Average of ``F(x_s, x_t)`` over all ``C(m, 2)`` unordered pairs, exactly.

    ``method`` is ``pairs`` (distance histogram), ``counts`` (occupancy WHT,
    needs ``n <= 24``) or ``auto``. Both give the same exact value.
    """
    if not isinstance(batch, SampleBatch):
        raise TypeError("delta_statistic expects a SampleBatch")
    m, n = batch.m, batch.n
    if m < 2:
        raise ValueError("Delta needs at least 2 samples")
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}")
    if method == "auto":
        method = "counts" if n <= 20 and m * (m - 1) // 2 > (n + 1) << n else "pairs"
    if method == "counts":
        if n > 24:
            raise ValueError("the counts method needs n <= 24")
        counts = np.bincount(batch.indices().astype(np.int64), minlength=1 << n)
        return delta_from_counts(counts, n, k, exact)
    if method != "pairs":
        raise ValueError(f"unknown method {method!r}")
    hist = _distance_histogram(batch).tolist()
    F = kernel_table(n, k)
    total = sum(h * f for h, f in zip(hist, F))
    val = Fraction(total, m * (m - 1) // 2)
    return val if exact else float(val)


def delta_statistic_trials(indices, n: int, k: int) -> np.ndarray:
    """Delta for each row of an ``(trials, m)`` index matrix (``n <= 24``)."""
    idx = np.asarray(indices, dtype=np.uint64)
    trials, m = idx.shape
    if m < 2:
        raise ValueError("Delta needs at least 2 samples")
    F = np.asarray(kernel_table(n, k), dtype=np.float64)
    s, t = np.triu_indices(m, 1)
    out = np.empty(trials)
    step = max(1, 4_000_000 // s.size)
    for a in range(0, trials, step):
        blk = idx[a:a + step]
        d = np.bitwise_count(blk[:, s] ^ blk[:, t]).astype(np.int64)
        out[a:a + step] = F[d].mean(axis=1)
    return out


def expected_delta(d: Density, k: int) -> float:
    """``E[F(x, y)]`` for independent ``x, y ~ d`` by direct summation over all pairs."""
    if d.mode != "explicit" or d.n > 12:
        raise DensityError("expected_delta needs an explicit density with n <= 12")
    n = d.n
    p = d.probabilities()
    x = np.arange(1 << n, dtype=np.uint64)
    F = np.asarray(kernel_table(n, k), dtype=np.float64)
    K = F[np.bitwise_count(x[:, None] ^ x[None, :]).astype(np.int64)]
    return float(p @ K @ p)


def l_k(d: Density, k: int) -> float:
    """``L_k = sum_{1<=|S1|,|S2|<=k} phi_hat(S1 xor S2)^2``.

    Counts ``mult(S) = #{(S1, S2) : S1 xor S2 = S}`` by an integer XOR
    self-convolution of the level indicator, then sums ``mult(S) phi_hat(S)^2``.
    """
    if d.mode != "explicit":
        raise DensityError("l_k needs an explicit density")
    n = d.n
    if n > 14 or k > 4:
        raise DensityError("l_k supports n <= 14 and k <= 4")
    ind = np.zeros(1 << n, dtype=np.int64)
    ind[masks_by_level(n, 1, k)] = 1
    h = fwht(ind)
    mult = fwht(h * h) >> n
    coeffs = fourier_transform(d).coeffs
    return float(mult @ (coeffs ** 2))


def variance_bound(L: float, mu: float, m: int) -> float:
    """``(4/m^2) L + (4/m) sqrt(L) mu``."""
    return 4.0 * L / m ** 2 + 4.0 * math.sqrt(L) * mu / m


# --------------------------------------------------------------------------
# verdicts and parameters

@dataclass(frozen=True)
class TesterVerdict:
    """``decision`` is accept/reject (low/high for the estimation test)."""

    decision: str
    statistic: object
    samples_used: int
    seed: object
    threshold: float | None = None
    details: dict = field(default_factory=dict)

    @property
    def accepted(self) -> bool:
        return self.decision in ("accept", "low")

    def consistent(self) -> bool:
        """Recompute the decision from the statistic and threshold."""
        if self.decision in ("low", "high"):
            return (self.statistic <= self.threshold) == (self.decision == "low")
        if "filter" in self.details and self.details.get("stage") == "filter":
            return self.decision == "reject" and self.statistic is not None
        if self.threshold is not None and isinstance(self.statistic, float):
            return (self.statistic <= self.threshold) == (self.decision == "accept")
        return True


@dataclass(frozen=True)
class EstimationParams:
    k: int
    theta: float
    A: float
    m: int

    def __post_init__(self):
        if self.m < 2:
            raise ParameterError(f"need m >= 2, got {self.m}")
        if not self.theta > 0:
            raise ParameterError(f"theta must be > 0, got {self.theta}")
        if not self.A >= 1:
            raise ParameterError(f"A must be >= 1, got {self.A}")
        if self.k < 1:
            raise ParameterError("k must be >= 1")

    @staticmethod
    def required_m(n: int, k: int, theta: float, A: float, constants: Constants = DEFAULT_CONSTANTS) -> int:
        return math.ceil(constants.est_const * 2 ** k * math.sqrt(A) * n ** (k / 2) / theta)

    @property
    def low_threshold(self) -> float:
        return 0.75 * self.theta


def _use_counts(sampler, n, m, method):
    if method == "counts":
        return True
    if method == "pairs":
        return False
    return bool(getattr(sampler, "supports_counts", False)) and n <= 20 and m * (m - 1) // 2 > (n + 1) << n


def estimation_test(sampler, p: EstimationParams, seed, enforce_bound: bool = True,
                    constants: Constants = DEFAULT_CONSTANTS, method: str = "auto") -> TesterVerdict:
    """Draw ``p.m`` samples, compute Delta, report ``low`` iff ``Delta <= 3/4 theta``."""
    n = sampler.n
    need = EstimationParams.required_m(n, p.k, p.theta, p.A, constants)
    if enforce_bound and p.m < need:
        raise SampleBoundError(f"m={p.m} is below the sample bound {need} (pass enforce_bound=False to experiment)")
    rng = make_rng(seed)
    if _use_counts(sampler, n, p.m, method):
        delta = delta_from_counts(sampler.counts(p.m, rng), n, p.k)
    else:
        delta = delta_statistic(sampler.draw(p.m, rng), p.k)
    decision = "low" if delta <= p.low_threshold else "high"
    return TesterVerdict(decision, delta, p.m, seed, p.low_threshold, {"required_m": need, "theta": p.theta})


def kwise_test(sampler, n: int, k: int, delta: float, seed, m: int | None = None,
               constants: Constants = DEFAULT_CONSTANTS, enforce_bound: bool = True,
               sharp: bool = False, method: str = "auto") -> TesterVerdict:
    """delta-tester for k-wise uniformity: estimation test with ``theta = (delta/e^k)^2``, ``A = n^k``.

    ``sharp`` scales the default sample count by ``k^{-k/2}`` (experimental,
    no proven guarantee).
    """
    if not 0 < delta < 1:
        raise ParameterError(f"delta must be in (0, 1), got {delta}")
    if sampler.n != n:
        raise ParameterError(f"sampler has n={sampler.n}, expected {n}")
    theta = (delta / math.exp(k)) ** 2
    A = float(n) ** k
    need = EstimationParams.required_m(n, k, theta, A, constants)
    if sharp:
        need = max(2, math.ceil(need * k ** (-k / 2)))
        enforce_bound = False
    m = need if m is None else int(m)
    v = estimation_test(sampler, EstimationParams(k, theta, A, m), seed, enforce_bound, constants, method)
    details = dict(v.details, delta=delta)
    return TesterVerdict("accept" if v.decision == "low" else "reject", v.statistic, m, seed, v.threshold, details)


# --------------------------------------------------------------------------
# filter test

def first_skewed_pair(batch: SampleBatch, t: float):
    """First pair ``(s, u)``, ``s < u``, in sample order with ``|<x_s, x_u>| > t sqrt(n)``.

    Returns ``(s, u, inner_product)`` or ``None``.
    """
    m, n = batch.m, batch.n
    limit = t * math.sqrt(n)
    words = batch.words
    block = max(1, 2_000_000 // max(m * words.shape[1], 1))
    for start in range(0, m - 1, block):
        stop = min(m - 1, start + block)
        d = hamming(words[start:stop, None, :], words[None, :, :])
        dot = n - 2 * d
        skew = np.abs(dot) > limit
        skew &= np.arange(m)[None, :] > np.arange(start, stop)[:, None]
        hit = np.argwhere(skew)
        if hit.size:
            a, u = hit[0]
            return int(start + a), int(u), int(dot[a, u])
    return None


def filter_test(sampler, n: int, t: float, m1: int, seed) -> TesterVerdict:
    """Reject iff some pair among ``m1`` samples is skewed."""
    if m1 < 2:
        raise ParameterError(f"need m1 >= 2, got {m1}")
    if sampler.n != n:
        raise ParameterError(f"sampler has n={sampler.n}, expected {n}")
    batch = sampler.draw(int(m1), make_rng(seed))
    pair = first_skewed_pair(batch, t)
    decision = "reject" if pair is not None else "accept"
    return TesterVerdict(decision, pair, int(m1), seed, t * math.sqrt(n),
                         {"t": t, "stage": "filter", "filter": True})


# --------------------------------------------------------------------------
# overall algorithm

@dataclass(frozen=True)
class FilterParams:
    k: int
    kbar: int
    t: float
    m1: int
    m2: int
    delta: float
    mode: str
    theta: float
    A: float

    def __post_init__(self):
        if self.mode not in ("alpha-k-wise", "fully-uniform"):
            raise ParameterError(f"unknown mode {self.mode!r}")
        if self.mode == "alpha-k-wise" and not self.kbar > 2 * self.k:
            raise ParameterError(f"need kbar > 2k, got kbar={self.kbar}, k={self.k}")


def _kbar(k: int, alpha) -> int:
    kbar = math.ceil(alpha * k)
    if kbar % 2:
        warnings.warn(f"alpha*k = {alpha * k} rounded up to the even integer {kbar + 1}", stacklevel=3)
        kbar += 1
    return kbar


def _fully_uniform_t(n, k, delta, c: Constants):
    """Solve ``m1(t)^2 = c e^{t^2/2}`` for ``t`` by 64-step bisection,
    where ``m1(t) = m2_ratio * fully_uniform_est_const (2e^2)^k t^k n^{k/2} / delta^2``."""
    def log_m1(t):
        return (math.log(c.m2_ratio * c.fully_uniform_est_const) + k * math.log(2 * math.e ** 2)
                + k * math.log(t) + (k / 2) * math.log(n) - 2 * math.log(delta))

    def f(t):
        return t * t / 2 + math.log(c.fully_uniform_const) - 2 * log_m1(t)

    lo, hi = 1.0, 20.0 * math.sqrt(math.log(max(n, 2)))
    if f(hi) < 0:
        raise ParameterError(f"no t in [1, {hi:.3g}] satisfies the fully-uniform constraint", m1=math.exp(log_m1(hi)))
    if f(lo) >= 0:
        return lo, math.exp(log_m1(lo))
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        if f(mid) >= 0:
            hi = mid
        else:
            lo = mid
    return hi, math.exp(log_m1(hi))


def overall_parameters(n: int, k: int, alpha, delta: float, mode: str = "alpha-k-wise",
                       constants: Constants = DEFAULT_CONSTANTS, t: float | None = None,
                       m1: int | None = None, m2: int | None = None) -> FilterParams:
    """Parameters of the Overall Algorithm; ``t``, ``m1``, ``m2`` override the derived values."""
    c = constants
    if not 0 < delta < 1:
        raise ParameterError(f"delta must be in (0, 1), got {delta}")
    if mode == "alpha-k-wise":
        kbar = _kbar(k, alpha)
        if not kbar > 2 * k:
            raise ParameterError(f"need alpha*k > 2k, got kbar={kbar}, k={k}")
        if t is None:
            log_t = (math.log(c.filter_t_const) + k * math.log(4 * math.e ** 4) + (kbar / 2) * math.log(kbar)
                     + k * math.log(n) - 4 * math.log(delta)) / (kbar - 2 * k)
            t = math.exp(log_t)
        m1_real = math.sqrt(t ** kbar / (c.m1_denominator * kbar ** (kbar / 2)))
    elif mode == "fully-uniform":
        kbar = n
        if t is None:
            t, m1_real = _fully_uniform_t(n, k, delta, c)
        else:
            m1_real = math.sqrt(c.fully_uniform_const * math.exp(t * t / 2))
    else:
        raise ParameterError(f"unknown mode {mode!r}")
    if m1 is None:
        m1 = math.floor(m1_real)
    if m2 is None:
        m2 = math.floor(m1 / c.m2_ratio)
    if m2 > m1 / c.m2_ratio + 1e-9:
        raise ParameterError(f"m2={m2} exceeds m1/{c.m2_ratio:g}={m1 / c.m2_ratio:.4g}", m1=m1)
    theta = (delta / math.exp(k)) ** 2
    A = c.A_factor * t ** (2 * k)
    return FilterParams(k, kbar, float(t), int(m1), int(m2), float(delta), mode, theta, A)


def overall_algorithm(sampler, n: int, k: int, alpha, delta: float, seed,
                      mode: str = "alpha-k-wise", constants: Constants = DEFAULT_CONSTANTS,
                      t: float | None = None, m1: int | None = None, m2: int | None = None,
                      max_samples: float = 1e8) -> TesterVerdict:
    """Filter Test on ``m1`` samples, then the estimation test on ``m2`` fresh samples.

    ``accept`` means Yes (alpha-k-wise/fully uniform), ``reject`` means No.
    Raises :class:`ParameterError` carrying ``m1`` when the budget exceeds ``max_samples``.
    """
    if sampler.n != n:
        raise ParameterError(f"sampler has n={sampler.n}, expected {n}")
    fp = overall_parameters(n, k, alpha, delta, mode, constants, t, m1, m2)
    if fp.m1 + fp.m2 > max_samples:
        raise ParameterError(f"the Overall Algorithm needs m1={fp.m1:.4g} samples (limit {max_samples:.3g})", m1=fp.m1)
    if fp.m1 < 2 or fp.m2 < 2:
        raise ParameterError(f"sample counts too small: m1={fp.m1}, m2={fp.m2}", m1=fp.m1)
    rng = make_rng(seed)
    s_filter, s_est = trial_seed(int(rng.integers(0, 2 ** 63)), 0), trial_seed(int(rng.integers(0, 2 ** 63)), 1)
    fv = filter_test(sampler, n, fp.t, fp.m1, s_filter)
    info = {"params": fp}
    if fv.decision == "reject":
        return TesterVerdict("reject", fv.statistic, fp.m1, seed, fv.threshold, dict(info, stage="filter", filter=True))
    ev = estimation_test(sampler, EstimationParams(k, fp.theta, max(fp.A, 1.0), fp.m2), s_est,
                         enforce_bound=False, constants=constants)
    decision = "accept" if ev.decision == "low" else "reject"
    return TesterVerdict(decision, ev.statistic, fp.m1 + fp.m2, seed, ev.threshold, dict(info, stage="estimation"))


# --------------------------------------------------------------------------
# repetition and error rates

def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("KWISE_THREADS", "1")))
    except ValueError:
        return 1


def _run_trials(fn, trials, base_seed, workers=None):
    workers = worker_count() if workers is None else workers
    seeds = [trial_seed(base_seed, i) for i in range(trials)]
    if workers <= 1:
        return [fn(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, seeds))


def majority_vote(test, r: int, seed, workers=None) -> TesterVerdict:
    """Run ``test(seed_i)`` for ``r`` derived seeds; the majority decision wins
    (ties count as acceptance)."""
    if r < 1:
        raise ValueError("need r >= 1")
    verdicts = _run_trials(test, r, seed, workers)
    acc = sum(v.accepted for v in verdicts)
    first = verdicts[0]
    pos, neg = ("low", "high") if first.decision in ("low", "high") else ("accept", "reject")
    decision = pos if 2 * acc >= r else neg
    return TesterVerdict(decision, acc / r, sum(v.samples_used for v in verdicts), seed,
                         0.5, {"votes": [v.decision for v in verdicts]})


def wilson_interval(successes: int, trials: int, confidence: float = 0.95):
    ci = binomtest(int(successes), int(trials)).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass(frozen=True)
class RateRow:
    construction: str
    tester: str
    n: int
    k: int
    delta: float
    m: int
    trials: int
    accept_rate: float
    ci_low: float
    ci_high: float
    seed: int

    COLUMNS = ("construction", "tester", "n", "k", "delta", "m", "trials",
               "accept_rate", "ci_low", "ci_high", "seed")

    def as_list(self):
        return [getattr(self, c) for c in self.COLUMNS]


def empirical_error_rate(test, trials: int, seed: int, *, construction: str = "", tester: str = "",
                         n: int = 0, k: int = 0, delta: float = 0.0, workers=None):
    """Run ``test(trial_seed)`` ``trials`` times; returns ``(RateRow, verdicts)``."""
    if trials < 1:
        raise ValueError("need trials >= 1")
    verdicts = _run_trials(test, trials, seed, workers)
    acc = sum(v.accepted for v in verdicts)
    lo, hi = wilson_interval(acc, trials)
    m = verdicts[0].samples_used
    row = RateRow(construction, tester, n, k, delta, m, trials, acc / trials, lo, hi, int(seed))
    return row, verdicts
