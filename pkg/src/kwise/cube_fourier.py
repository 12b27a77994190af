"""Densities on {-1,1}^n, their Fourier spectra, and sample batches.

Encoding: bit ``i`` of an index (``(x >> i) & 1``) is coordinate ``i + 1``;
a set bit means the coordinate is -1. Subset masks use the same bit order, so
``x^S = (-1) ** popcount(x & S)``.

Density values follow the density convention: ``phi(x) / 2**n`` is the
probability of ``x`` and ``E_uniform[phi] = 1``.

Two representations exist. *explicit* stores all ``2**n`` values (``n <= 24``).
*symmetric* stores one value per Hamming weight class ``t = 0..n`` and is the
only option for large ``n``.
"""
from __future__ import annotations

import json
import math

import numpy as np
from scipy.stats import binom

from .seeding import make_rng
from .special_poly import normalized_krawtchouk

__all__ = [
    "Density",
    "Spectrum",
    "SampleBatch",
    "DensityError",
    "NegativityError",
    "fwht",
    "popcount",
    "masks_by_level",
    "fourier_transform",
    "inverse_transform",
    "bias",
    "fourier_weight",
    "convolve",
    "tv_distance",
    "shift",
    "is_kwise_uniform",
    "sample",
    "sample_counts",
    "EXPLICIT_N_MAX",
]

EXPLICIT_N_MAX = 24
TAU_NEG = 1e-12
TAU_DENSITY = 1e-7
MEAN_TOL = 1e-9


class DensityError(ValueError):
    """Invalid density data or incompatible operands."""


class NegativityError(DensityError):
    """A function that should be a density takes a negative value.

    ``point`` is the index (explicit) or weight class (symmetric) of the most
    negative value, ``value`` the value there.
    """

    def __init__(self, message, point=None, value=None):
        super().__init__(message)
        self.point = point
        self.value = value


# --------------------------------------------------------------------------
# bit kernels

def popcount(a) -> np.ndarray:
    return np.bitwise_count(np.asarray(a, dtype=np.uint64)).astype(np.int64)


def levels(n: int) -> np.ndarray:
    """Hamming weight of every index in ``range(2**n)``."""
    return popcount(np.arange(1 << n, dtype=np.uint64))


def masks_by_level(n: int, lo: int, hi: int) -> np.ndarray:
    """All subset masks with ``lo <= |S| <= hi``, ascending."""
    lv = levels(n)
    return np.nonzero((lv >= lo) & (lv <= hi))[0]


def fwht(a: np.ndarray) -> np.ndarray:
    """Unnormalized Walsh-Hadamard transform, ``out[S] = sum_x a[x] (-1)^{|x&S|}``.

    Works along the last axis, which must have length ``2**n``. Integer input
    stays integer.
    """
    a = np.array(a, copy=True)
    size = a.shape[-1]
    if size & (size - 1):
        raise DensityError(f"length {size} is not a power of two")
    lead = a.shape[:-1]
    h = 1
    while h < size:
        a = a.reshape(*lead, -1, 2, h)
        x = a[..., 0, :]
        y = a[..., 1, :]
        a = np.stack((x + y, x - y), axis=-2)
        h *= 2
    return a.reshape(*lead, size)


def _binomial_pmf(n: int) -> np.ndarray:
    return binom.pmf(np.arange(n + 1), n, 0.5)


# --------------------------------------------------------------------------
# types

class Density:
    """Immutable density over {-1,1}^n (explicit or symmetric mode)."""

    __slots__ = ("n", "mode", "_values")

    def __init__(self, n: int, mode: str, values, check: bool = True):
        n = int(n)
        if n < 1:
            raise DensityError(f"n must be positive, got {n}")
        if mode not in ("explicit", "symmetric"):
            raise DensityError(f"unknown mode {mode!r}")
        v = np.array(values, dtype=float)
        expected = (1 << n) if mode == "explicit" else n + 1
        if mode == "explicit" and n > EXPLICIT_N_MAX:
            raise DensityError(f"explicit mode needs n <= {EXPLICIT_N_MAX}, got {n}")
        if v.shape != (expected,):
            raise DensityError(f"{mode} density on n={n} needs {expected} values, got shape {v.shape}")
        if check:
            if not np.all(np.isfinite(v)):
                raise DensityError("density values must be finite")
            worst = int(np.argmin(v))
            if v[worst] < -TAU_DENSITY:
                raise NegativityError(
                    f"negative density value {v[worst]:.3e} at {'index' if mode == 'explicit' else 'weight class'} {worst}",
                    point=worst, value=float(v[worst]))
            mean = _mean(n, mode, v)
            if abs(mean - 1.0) > MEAN_TOL:
                raise DensityError(f"density mean is {mean!r}, expected 1")
            v[v < 0] = 0.0
        v.setflags(write=False)
        self.n = n
        self.mode = mode
        self._values = v

    # constructors ---------------------------------------------------------
    @classmethod
    def explicit(cls, values) -> "Density":
        v = np.asarray(values, dtype=float)
        n = int(round(math.log2(v.size))) if v.size else 0
        if v.size != (1 << n):
            raise DensityError(f"length {v.size} is not a power of two")
        return cls(n, "explicit", v)

    @classmethod
    def symmetric(cls, n: int, profile) -> "Density":
        return cls(n, "symmetric", profile)

    @classmethod
    def from_weights(cls, weights) -> "Density":
        """Normalize nonnegative point weights (length ``2**n``) to a density."""
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0):
            raise NegativityError("weights must be nonnegative", point=int(np.argmin(w)), value=float(w.min()))
        total = w.sum()
        if total <= 0:
            raise DensityError("weights sum to zero")
        return cls.explicit(w * (w.size / total))

    @classmethod
    def uniform(cls, n: int, mode: str = "explicit") -> "Density":
        size = (1 << n) if mode == "explicit" else n + 1
        return cls(n, mode, np.ones(size))

    @classmethod
    def point_mass(cls, n: int, x: int = 0) -> "Density":
        v = np.zeros(1 << n)
        v[int(x)] = float(1 << n)
        return cls(n, "explicit", v)

    # accessors ------------------------------------------------------------
    @property
    def values(self) -> np.ndarray:
        """Point values (explicit) or per-weight-class profile (symmetric)."""
        return self._values

    @property
    def profile(self) -> np.ndarray:
        if self.mode != "symmetric":
            raise DensityError("profile is only defined in symmetric mode")
        return self._values

    def probabilities(self) -> np.ndarray:
        """Point probabilities (explicit) or weight-class probabilities (symmetric)."""
        if self.mode == "explicit":
            return self._values / float(1 << self.n)
        return _binomial_pmf(self.n) * self._values

    def mean(self) -> float:
        return _mean(self.n, self.mode, self._values)

    def to_explicit(self) -> "Density":
        if self.mode == "explicit":
            return self
        if self.n > EXPLICIT_N_MAX:
            raise DensityError(f"cannot expand n={self.n} > {EXPLICIT_N_MAX} to explicit mode")
        return Density(self.n, "explicit", self._values[levels(self.n)], check=False)

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        if self.mode == "symmetric":
            return True
        lv = levels(self.n)
        for t in range(self.n + 1):
            block = self._values[lv == t]
            if np.ptp(block) > tol:
                return False
        return True

    def to_symmetric(self, tol: float = 1e-12) -> "Density":
        if self.mode == "symmetric":
            return self
        if not self.is_symmetric(tol):
            raise DensityError("density is not constant on weight classes")
        lv = levels(self.n)
        prof = np.array([self._values[lv == t].mean() for t in range(self.n + 1)])
        return Density(self.n, "symmetric", prof, check=False)

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "mode": self.mode, "values": self._values.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "Density":
        obj = json.loads(text) if isinstance(text, str) else text
        try:
            return cls(int(obj["n"]), obj["mode"], obj["values"])
        except KeyError as exc:
            raise DensityError(f"density JSON is missing field {exc}") from None

    def __repr__(self):
        return f"Density(n={self.n}, mode={self.mode!r})"


def _mean(n, mode, v) -> float:
    if mode == "explicit":
        return float(np.mean(v))
    return float(_binomial_pmf(n) @ v)


class Spectrum:
    """Fourier coefficients, by subset mask (explicit) or by level (symmetric)."""

    __slots__ = ("n", "mode", "_coeffs")

    def __init__(self, n: int, mode: str, coeffs):
        c = np.array(coeffs, dtype=float)
        max_len = (1 << n) if mode == "explicit" else n + 1
        if mode not in ("explicit", "symmetric"):
            raise DensityError(f"unknown mode {mode!r}")
        if mode == "explicit" and c.shape != (max_len,):
            raise DensityError(f"explicit spectrum on n={n} needs {max_len} coefficients")
        if mode == "symmetric" and not (1 <= c.size <= max_len) or c.ndim != 1:
            raise DensityError(f"symmetric spectrum on n={n} needs 1..{max_len} level coefficients")
        c.setflags(write=False)
        self.n = int(n)
        self.mode = mode
        self._coeffs = c

    @property
    def coeffs(self) -> np.ndarray:
        return self._coeffs

    @property
    def max_level(self) -> int:
        return self.n if self.mode == "explicit" else self._coeffs.size - 1

    def coefficient(self, S: int) -> float:
        S = int(S)
        if S < 0 or S >> self.n:
            raise DensityError(f"mask {S:#x} is not a subset of [{self.n}]")
        if self.mode == "explicit":
            return float(self._coeffs[S])
        lvl = bin(S).count("1")
        return self.level_coefficient(lvl)

    def level_coefficient(self, level: int) -> float:
        """Common coefficient of every set of size ``level`` (symmetric mode)."""
        if self.mode != "symmetric":
            raise DensityError("level coefficients exist only for symmetric spectra")
        if level > self.max_level:
            raise DensityError(f"level {level} was not computed (max {self.max_level})")
        return float(self._coeffs[level])

    def level_weights(self) -> np.ndarray:
        """``W^j = sum_{|S|=j} coef(S)**2`` for ``j = 0..max_level``."""
        if self.mode == "explicit":
            return np.bincount(levels(self.n), weights=self._coeffs ** 2, minlength=self.n + 1)
        j = np.arange(self._coeffs.size)
        logc = np.array([_log_comb(self.n, int(i)) for i in j])
        return np.where(self._coeffs == 0, 0.0, np.exp(logc + 2 * np.log(np.abs(self._coeffs) + 1e-320)))

    def weight(self, lo: int, hi: int) -> float:
        if not 0 <= lo <= hi <= self.n:
            raise DensityError(f"need 0 <= lo <= hi <= n, got {lo}, {hi}")
        if hi > self.max_level:
            raise DensityError(f"level {hi} was not computed (max {self.max_level})")
        return float(self.level_weights()[lo: hi + 1].sum())

    def max_abs(self, lo: int, hi: int) -> float:
        """``max_{lo <= |S| <= hi} |coef(S)|``."""
        if self.mode == "explicit":
            idx = masks_by_level(self.n, lo, hi)
            return float(np.max(np.abs(self._coeffs[idx]), initial=0.0))
        if hi > self.max_level:
            raise DensityError(f"level {hi} was not computed (max {self.max_level})")
        return float(np.max(np.abs(self._coeffs[lo: hi + 1]), initial=0.0))

    def to_explicit(self) -> "Spectrum":
        if self.mode == "explicit":
            return self
        if self.max_level != self.n:
            raise DensityError("truncated symmetric spectrum cannot be expanded")
        return Spectrum(self.n, "explicit", self._coeffs[levels(self.n)])

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "mode": self.mode, "values": self._coeffs.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "Spectrum":
        obj = json.loads(text) if isinstance(text, str) else text
        return cls(int(obj["n"]), obj["mode"], obj["values"])

    def __repr__(self):
        return f"Spectrum(n={self.n}, mode={self.mode!r})"


def _log_comb(n, k) -> float:
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


class SampleBatch:
    """``m`` bit-packed strings of length ``n``; ``words`` has shape ``(m, ceil(n/64))``.

    Word ``w`` holds coordinates ``64w+1 .. 64w+64`` in the bit encoding above.
    """

    __slots__ = ("n", "words")

    def __init__(self, n: int, words):
        w = np.ascontiguousarray(words, dtype=np.uint64)
        if w.ndim == 1:
            w = w.reshape(-1, 1)
        nw = max(1, -(-n // 64))
        if w.ndim != 2 or w.shape[1] != nw:
            raise DensityError(f"words must have shape (m, {nw}) for n={n}, got {w.shape}")
        if w.shape[0] < 1:
            raise DensityError("a sample batch needs at least one string")
        tail = n - 64 * (nw - 1)
        if tail < 64 and np.any(w[:, -1] >> np.uint64(tail)):
            raise DensityError(f"bits set beyond coordinate {n}")
        w.setflags(write=False)
        self.n = int(n)
        self.words = w

    @property
    def m(self) -> int:
        return self.words.shape[0]

    def __len__(self):
        return self.m

    @classmethod
    def from_indices(cls, n: int, idx) -> "SampleBatch":
        if n > 64:
            raise DensityError("from_indices needs n <= 64")
        return cls(n, np.asarray(idx, dtype=np.uint64).reshape(-1, 1))

    @classmethod
    def from_bits(cls, bits) -> "SampleBatch":
        """From a 0/1 array of shape ``(m, n)``; 1 means the coordinate is -1."""
        bits = np.asarray(bits, dtype=np.uint8)
        m, n = bits.shape
        nw = max(1, -(-n // 64))
        padded = np.zeros((m, nw * 64), dtype=np.uint8)
        padded[:, :n] = bits
        packed = np.packbits(padded, axis=1, bitorder="little")
        words = packed.view("<u8").astype(np.uint64)
        return cls(n, words)

    @classmethod
    def from_signs(cls, signs) -> "SampleBatch":
        signs = np.asarray(signs)
        return cls.from_bits((signs < 0).astype(np.uint8))

    def indices(self) -> np.ndarray:
        if self.n > 64:
            raise DensityError("indices() needs n <= 64")
        return self.words[:, 0]

    def bits(self) -> np.ndarray:
        as_bytes = self.words.astype("<u8").view(np.uint8).reshape(self.m, -1)
        return np.unpackbits(as_bytes, axis=1, bitorder="little")[:, : self.n]

    def signs(self) -> np.ndarray:
        return (1 - 2 * self.bits().astype(np.int8)).astype(np.int8)

    def to_hex_lines(self) -> str:
        width = max(1, -(-self.n // 4))
        lines = []
        for row in self.words:
            value = 0
            for w in reversed(row.tolist()):
                value = (value << 64) | int(w)
            lines.append(format(value, f"0{width}x"))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_hex_lines(cls, n: int, text: str) -> "SampleBatch":
        nw = max(1, -(-n // 64))
        rows = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line:
                continue
            try:
                value = int(line, 16)
            except ValueError:
                raise DensityError(f"line {lineno}: not a hex string: {line!r}") from None
            if value >> n:
                raise DensityError(f"line {lineno}: value has bits beyond coordinate {n}")
            rows.append([(value >> (64 * i)) & 0xFFFFFFFFFFFFFFFF for i in range(nw)])
        return cls(n, np.array(rows, dtype=np.uint64))

    def __repr__(self):
        return f"SampleBatch(n={self.n}, m={self.m})"


def hamming(a_words: np.ndarray, b_words: np.ndarray) -> np.ndarray:
    """Hamming distances between packed rows (broadcasting on leading axes)."""
    return np.bitwise_count(np.bitwise_xor(a_words, b_words)).sum(axis=-1, dtype=np.int64)


# --------------------------------------------------------------------------
# operations

def fourier_transform(d: Density, max_level: int | None = None) -> Spectrum:
    """Spectrum of ``d``: exact WHT scaled by ``2**-n`` in explicit mode;
    per-level Krawtchouk inner products in symmetric mode (up to ``max_level``)."""
    if not isinstance(d, Density):
        raise DensityError("fourier_transform expects a Density")
    if d.mode == "explicit":
        return Spectrum(d.n, "explicit", fwht(d.values) / float(1 << d.n))
    L = d.n if max_level is None else int(max_level)
    if not 0 <= L <= d.n:
        raise DensityError(f"max_level must be in [0, {d.n}]")
    kt = normalized_krawtchouk(d.n, L)
    return Spectrum(d.n, "symmetric", kt @ (_binomial_pmf(d.n) * d.values))


def _spectrum_values(s: Spectrum) -> np.ndarray:
    if s.mode == "explicit":
        return fwht(s.coeffs)
    # levels above max_level are taken to be zero
    L = s.max_level
    kt = normalized_krawtchouk(s.n, L)
    logc = np.array([_log_comb(s.n, j) for j in range(L + 1)])
    scaled = s.coeffs * np.exp(logc)
    return scaled @ kt


def inverse_transform(s: Spectrum) -> Density:
    """Density with spectrum ``s``; raises :class:`NegativityError` if some
    value is below ``-1e-7`` (``s`` is then not a density's spectrum)."""
    if abs(s.coeffs[0] - 1.0) > MEAN_TOL:
        raise DensityError(f"coefficient of the empty set is {s.coeffs[0]!r}, expected 1")
    v = _spectrum_values(s)
    worst = int(np.argmin(v))
    if v[worst] < -TAU_DENSITY:
        where = "index" if s.mode == "explicit" else "weight class"
        raise NegativityError(f"spectrum is not a density: value {v[worst]:.6g} at {where} {worst}",
                              point=worst, value=float(v[worst]))
    return Density(s.n, s.mode, v)


def bias(d: Density, S: int) -> float:
    """``phi_hat(S) = E[phi(x) x^S]``."""
    S = int(S)
    if S < 0 or S >> d.n:
        raise DensityError(f"mask {S:#x} is not a subset of [{d.n}]")
    if d.mode == "explicit":
        x = np.arange(1 << d.n, dtype=np.uint64)
        chi = 1 - 2 * (popcount(x & np.uint64(S)) & 1)
        return float(np.mean(d.values * chi))
    lvl = bin(S).count("1")
    return float(normalized_krawtchouk(d.n, lvl)[lvl] @ (_binomial_pmf(d.n) * d.values))


def fourier_weight(d: Density, lo: int, hi: int) -> float:
    """``sum_{lo <= |S| <= hi} phi_hat(S)**2``."""
    if not 0 <= lo <= hi <= d.n:
        raise DensityError(f"need 0 <= lo <= hi <= n, got {lo}, {hi}")
    spec = fourier_transform(d, None if d.mode == "explicit" else hi)
    return spec.weight(lo, hi)


def _same_shape(f: Density, g: Density):
    if f.n != g.n:
        raise DensityError(f"size mismatch: n={f.n} vs n={g.n}")


def _common_mode(f: Density, g: Density):
    _same_shape(f, g)
    if f.mode == g.mode:
        return f, g
    return f.to_explicit(), g.to_explicit()


def convolve(f: Density, g: Density) -> Density:
    """``(f*g)(x) = E_y[f(y) g(x o y)]``; spectrum is the pointwise product."""
    _same_shape(f, g)
    if f.mode != g.mode:
        raise DensityError("convolve needs both operands in the same mode")
    sf = fourier_transform(f)
    sg = fourier_transform(g)
    return inverse_transform(Spectrum(f.n, f.mode, sf.coeffs * sg.coeffs))


def tv_distance(f: Density, g: Density) -> float:
    """``(1/2) E_uniform |f - g|``."""
    f, g = _common_mode(f, g)
    diff = np.abs(f.values - g.values)
    if f.mode == "explicit":
        val = 0.5 * float(np.mean(diff))
    else:
        val = 0.5 * float(_binomial_pmf(f.n) @ diff)
    return min(max(val, 0.0), 1.0)


def shift(d: Density, t: int) -> Density:
    """``phi^{+t}(x) = phi(x o t)``; in index space ``x -> x XOR t``."""
    if d.mode != "explicit":
        raise DensityError("shift needs an explicit density")
    t = int(t)
    if t < 0 or t >> d.n:
        raise DensityError(f"shift string {t:#x} is longer than n={d.n}")
    idx = np.arange(1 << d.n) ^ t
    return Density(d.n, "explicit", d.values[idx], check=False)


def is_kwise_uniform(d: Density, k: int, tol: float = 1e-9) -> bool:
    if not 1 <= k <= d.n:
        raise DensityError(f"need 1 <= k <= n, got k={k}")
    spec = fourier_transform(d, None if d.mode == "explicit" else k)
    return spec.max_abs(1, k) <= tol


# --------------------------------------------------------------------------
# sampling

def _cumulative(d: Density) -> np.ndarray:
    cdf = np.cumsum(d.probabilities())
    cdf /= cdf[-1]
    return cdf


def sample(d: Density, m: int, seed) -> SampleBatch:
    """``m`` i.i.d. draws from ``d``; deterministic given ``seed``."""
    m = int(m)
    if m < 1:
        raise DensityError("need m >= 1")
    rng = make_rng(seed)
    if d.mode == "explicit":
        idx = np.searchsorted(_cumulative(d), rng.random(m), side="right")
        idx = np.minimum(idx, (1 << d.n) - 1)
        return SampleBatch.from_indices(d.n, idx)
    weights = np.searchsorted(_cumulative(d), rng.random(m), side="right")
    weights = np.minimum(weights, d.n)
    return SampleBatch(d.n, random_strings_of_weight(d.n, weights, rng))


def random_strings_of_weight(n: int, weights, rng) -> np.ndarray:
    """Packed words of uniformly random strings with the given Hamming weights."""
    weights = np.asarray(weights, dtype=np.int64)
    m = weights.size
    nw = max(1, -(-n // 64))
    out = np.zeros((m, nw), dtype=np.uint64)
    chunk = max(1, min(m, 4_000_000 // max(n, 1)))
    for start in range(0, m, chunk):
        wt = weights[start: start + chunk]
        keys = rng.random((wt.size, n))
        order = np.argsort(keys, axis=1, kind="stable")
        ranks = np.empty_like(order)
        np.put_along_axis(ranks, order, np.arange(n)[None, :].repeat(wt.size, 0), axis=1)
        bits = (ranks < wt[:, None]).astype(np.uint8)
        out[start: start + wt.size] = SampleBatch.from_bits(bits).words
    return out


def sample_counts(d: Density, m: int, seed) -> np.ndarray:
    """Occupancy counts of ``m`` i.i.d. draws (explicit mode), one multinomial draw.

    Same distribution as ``bincount(sample(d, m, seed).indices())`` but costs
    ``O(2**n)`` instead of ``O(m)``.
    """
    if d.mode != "explicit":
        raise DensityError("sample_counts needs an explicit density")
    rng = make_rng(seed)
    p = d.probabilities()
    p = p / p.sum()
    return rng.multinomial(int(m), p).astype(np.int64)
