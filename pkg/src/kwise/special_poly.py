"""Krawtchouk and normalized Hermite polynomials.

``krawtchouk(n, k, t)`` is the value of ``sum_{|S|=k} x^S`` on any string with
``t`` coordinates equal to -1. Values are built with the Pascal-style
recurrence ``K_k(t) = K_k(t-1) - K_{k-1}(t-1) - K_{k-1}(t)`` in exact integer
arithmetic, never from the alternating defining sum.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

__all__ = [
    "KrawtchoukTable",
    "krawtchouk",
    "krawtchouk_sum",
    "krawtchouk_table",
    "normalized_krawtchouk",
    "level_kernel",
    "hermite",
    "hermite_explicit",
    "kravchuk_hermite_gap",
    "EXACT_N_MAX",
]

# beyond this n, krawtchouk() returns floats (the integers are still built exactly)
EXACT_N_MAX = 64


class KrawtchoukTable:
    """Table of ``K_k^{(n)}(t)`` for ``0 <= k <= k_max`` and ``0 <= t <= n``.

    Entries are Python ints. ``table[k][t]`` indexes degree first.
    """

    def __init__(self, n: int, k_max: int | None = None):
        if n < 0:
            raise ValueError(f"n must be >= 0, got {n}")
        k_max = n if k_max is None else k_max
        if not 0 <= k_max <= n:
            raise ValueError(f"k_max must lie in [0, {n}], got {k_max}")
        self.n = n
        self.k_max = k_max
        rows = [[1] * (n + 1)]
        for k in range(1, k_max + 1):
            prev = rows[k - 1]
            row = [0] * (n + 1)
            row[0] = math.comb(n, k)
            for t in range(1, n + 1):
                row[t] = row[t - 1] - prev[t - 1] - prev[t]
            rows.append(row)
        self._rows = rows

    def __getitem__(self, k):
        return self._rows[k]

    def value(self, k: int, t: int) -> int:
        if not 0 <= k <= self.k_max:
            raise ValueError(f"degree {k} outside table range [0, {self.k_max}]")
        if not 0 <= t <= self.n:
            raise ValueError(f"t={t} outside [0, {self.n}]")
        return self._rows[k][t]

    def as_array(self, dtype=object) -> np.ndarray:
        return np.array(self._rows, dtype=dtype)


@lru_cache(maxsize=64)
def krawtchouk_table(n: int, k_max: int | None = None) -> KrawtchoukTable:
    return KrawtchoukTable(n, k_max)


def krawtchouk(n: int, k: int, t: int):
    """``K_k^{(n)}(t)``; an exact int for ``n <= 64``, a float beyond."""
    if not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
    if not 0 <= t <= n:
        raise ValueError(f"need 0 <= t <= n, got t={t}, n={n}")
    v = krawtchouk_table(n, k).value(k, t)
    return v if n <= EXACT_N_MAX else float(v)


def krawtchouk_sum(n: int, k: int) -> list:
    """``sum_{j=1..k} K_j^{(n)}(d)`` for every distance ``d``; exact ints.

    This is the pair kernel ``sum_{1<=|S|<=k} x^S y^S`` as a function of the
    Hamming distance between ``x`` and ``y``.
    """
    if not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
    tab = krawtchouk_table(n, k)
    return [sum(tab[j][d] for j in range(1, k + 1)) for d in range(n + 1)]


def normalized_krawtchouk(n: int, k_max: int) -> np.ndarray:
    """``K_k(t) / C(n, k)`` as floats, shape ``(k_max + 1, n + 1)``.

    Uses exact integers for modest ``n``; for large ``n`` the normalized
    three-term recurrence ``(n-k) k_{k+1} = (n-2t) k_k - k k_{k-1}``.
    """
    if not 0 <= k_max <= n:
        raise ValueError(f"need 0 <= k_max <= n, got {k_max}, n={n}")
    if n <= 400 or (k_max + 1) * (n + 1) <= 200_000:
        tab = krawtchouk_table(n, k_max)
        out = np.empty((k_max + 1, n + 1))
        for k in range(k_max + 1):
            c = math.comb(n, k)
            out[k] = [v / c for v in tab[k]]
        return out
    t = np.arange(n + 1, dtype=float)
    out = np.empty((k_max + 1, n + 1))
    out[0] = 1.0
    if k_max >= 1:
        out[1] = (n - 2 * t) / n
    for k in range(1, k_max):
        out[k + 1] = ((n - 2 * t) * out[k] - k * out[k - 1]) / (n - k)
    return out


def level_kernel(n: int, k: int, d: int):
    """``sum_{|S|=k} x^S y^S`` for ``x, y`` at Hamming distance ``d``."""
    if not 0 <= d <= n:
        raise ValueError(f"distance {d} outside [0, {n}]")
    return krawtchouk(n, k, d)


def hermite(k: int, z):
    """Normalized (probabilists') Hermite polynomial ``h_k(z)``.

    Evaluated by ``h_{j+1} = (z h_j - sqrt(j) h_{j-1}) / sqrt(j+1)``; accepts
    scalars or arrays.
    """
    if k < 0:
        raise ValueError(f"degree must be >= 0, got {k}")
    z = np.asarray(z, dtype=float)
    prev = np.ones_like(z)
    if k == 0:
        return prev if prev.ndim else float(prev)
    cur = z.copy()
    for j in range(1, k):
        prev, cur = cur, (z * cur - math.sqrt(j) * prev) / math.sqrt(j + 1)
    return cur if cur.ndim else float(cur)


def hermite_explicit(k: int, z: float) -> float:
    """The alternating closed form; only trustworthy for small ``k``."""
    if k < 0:
        raise ValueError(f"degree must be >= 0, got {k}")
    total = 0.0
    for j in range(k // 2 + 1):
        # (2j)!! = 2^j j!
        term = z ** (k - 2 * j) / (2 ** j * math.factorial(j) * math.factorial(k - 2 * j))
        total += -term if j % 2 else term
    return math.sqrt(math.factorial(k)) * total


def _round_toward_center(u: float, n: int) -> int:
    lo = math.floor(u)
    frac = u - lo
    if abs(frac - 0.5) < 1e-12:
        # tie: move toward n/2
        return lo if abs(lo - n / 2) <= abs(lo + 1 - n / 2) else lo + 1
    return int(round(u))


def kravchuk_hermite_gap(n: int, k: int, z: float) -> float:
    """``|C(n,k)^{-1/2} K_k(round((n - z sqrt n)/2)) - h_k(z)|``."""
    u = (n - z * math.sqrt(n)) / 2
    if u < -0.5 or u > n + 0.5:
        raise ValueError(f"z={z} maps to {u:.3f}, outside [0, {n}]")
    t = min(max(_round_toward_center(u, n), 0), n)
    # exact integer division keeps huge Krawtchouk values representable
    num = krawtchouk_table(n, k).value(k, t)
    c = math.comb(n, k)
    val = (num / c) * math.exp(0.5 * math.log(c))
    return abs(val - hermite(k, z))
