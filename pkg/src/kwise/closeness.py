"""Distance to the k-wise uniform polytope: exact LP distance, dual witnesses,
the mixture mend, and the closed-form k=1 mend."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .constructions import LowerBoundParams, psi_j_density
from .cube_fourier import (
    Density,
    DensityError,
    fourier_transform,
    fwht,
    levels,
    masks_by_level,
)
from .lp_solver import LinearProgram, LpError, solve

__all__ = [
    "ClosenessResult",
    "DualWitness",
    "MendResult",
    "ClosenessError",
    "WitnessError",
    "closeness_lp",
    "closeness_exact",
    "dual_witness_value",
    "validate_witness",
    "lower_bound_witness",
    "mend_lp",
    "mend_feasibility_lp",
    "mend_min_weight",
    "mend_1wise",
    "epsilon_k",
    "fourier_distance_bound",
    "CLOSENESS_N_MAX",
]

CLOSENESS_N_MAX = 10
TAU_WITNESS = 1e-9
TAU_DUALITY = 1e-6


class ClosenessError(LpError):
    """The LP behind a closeness computation did not reach an optimum."""


class WitnessError(ValueError):
    """A dual witness violates a constraint; ``constraint`` and ``point`` say where."""

    def __init__(self, message, constraint=None, point=None):
        super().__init__(message)
        self.constraint = constraint
        self.point = point


@dataclass(frozen=True)
class DualWitness:
    """Point values of ``p`` and ``q`` over ``{-1,1}^n`` plus the certified value
    ``<phi, q> - p_hat(empty)`` (a lower bound on twice the distance)."""

    p: np.ndarray
    q: np.ndarray
    value: float

    def to_json(self) -> dict:
        return {"p": self.p.tolist(), "q": self.q.tolist()}


@dataclass(frozen=True)
class ClosenessResult:
    distance: float
    nearest: Density
    dual_certificate: DualWitness | None = None
    exact_distance: Fraction | None = None


@dataclass(frozen=True)
class MendResult:
    """``mixed = (phi + w psi) / (1 + w)`` is k-wise uniform and within ``w`` of ``phi``."""

    w: float
    psi: Density
    mixed: Density


def _require_explicit(phi: Density, k: int, who: str):
    if not isinstance(phi, Density):
        raise DensityError(f"{who} expects a Density")
    if phi.mode != "explicit":
        raise DensityError(f"{who} needs an explicit density")
    if phi.n > CLOSENESS_N_MAX:
        raise DensityError(f"{who} supports n <= {CLOSENESS_N_MAX}, got n={phi.n}")
    if not 1 <= k <= phi.n:
        raise DensityError(f"need 1 <= k <= n, got k={k}, n={phi.n}")


def _character_matrix(n: int, masks) -> np.ndarray:
    """``chars[r, x] = x^{S_r}`` as +-1 ints."""
    x = np.arange(1 << n, dtype=np.uint64)
    par = np.bitwise_count(x[None, :] & np.asarray(masks, dtype=np.uint64)[:, None]) & 1
    return (1 - 2 * par.astype(np.int64))


def _as_fractions(a):
    flat = [v if isinstance(v, Fraction) else Fraction(v.item() if hasattr(v, "item") else v)
            for v in np.ravel(a)]
    return np.array(flat, dtype=object).reshape(np.shape(a))


# --------------------------------------------------------------------------
# exact distance

def closeness_lp(phi: Density, k: int, exact: bool = False) -> LinearProgram:
    """LP for the distance, in terms of mass removed and added.

    Variables ``[u(x), v(x)]`` (all >= 0) with ``phi' = phi - u + v``.
    Rows ``0..N-1``: ``u(x) <= phi(x)`` (so ``phi' >= 0``).
    Remaining rows, one per ``|S| <= k``: ``2^-n sum_x (v - u)(x) x^S = -phi_hat(S)``
    (zero for ``S = empty``). Objective ``(1/2) 2^-n sum_x (u + v)``.
    """
    n = phi.n
    N = 1 << n
    masks = masks_by_level(n, 0, k)
    chars = _character_matrix(n, masks)
    eye = np.eye(N, dtype=np.int64)
    top = np.hstack([eye, np.zeros((N, N), dtype=np.int64)])
    bottom = np.hstack([-chars, chars])
    senses = ("le",) * N + ("eq",) * masks.size
    if exact:
        ph = fwht(_as_fractions(phi.values))[masks] * Fraction(1, N)
        rhs_f = -ph
        rhs_f[0] = Fraction(0)
        A = np.vstack([_as_fractions(top), _as_fractions(bottom) * Fraction(1, N)])
        b = np.concatenate([_as_fractions(phi.values), rhs_f])
        c = np.full(2 * N, Fraction(1, 2 * N), dtype=object)
    else:
        rhs_f = -fourier_transform(phi).coeffs[masks]
        rhs_f[0] = 0.0
        A = np.vstack([top.astype(float), bottom / N])
        b = np.concatenate([phi.values, rhs_f])
        c = np.full(2 * N, 0.5 / N)
    return LinearProgram(c, A, b, senses)


def closeness_exact(phi: Density, k: int, exact: bool = False) -> ClosenessResult:
    """Minimum TV distance from ``phi`` to a k-wise uniform density, solved as an LP.

    The LP duals give a witness ``(p, q)``. With ``y`` the duals of the rows
    ``u <= phi`` and ``z`` those of the Fourier rows, ``p = -2 sum_S z_S x^S``
    and ``q = 2^{n+1} y + p``; its value equals twice the distance.
    With ``exact=True`` the LP is re-solved in rational arithmetic.
    """
    _require_explicit(phi, k, "closeness_exact")
    n = phi.n
    N = 1 << n
    lp = closeness_lp(phi, k, exact=exact)
    sol = solve(lp, exact=exact)
    if sol.status == "infeasible":
        raise ClosenessError("closeness LP reported infeasible; the uniform density is always feasible, so this is a solver fault")
    if not sol.optimal:
        raise ClosenessError(f"closeness LP ended with status {sol.status}")
    x = np.asarray(sol.x, dtype=float)
    moved = np.maximum(phi.values - x[:N] + x[N:], 0.0)
    nearest = Density(n, "explicit", moved * (N / moved.sum()))
    y = np.asarray(sol.y, dtype=float)
    masks = masks_by_level(n, 0, k)
    z = np.zeros(N)
    z[masks] = y[N:]
    p = -2.0 * fwht(z)
    q = (2.0 * N) * y[:N] + p
    value = float(phi.values @ q / N - p.mean())
    witness = DualWitness(p, q, value)
    exact_val = Fraction(sol.objective) if exact else None
    return ClosenessResult(float(sol.objective), nearest, witness, exact_val)


# --------------------------------------------------------------------------
# dual witnesses

def validate_witness(n: int, k: int, p, q, tol: float = TAU_WITNESS):
    """Check ``p - q >= 0``, ``q <= 1``, ``p >= -1`` and ``deg p <= k``; raise
    :class:`WitnessError` naming the first violated constraint."""
    N = 1 << n
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != (N,) or q.shape != (N,):
        raise WitnessError(f"p and q need {N} values each, got {p.shape} and {q.shape}", "shape")
    checks = (
        ("p(x) - q(x) >= 0", p - q + tol),
        ("q(x) <= 1", 1.0 + tol - q),
        ("p(x) >= -1", p + 1.0 + tol),
    )
    for name, slack in checks:
        bad = np.nonzero(slack < 0)[0]
        if bad.size:
            x = int(bad[0])
            raise WitnessError(f"witness violates {name} at x={x} (p={p[x]:.6g}, q={q[x]:.6g})", name, x)
    ph = fwht(p) / N
    high = np.nonzero((levels(n) > k) & (np.abs(ph) > tol))[0]
    if high.size:
        S = int(high[0])
        raise WitnessError(f"p has degree above {k}: coefficient {ph[S]:.3e} at mask {S:#x}", "deg p <= k", S)


def dual_witness_value(phi: Density, k: int, p, q, validate: bool = True) -> float:
    """``<phi, q> - p_hat(empty)``; a lower bound on twice the distance when valid."""
    if phi.mode != "explicit":
        raise DensityError("dual_witness_value needs an explicit density")
    if validate:
        validate_witness(phi.n, k, p, q)
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return float(np.mean(phi.values * q) - np.mean(p))


def lower_bound_witness(params: LowerBoundParams) -> DualWitness:
    """``p = mu C(n,k)^{-1/2} sum_{|S|=k} x^S`` and ``q = min(p, 1)``, paired with
    the symmetric degree-k density of the same parameters."""
    from .constructions import lower_bound_density

    n = params.n
    if n > CLOSENESS_N_MAX + 6:
        raise DensityError("explicit witness needs a small n")
    d = lower_bound_density(params).to_explicit()
    p = d.values - 1.0
    q = np.minimum(p, 1.0)
    value = float(np.mean(d.values * q) - np.mean(p))
    return DualWitness(p, q, value)


# --------------------------------------------------------------------------
# mending

def mend_lp(phi: Density, k: int) -> LinearProgram:
    """``min E[chi]`` over ``chi >= 0`` with ``chi_hat(S) = -phi_hat(S)``, ``1 <= |S| <= k``."""
    n = phi.n
    N = 1 << n
    masks = masks_by_level(n, 1, k)
    chars = _character_matrix(n, masks) / N
    target = -fourier_transform(phi).coeffs[masks]
    return LinearProgram(np.full(N, 1.0 / N), chars, target, "eq")


def mend_feasibility_lp(phi: Density, k: int, w: float) -> LinearProgram:
    """Densities ``psi`` with ``psi_hat(S) = -phi_hat(S)/w`` for ``1 <= |S| <= k``."""
    if w <= 0:
        raise ValueError("w must be positive")
    n = phi.n
    N = 1 << n
    masks = masks_by_level(n, 0, k)
    chars = _character_matrix(n, masks) / N
    target = -fourier_transform(phi).coeffs[masks] / w
    target[0] = 1.0
    return LinearProgram(np.zeros(N), chars, target, "eq")


def _mixed(phi: Density, w: float, psi: Density) -> Density:
    return Density(phi.n, "explicit", (phi.values + w * psi.values) / (1.0 + w))


def mend_min_weight(phi: Density, k: int) -> MendResult:
    """Smallest mixing weight ``w`` making ``(phi + w psi)/(1+w)`` k-wise uniform."""
    _require_explicit(phi, k, "mend_min_weight")
    n = phi.n
    N = 1 << n
    sol = solve(mend_lp(phi, k))
    if not sol.optimal:
        raise ClosenessError(f"mend LP ended with status {sol.status}")
    chi = np.maximum(np.asarray(sol.x, dtype=float), 0.0)
    w = float(chi.mean())
    if w <= 1e-15:
        psi = Density.uniform(n)
        w = 0.0
    else:
        psi = Density(n, "explicit", chi / w * (N / (chi / w).sum()))
    return MendResult(w, psi, _mixed(phi, w, psi))


def mend_1wise(phi: Density) -> MendResult:
    """Closed-form 1-wise mend with weight ``max_i |phi_hat({i})|``.

    Coordinates are sign-normalized so all degree-1 biases are >= 0 (zero
    counts as +), sorted by bias (ties by index), and ``phi`` is mixed with
    ``sum_j w_j psi_j`` where ``w_j`` are the successive bias increments.
    """
    if phi.mode != "explicit":
        raise DensityError("mend_1wise needs an explicit density")
    n = phi.n
    N = 1 << n
    spec = fourier_transform(phi).coeffs
    b = np.array([spec[1 << i] for i in range(n)])
    flip = 0
    for i in range(n):
        if b[i] < 0:
            flip |= 1 << i
    a = np.abs(b)
    order = sorted(range(n), key=lambda i: (a[i], i))
    eps = float(a.max())
    if eps == 0:
        psi = Density.uniform(n)
        return MendResult(0.0, psi, phi)
    # psi_j in sorted coordinates: sorted position p maps to original coordinate order[p]
    inv = np.zeros(N, dtype=np.int64)
    x = np.arange(N)
    for pos, coord in enumerate(order):
        inv |= ((x >> pos) & 1) << coord
    total = np.zeros(N)
    prev = 0.0
    for j in range(1, n + 1):
        wj = a[order[j - 1]] - prev
        prev = a[order[j - 1]]
        if wj == 0:
            continue
        pj = psi_j_density(n, j).values
        # relabel sorted coordinates to original ones, then undo the sign normalization
        placed = np.zeros(N)
        placed[inv] = pj
        placed = placed[np.arange(N) ^ flip]
        total += wj * placed
    psi = Density(n, "explicit", total / eps)
    return MendResult(eps, psi, _mixed(phi, eps, psi))


def epsilon_k(phi: Density, k: int) -> float:
    """``max_{1 <= |S| <= k} |phi_hat(S)|``."""
    if not 1 <= k <= phi.n:
        raise DensityError(f"need 1 <= k <= n, got k={k}")
    spec = fourier_transform(phi, None if phi.mode == "explicit" else k)
    return spec.max_abs(1, k)


def fourier_distance_bound(phi: Density, k: int) -> float:
    """``e^k sqrt(W^{1..k}[phi])``."""
    spec = fourier_transform(phi, None if phi.mode == "explicit" else k)
    return math.exp(k) * math.sqrt(spec.weight(1, k))
