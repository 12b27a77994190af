"""Dense two-phase simplex for the small LPs built by :mod:`kwise.closeness`.

The solver works on a full tableau. Entering columns are chosen by the
largest-reduced-cost rule; after a run of degenerate pivots it falls back to
Bland's rule until the objective moves again, which rules out cycling.

With ``exact=True`` the same code runs on ``fractions.Fraction`` entries and
all tolerances are zero. That mode exists to validate float results on tiny
instances and is far too slow for anything else.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

__all__ = [
    "LinearProgram",
    "LpSolution",
    "LpError",
    "DimensionError",
    "solve",
    "check_feasible",
    "constraint_violation",
    "TAU_FEAS",
    "TAU_GAP",
]

TAU_FEAS = 1e-9
TAU_GAP = 1e-9
SENSES = ("eq", "ge", "le")

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"

# consecutive degenerate pivots tolerated before switching to Bland's rule
_DEGENERATE_STREAK = 25
# relative size of the rhs perturbation used against degeneracy in float mode
_PERTURB = 1e-7
_PERTURB_SEED = 20240601


class LpError(Exception):
    """Base class for solver errors."""


class DimensionError(LpError, ValueError):
    """Raised when an LP's arrays have inconsistent shapes or bad senses."""


@dataclass
class LinearProgram:
    """minimize ``c @ x`` subject to ``A[i] @ x  (sense_i)  b[i]`` and ``x >= lower``.

    ``lower`` defaults to zero; entries may be ``-inf`` for free variables.
    """

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    senses: tuple
    lower: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float if not _is_exact(self.c) else object).ravel()
        A = np.asarray(self.A, dtype=float if not _is_exact(self.A) else object)
        if A.ndim == 1 and A.size == 0:
            A = A.reshape(0, self.c.size)
        if A.ndim != 2:
            raise DimensionError(f"constraint matrix must be 2-d, got shape {A.shape}")
        self.A = A
        self.b = np.asarray(self.b, dtype=float if not _is_exact(self.b) else object).ravel()
        if isinstance(self.senses, str):
            self.senses = (self.senses,) * A.shape[0]
        self.senses = tuple(self.senses)
        m, n = A.shape
        if n != self.c.size:
            raise DimensionError(f"A has {n} columns but c has length {self.c.size}")
        if m != self.b.size:
            raise DimensionError(f"A has {m} rows but b has length {self.b.size}")
        if len(self.senses) != m:
            raise DimensionError(f"{len(self.senses)} senses given for {m} rows")
        bad = [s for s in self.senses if s not in SENSES]
        if bad:
            raise DimensionError(f"unknown row sense(s) {sorted(set(bad))}; use eq/ge/le")
        if self.lower is None:
            self.lower = np.zeros(n)
        else:
            self.lower = np.asarray(self.lower, dtype=float).ravel()
            if self.lower.size != n:
                raise DimensionError(f"lower has length {self.lower.size}, expected {n}")
            if np.any(np.isposinf(self.lower)) or np.any(np.isnan(self.lower)):
                raise DimensionError("lower bounds must be finite or -inf")

    @property
    def shape(self):
        return self.A.shape


@dataclass
class LpSolution:
    status: str
    x: np.ndarray | None = None
    objective: float | None = None
    y: np.ndarray | None = None
    iterations: int = 0
    info: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def _is_exact(a) -> bool:
    arr = np.asarray(a)
    if arr.dtype != object or arr.size == 0:
        return False
    return any(isinstance(v, Fraction) for v in arr.ravel())


def _to_fraction_array(a) -> np.ndarray:
    arr = np.asarray(a, dtype=object)
    out = np.empty(arr.shape, dtype=object)
    flat_in = arr.ravel()
    flat_out = out.ravel()
    for i, v in enumerate(flat_in):
        flat_out[i] = v if isinstance(v, Fraction) else Fraction(v)
    return out


class _Standardized:
    """``min c@z  s.t.  M z = r, z >= 0`` plus the bookkeeping to map back."""

    def __init__(self, lp: LinearProgram, exact: bool):
        conv = _to_fraction_array if exact else (lambda a: np.asarray(a, dtype=float))
        A = conv(lp.A)
        b = conv(lp.b)
        c = conv(lp.c)
        m, n = A.shape
        zero = Fraction(0) if exact else 0.0
        one = Fraction(1) if exact else 1.0

        # variable transforms: finite lower -> shift, -inf -> split
        self.n_orig = n
        cols = []
        costs = []
        self.var_map = []  # (orig index, sign) per structural column
        self.obj_offset = zero
        shift = np.array([zero] * n, dtype=object) if exact else np.zeros(n)
        for j in range(n):
            lo = lp.lower[j]
            if np.isneginf(lo):
                cols.append(A[:, j])
                costs.append(c[j])
                self.var_map.append((j, 1))
                cols.append(-A[:, j])
                costs.append(-c[j])
                self.var_map.append((j, -1))
            else:
                lo_v = Fraction(float(lo)) if exact else float(lo)
                if lo_v != 0:
                    shift[j] = lo_v
                    self.obj_offset = self.obj_offset + c[j] * lo_v
                cols.append(A[:, j])
                costs.append(c[j])
                self.var_map.append((j, 1))
        self.shift = shift
        if m:
            r = b - (A @ shift if n else np.array([zero] * m, dtype=object if exact else float))
        else:
            r = b.copy()
        n_struct = len(cols)
        M = np.column_stack(cols) if cols else np.empty((m, 0), dtype=object if exact else float)
        if exact and M.dtype != object:
            M = M.astype(object)

        # drop all-zero rows after checking consistency
        keep = []
        self.trivially_infeasible = False
        for i in range(m):
            row_max = max((abs(v) for v in M[i]), default=zero)
            if row_max == 0:
                rhs = r[i]
                tol = 0 if exact else TAU_FEAS
                s = lp.senses[i]
                ok = (abs(rhs) <= tol) if s == "eq" else (rhs <= tol if s == "ge" else rhs >= -tol)
                if not ok:
                    self.trivially_infeasible = True
                continue
            keep.append(i)
        self.rows = keep
        M = M[keep]
        r = r[keep]
        senses = [lp.senses[i] for i in keep]
        mk = len(keep)

        # unit max-norm row scaling and rhs sign normalization
        scale = []
        for i in range(mk):
            rm = max(abs(v) for v in M[i])
            s = one / rm
            M[i] = M[i] * s
            r[i] = r[i] * s
            scale.append(s)
        n_slack = sum(1 for s in senses if s != "eq")
        S = np.zeros((mk, n_slack), dtype=object if exact else float)
        if exact:
            S[:] = zero
        self.slack_row = []
        col = 0
        for i, s in enumerate(senses):
            if s == "le":
                S[i, col] = one
            elif s == "ge":
                S[i, col] = -one
            else:
                continue
            self.slack_row.append(i)
            col += 1
        sign = []
        for i in range(mk):
            if r[i] < 0:
                M[i] = -M[i]
                S[i] = -S[i]
                r[i] = -r[i]
                sign.append(-one)
            else:
                sign.append(one)
        self.row_factor = np.array([scale[i] * sign[i] for i in range(mk)], dtype=object if exact else float)
        self.M = np.hstack([M, S]) if n_slack else M
        self.r = r
        self.c = np.concatenate([np.array(costs, dtype=object if exact else float),
                                 np.array([zero] * n_slack, dtype=object if exact else float)])
        self.n_struct = n_struct
        self.m = mk
        self.exact = exact

    def recover_x(self, z) -> np.ndarray:
        x = self.shift.copy()
        for col, (j, sgn) in enumerate(self.var_map):
            x[j] = x[j] + sgn * z[col]
        return x


def _pivot(T, row, col, exact):
    T[row] = T[row] / T[row, col]
    colv = T[:, col].copy()
    colv[row] = 0
    rows = np.flatnonzero(np.asarray(colv != 0, dtype=bool))
    if rows.size == 0:
        return
    prow = T[row]
    cols = np.flatnonzero(np.asarray(prow != 0, dtype=bool))
    if exact:
        T[rows] -= np.multiply.outer(colv[rows], prow)
        return
    # only the nonzero block of the update changes; zero float dust there
    block = T[np.ix_(rows, cols)] - np.multiply.outer(colv[rows], prow[cols])
    block[np.abs(block) < 1e-13] = 0.0
    T[np.ix_(rows, cols)] = block
    T[rows, col] = 0.0


def _simplex(T, basis, allowed, exact, tol, max_iter, ncol, it0=0):
    """Primal simplex on tableau ``T`` (objective row last, rhs in column ``ncol``).

    Returns ``(status, iterations)``.
    """
    m = T.shape[0] - 1
    it = it0
    streak = 0
    allowed_idx = np.nonzero(allowed)[0]
    piv_tol = 0 if exact else tol
    while True:
        rc = T[m, :ncol][allowed_idx]
        neg = np.nonzero(np.asarray(rc < -tol, dtype=bool))[0]
        if neg.size == 0:
            return OPTIMAL, it
        if it >= max_iter:
            return ITERATION_LIMIT, it
        if streak >= _DEGENERATE_STREAK:
            j = allowed_idx[neg[0]]
        else:
            j = allowed_idx[neg[np.argmin(rc[neg])]]
        colv = T[:m, j]
        pos = np.nonzero(np.asarray(colv > piv_tol, dtype=bool))[0]
        if pos.size == 0:
            return UNBOUNDED, it
        ratios = T[pos, ncol] / colv[pos]
        if exact:
            best = min(ratios)
            cand = pos[np.asarray(ratios == best, dtype=bool)]
        else:
            best = float(np.min(ratios))
            cand = pos[ratios <= best + 1e-12 * (1.0 + abs(best))]
        # Bland tie-break on the leaving variable
        row = cand[np.argmin([basis[i] for i in cand])]
        degenerate = (best == 0) if exact else (best <= tol)
        _pivot(T, row, j, exact)
        basis[row] = j
        it += 1
        streak = streak + 1 if degenerate else 0


def _dual_cleanup(T, basis, allowed, tol, max_iter, ncol, it0=0):
    """Dual simplex from a dual-feasible tableau until the rhs is nonnegative.

    Used after a perturbed solve, once the true rhs has been restored.
    """
    m = T.shape[0] - 1
    it = it0
    allowed_idx = np.nonzero(allowed)[0]
    while True:
        rhs = T[:m, ncol]
        r = int(np.argmin(rhs))
        if rhs[r] >= -tol:
            return OPTIMAL, it
        if it >= max_iter:
            return ITERATION_LIMIT, it
        a = T[r, :ncol][allowed_idx]
        neg = np.nonzero(a < -tol)[0]
        if neg.size == 0:
            return INFEASIBLE, it
        rc = np.maximum(T[m, :ncol][allowed_idx][neg], 0.0)
        ratios = rc / -a[neg]
        best = float(np.min(ratios))
        cand = neg[ratios <= best + 1e-12 * (1.0 + best)]
        j = allowed_idx[cand[np.argmax(-a[cand])]]
        _pivot(T, r, j, False)
        basis[r] = j
        it += 1


def _perturb(T, rows, ncol, rng):
    """Add small positive noise to the working rhs of ``rows`` (float mode)."""
    if len(rows):
        rows = np.asarray(rows)
        T[rows, ncol] += _PERTURB * (1.0 + np.abs(T[rows, ncol])) * rng.uniform(0.5, 1.0, rows.size)


def _run(T, basis, allowed, tol, max_iter, ncol, it0, rows, rng):
    """Perturbed primal simplex, then restore the true rhs and repair with dual simplex."""
    _perturb(T, rows, ncol, rng)
    status, it = _simplex(T, basis, allowed, False, tol, max_iter, ncol, it0)
    T[:, ncol] = T[:, ncol + 1]
    if status != OPTIMAL:
        return status, it
    status, it = _dual_cleanup(T, basis, allowed, tol, max_iter, ncol, it)
    if status != OPTIMAL:
        return status, it
    return _simplex(T, basis, allowed, False, tol, max_iter, ncol, it)


def solve(lp: LinearProgram, exact: bool = False, max_iter: int | None = None,
          perturb: bool = True) -> LpSolution:
    """Solve ``lp``; returns an :class:`LpSolution` whose status is one of
    optimal / infeasible / unbounded / iteration_limit.

    In float mode the working rhs is perturbed by a fixed-seed relative 1e-7
    to avoid degenerate stalls; the true rhs is restored and repaired by dual
    simplex before the solution is read off. ``perturb=False`` disables this.
    """
    if not isinstance(lp, LinearProgram):
        raise TypeError("solve() expects a LinearProgram")
    std = _Standardized(lp, exact)
    zero = Fraction(0) if exact else 0.0
    one = Fraction(1) if exact else 1.0
    tol = 0 if exact else TAU_FEAS
    dtype = object if exact else float
    if std.trivially_infeasible:
        return LpSolution(INFEASIBLE)
    m, N = std.M.shape
    if max_iter is None:
        max_iter = 50 * (m + N) + 1000

    # pick an initial basic column per row: an existing column with a single
    # positive entry if possible, otherwise an artificial
    init_col = [-1] * m
    if m and N:
        nnz = np.count_nonzero(np.asarray(std.M != 0, dtype=bool), axis=0)
        for j in np.nonzero(nnz == 1)[0]:
            i = int(np.nonzero(np.asarray(std.M[:, j] != 0, dtype=bool))[0][0])
            if init_col[i] < 0 and std.M[i, j] > 0:
                init_col[i] = int(j)
    art_rows = [i for i in range(m) if init_col[i] < 0]
    n_art = len(art_rows)
    ncol = N + n_art
    # float mode keeps a second rhs column with the unperturbed values
    T = np.zeros((m + 1, ncol + (1 if exact else 2)), dtype=dtype)
    if exact:
        T[:] = zero
    T[:m, :N] = std.M
    T[:m, ncol] = std.r
    if not exact:
        T[:m, ncol + 1] = std.r
    rng = None if exact else np.random.Generator(np.random.PCG64(_PERTURB_SEED))
    for a, i in enumerate(art_rows):
        T[i, N + a] = one
        init_col[i] = N + a
    init_entry = [T[i, init_col[i]] for i in range(m)]
    for i in range(m):
        if T[i, init_col[i]] != 1:
            T[i] = T[i] / T[i, init_col[i]]
    basis = list(init_col)
    iters = 0

    if n_art:
        T[m] = zero
        for i in art_rows:
            T[m] -= T[i]
        for a in range(n_art):
            T[m, N + a] = zero
        allowed = np.ones(ncol, dtype=bool)
        if exact or not perturb:
            status, iters = _simplex(T, basis, allowed, exact, tol, max_iter, ncol)
        else:
            status, iters = _run(T, basis, allowed, tol, max_iter, ncol, 0, range(m), rng)
            if status not in (OPTIMAL, ITERATION_LIMIT):
                return solve(lp, exact, max_iter, perturb=False)
        if status == ITERATION_LIMIT:
            return LpSolution(ITERATION_LIMIT, iterations=iters)
        phase1 = -T[m, ncol]
        if phase1 > (0 if exact else TAU_FEAS * max(1.0, float(m))):
            return LpSolution(INFEASIBLE, iterations=iters, info={"phase1": float(phase1)})
        # drive zero-level artificials out of the basis; drop redundant rows
        redundant = []
        for i in range(m):
            if basis[i] >= N:
                rowv = T[i, :N]
                cand = np.nonzero(np.asarray(abs(rowv) > (0 if exact else 1e-9), dtype=bool))[0]
                if cand.size:
                    _pivot(T, i, int(cand[0]), exact)
                    basis[i] = int(cand[0])
                else:
                    redundant.append(i)
    else:
        redundant = []

    # phase 2 objective row: reduced costs of the true costs
    cfull = np.concatenate([std.c, np.array([zero] * n_art, dtype=dtype)])
    T[m] = zero
    T[m, :ncol] = cfull
    for i in range(m):
        cb = cfull[basis[i]]
        if cb != 0:
            T[m] -= cb * T[i]
    allowed = np.zeros(ncol, dtype=bool)
    allowed[:N] = True
    if exact or not perturb:
        status, iters = _simplex(T, basis, allowed, exact, tol, max_iter, ncol, iters)
    else:
        live = [i for i in range(m) if i not in redundant]
        status, iters = _run(T, basis, allowed, tol, max_iter, ncol, iters, live, rng)
        if status == INFEASIBLE:
            return solve(lp, exact, max_iter, perturb=False)
    if status != OPTIMAL:
        return LpSolution(status, iterations=iters)

    z = np.array([zero] * ncol, dtype=dtype)
    for i in range(m):
        z[basis[i]] = T[i, ncol]
    if not exact:
        z = np.maximum(z, 0.0)
    x = std.recover_x(z[: std.n_struct])
    obj = (std.c[: N] @ z[:N] if N else zero) + std.obj_offset
    # y_i from the reduced cost of row i's initial basic column
    ystd = np.array([zero] * m, dtype=dtype)
    for i in range(m):
        if i in redundant:
            continue
        j = init_col[i]
        ystd[i] = (cfull[j] - T[m, j]) / init_entry[i]
    y = np.array([zero] * lp.A.shape[0], dtype=dtype)
    for k, i in enumerate(std.rows):
        y[i] = ystd[k] * std.row_factor[k]
    if not exact:
        x = x.astype(float)
        y = y.astype(float)
        obj = float(obj)
    return LpSolution(OPTIMAL, x=x, objective=obj, y=y, iterations=iters)


def check_feasible(lp: LinearProgram, exact: bool = False) -> str:
    """``'feasible'`` or ``'infeasible'``; solves ``lp`` with a zero objective."""
    zero_c = np.zeros(lp.c.size) if not exact else np.array([Fraction(0)] * lp.c.size, dtype=object)
    probe = LinearProgram(zero_c, lp.A, lp.b, lp.senses, lp.lower)
    sol = solve(probe, exact=exact)
    if sol.status == ITERATION_LIMIT:
        raise LpError("iteration limit reached while checking feasibility")
    return "feasible" if sol.status == OPTIMAL else "infeasible"


def constraint_violation(lp: LinearProgram, x) -> float:
    """Largest constraint or bound violation of ``x``, rows scaled to unit max-norm."""
    x = np.asarray(x, dtype=float)
    A = np.asarray(lp.A, dtype=float)
    b = np.asarray(lp.b, dtype=float)
    worst = float(np.max(np.maximum(np.asarray(lp.lower, float) - x, 0.0), initial=0.0))
    for i, s in enumerate(lp.senses):
        norm = np.max(np.abs(A[i])) if A.shape[1] else 0.0
        norm = norm if norm > 0 else 1.0
        lhs = A[i] @ x
        if s == "eq":
            v = abs(lhs - b[i])
        elif s == "ge":
            v = max(b[i] - lhs, 0.0)
        else:
            v = max(lhs - b[i], 0.0)
        worst = max(worst, v / norm)
    return worst


def dual_objective(lp: LinearProgram, y) -> float:
    """``b@y`` plus the finite-lower-bound terms; a lower bound on the optimum
    whenever ``y`` is dual feasible."""
    y = np.asarray(y, dtype=float)
    A = np.asarray(lp.A, dtype=float)
    val = float(np.asarray(lp.b, float) @ y)
    rc = np.asarray(lp.c, float) - A.T @ y
    lo = np.asarray(lp.lower, float)
    fin = np.isfinite(lo)
    return val + float(lo[fin] @ rc[fin])
