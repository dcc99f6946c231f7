"""Closed half-plane polyhedra and a dense two-phase simplex kernel.

Every set here is {x : A x <= b} with free (sign-unrestricted) x. The LP
kernel is a plain dense tableau simplex: Dantzig pricing with a Bland
fallback once pivots stop making progress. That is slow compared to a real
LP library, but the systems this package solves are desk-scale (tens of
rows, dimension below ten or so) and a hand-rolled kernel keeps results
bit-reproducible across platforms and worker counts.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass
from typing import Optional

import numpy as np

log = logging.getLogger(__name__)

# Feasibility slack used when deciding whether a region is empty.
FEAS_TOL = 1e-9
# A row is redundant when its LP maximum stays below b_i + REDUNDANCY_TOL.
REDUNDANCY_TOL = 1e-9
# Reduced-cost threshold for simplex pricing.
OPT_TOL = 1e-9
# Pivot budget factor: a solve may use at most PIVOT_CAP_FACTOR*(rows+dim) pivots.
PIVOT_CAP_FACTOR = 50
# Hard cap on intermediate row counts during projection.
FM_ROW_CAP = 10_000

_PIVOT_EPS = 1e-11
_BLAND_AFTER = 12


class GeometryError(RuntimeError):
    """Base class for numerical failures in the geometry kernel."""


class LpPivotLimitError(GeometryError):
    """The simplex kernel ran out of its pivot budget."""


class RowExplosionError(GeometryError):
    """Projection produced more intermediate rows than the configured cap."""


class EmptyPolyhedronError(GeometryError):
    """An operation that needs a nonempty set was handed an empty one."""


class _Counter:
    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._n = 0

    def bump(self) -> None:
        with self._lock:
            self._n += 1

    def value(self) -> int:
        with self._lock:
            return self._n


_LP_CALLS = _Counter()


def lp_call_count() -> int:
    """Process-wide number of simplex solves, for certification stats."""
    return _LP_CALLS.value()


class Polyhedron:
    """Immutable {x : A x <= b}.

    Rows whose coefficients are exactly zero with b >= 0 are dropped at
    construction (they constrain nothing). Zero rows with b < 0 are kept:
    they mark the set empty and is_empty() reports them as such.
    """

    __slots__ = ("A", "b", "dim")

    def __init__(self, A, b, dim: Optional[int] = None):
        A = np.asarray(A, dtype=float)
        b = np.asarray(b, dtype=float).ravel()
        if A.size == 0:
            if dim is None:
                raise ValueError("dim is required for a constraint-free polyhedron")
            A = A.reshape(0, dim)
        A = np.atleast_2d(A)
        if dim is None:
            dim = A.shape[1]
        if A.shape != (b.size, dim):
            raise ValueError(f"shape mismatch: A is {A.shape}, b has {b.size} rows, dim={dim}")
        if dim < 1:
            raise ValueError("dimension must be at least 1")
        if not (np.isfinite(A).all() and np.isfinite(b).all()):
            raise ValueError("polyhedron data must be finite")
        trivial = ~A.any(axis=1) & (b >= 0.0)
        if trivial.any():
            A, b = A[~trivial], b[~trivial]
        A = A.copy()
        b = b.copy()
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "dim", dim)

    def __setattr__(self, name, value):
        raise AttributeError("Polyhedron is immutable")

    @property
    def nrows(self) -> int:
        return self.A.shape[0]

    @classmethod
    def box(cls, lo, hi) -> "Polyhedron":
        """Axis-aligned box {x : lo <= x <= hi}."""
        lo = np.asarray(lo, dtype=float).ravel()
        hi = np.asarray(hi, dtype=float).ravel()
        if lo.size != hi.size:
            raise ValueError("lo and hi must have equal length")
        eye = np.eye(lo.size)
        return cls(np.vstack([eye, -eye]), np.concatenate([hi, -lo]))

    @classmethod
    def empty(cls, dim: int) -> "Polyhedron":
        """Canonical empty set in the given dimension."""
        return cls(np.zeros((1, dim)), np.array([-1.0]), dim)

    def intersect(self, A, b) -> "Polyhedron":
        """This set with additional rows A x <= b stacked on."""
        A = np.asarray(A, dtype=float).reshape(-1, self.dim)
        b = np.asarray(b, dtype=float).ravel()
        return Polyhedron(np.vstack([self.A, A]), np.concatenate([self.b, b]), self.dim)

    def __repr__(self) -> str:
        return f"Polyhedron(rows={self.nrows}, dim={self.dim})"


@dataclass(frozen=True)
class LpResult:
    """Outcome of one linear program.

    status is one of "optimal", "infeasible", "unbounded". value is the
    optimal objective when optimal, +/-inf when unbounded (sign matching the
    sense) and nan when infeasible. point is the optimizer, None unless
    optimal.
    """

    status: str
    value: float
    point: Optional[np.ndarray]


def _pivot_once(T, rhs, obj, basis, col, tol_piv):
    """Pivot on the column `col`; returns the leaving row or None if unbounded."""
    d = T[:, col]
    rows = np.nonzero(d > tol_piv)[0]
    if rows.size == 0:
        return None
    ratios = rhs[rows] / d[rows]
    best = ratios.min()
    ties = rows[ratios <= best + 1e-15]
    # Lowest basic column index among ties keeps Bland's rule honest.
    leave = ties[np.argmin([basis[r] for r in ties])]
    piv = T[leave, col]
    T[leave] /= piv
    rhs[leave] /= piv
    for r in range(T.shape[0]):
        if r != leave and T[r, col] != 0.0:
            f = T[r, col]
            T[r] -= f * T[leave]
            rhs[r] -= f * rhs[leave]
    f = obj[col]
    if f != 0.0:
        obj -= f * T[leave]
    basis[leave] = col
    tiny = (rhs < 0.0) & (rhs > -1e-11)
    if tiny.any():
        rhs[tiny] = 0.0
    return leave


def _simplex(A, b, c, budget, tol):
    """min c^T x over {A x <= b}, x free. Returns (status, x, phase1_measure).

    status: "optimal" | "infeasible" | "unbounded". x is None unless optimal.
    phase1_measure is the minimal total constraint violation (0 when feasible).
    """
    m, n = A.shape
    if m == 0:
        if np.allclose(c, 0.0):
            return "optimal", np.zeros(n), 0.0
        return "unbounded", None, 0.0
    flip = b < 0.0
    sign = np.where(flip, -1.0, 1.0)[:, None]
    Aw = sign * A
    rhs = np.abs(b).astype(float)
    nart = int(flip.sum())
    ncols = 2 * n + m + nart
    T = np.zeros((m, ncols))
    T[:, :n] = Aw
    T[:, n:2 * n] = -Aw
    T[np.arange(m), 2 * n + np.arange(m)] = sign.ravel()
    basis = np.empty(m, dtype=int)
    art_cols = []
    k = 0
    for i in range(m):
        if flip[i]:
            col = 2 * n + m + k
            T[i, col] = 1.0
            art_cols.append(col)
            basis[i] = col
            k += 1
        else:
            basis[i] = 2 * n + i
    art_cols = np.array(art_cols, dtype=int)
    is_art = np.zeros(ncols, dtype=bool)
    is_art[art_cols] = True

    pivots_used = 0

    def run(obj, allowed):
        nonlocal pivots_used
        streak = 0
        bland = False
        while True:
            reduced = np.where(allowed, obj, np.inf)
            cand = np.nonzero(reduced < -tol)[0]
            if cand.size == 0:
                return "optimal"
            col = cand[0] if bland else cand[np.argmin(reduced[cand])]
            if pivots_used >= budget:
                raise LpPivotLimitError(f"simplex exceeded {budget} pivots")
            leave = _pivot_once(T, rhs, obj, basis, col, _PIVOT_EPS)
            if leave is None:
                return "unbounded"
            pivots_used += 1
            if rhs[leave] <= 1e-13:
                streak += 1
                bland = bland or streak >= _BLAND_AFTER
            else:
                streak = 0

    # Phase 1: minimize the total artificial content.
    if nart > 0:
        obj1 = is_art.astype(float)
        for i in range(m):
            if is_art[basis[i]]:
                obj1 -= T[i]
        run(obj1, np.ones(ncols, dtype=bool))
        measure = float(rhs[is_art[basis]].sum())
        if measure > tol:
            return "infeasible", None, measure
        # Drive leftover basic artificials out on their own row; a row with no
        # structural pivot left is a dependent 0 = 0 constraint and is dropped.
        drop = []
        for i in range(T.shape[0]):
            if is_art[basis[i]]:
                cols = np.nonzero(np.abs(T[i, : 2 * n + m]) > _PIVOT_EPS)[0]
                if cols.size == 0:
                    drop.append(i)
                    continue
                j = int(cols[0])
                piv = T[i, j]
                T[i] /= piv
                rhs[i] /= piv
                for r in range(T.shape[0]):
                    if r != i and T[r, j] != 0.0:
                        f = T[r, j]
                        T[r] -= f * T[i]
                        rhs[r] -= f * rhs[i]
                basis[i] = j
        if drop:
            hold = np.setdiff1d(np.arange(T.shape[0]), drop)
            T, rhs, basis = T[hold], rhs[hold], basis[hold]
    else:
        measure = 0.0

    # Phase 2 on the real objective, artificial columns barred from entering.
    c2 = np.zeros(ncols)
    c2[:n] = c
    c2[n:2 * n] = -c
    obj2 = c2.copy()
    for i in range(m):
        if c2[basis[i]] != 0.0:
            obj2 -= c2[basis[i]] * T[i]
    status = run(obj2, ~is_art)
    if status == "unbounded":
        return "unbounded", None, measure
    x_full = np.zeros(ncols)
    x_full[basis] = rhs
    x = x_full[:n] - x_full[n:2 * n]
    return "optimal", x, measure


def solve_lp(c, P: Polyhedron, sense: str = "min", *, tol: float = OPT_TOL) -> LpResult:
    """Optimize the linear objective c over P.

    Args:
        c: objective coefficients, length P.dim.
        P: feasible set.
        sense: "min" or "max".

    Returns:
        LpResult. The pivot budget is PIVOT_CAP_FACTOR*(rows+dim); running
        past it raises LpPivotLimitError rather than returning garbage.
    """
    c = np.asarray(c, dtype=float).ravel()
    if c.size != P.dim:
        raise ValueError(f"objective has {c.size} entries, polyhedron dim is {P.dim}")
    if sense not in ("min", "max"):
        raise ValueError(f"unknown sense {sense!r}")
    _LP_CALLS.bump()
    budget = PIVOT_CAP_FACTOR * (P.nrows + P.dim)
    cw = c if sense == "min" else -c
    status, x, _ = _simplex(P.A, P.b, cw, budget, tol)
    if status == "infeasible":
        return LpResult("infeasible", float("nan"), None)
    if status == "unbounded":
        return LpResult("unbounded", float("-inf") if sense == "min" else float("inf"), None)
    value = float(c @ x)
    return LpResult("optimal", value, x)


def phase1_measure(P: Polyhedron, *, tol: float = OPT_TOL) -> float:
    """Minimal total violation of P's rows (0 means feasible)."""
    _LP_CALLS.bump()
    budget = PIVOT_CAP_FACTOR * (P.nrows + P.dim)
    _, _, measure = _simplex(P.A, P.b, np.zeros(P.dim), budget, tol)
    return measure


def is_empty(P: Polyhedron, tol: float = FEAS_TOL) -> bool:
    """True iff P is empty, judged by the phase-1 violation exceeding tol.

    A set that is nonempty but has no interior (a single point, a facet) is
    reported nonempty: the test measures infeasibility, not thinness.
    """
    zero = ~P.A.any(axis=1)
    if (zero & (P.b < 0.0)).any():
        return True
    if P.nrows == 0:
        return False
    return phase1_measure(P) > tol


def contains(P: Polyhedron, point, slack: float = 0.0) -> bool:
    """Componentwise membership check A point <= b + slack."""
    point = np.asarray(point, dtype=float).ravel()
    if point.size != P.dim:
        raise ValueError("point dimension mismatch")
    if P.nrows == 0:
        return True
    return bool(np.all(P.A @ point <= P.b + slack))


def remove_redundant(P: Polyhedron, tol: float = REDUNDANCY_TOL) -> Polyhedron:
    """Minimal sub-representation of a nonempty P with the same point set.

    Exact duplicate rows (up to positive scaling) are dropped first, then
    each remaining row is kept only if maximizing its left-hand side subject
    to the other rows can exceed b_i + tol. A row whose test LP fails
    numerically is retained: keeping a redundant row is harmless, dropping a
    needed one is not.
    """
    r = P.nrows
    if r <= 1:
        return P
    norms = np.linalg.norm(P.A, axis=1)
    scale = np.where(norms > 0.0, norms, 1.0)
    An = P.A / scale[:, None]
    bn = P.b / scale
    keep = []
    for i in range(r):
        dup = False
        for j in keep:
            if abs(bn[i] - bn[j]) <= 1e-12 and np.max(np.abs(An[i] - An[j])) <= 1e-12:
                dup = True
                break
        if not dup:
            keep.append(i)

    survivors = list(keep)
    for i in list(survivors):
        others = [j for j in survivors if j != i]
        if not others:
            break
        guard_A = np.vstack([P.A[others], P.A[i][None, :]])
        guard_b = np.concatenate([P.b[others], [P.b[i] + 1.0]])
        try:
            res = solve_lp(P.A[i], Polyhedron(guard_A, guard_b, P.dim), "max")
        except LpPivotLimitError:
            log.debug("redundancy LP hit the pivot cap, retaining row %d", i)
            continue
        if res.status == "optimal" and res.value <= P.b[i] + tol:
            survivors.remove(i)
    return Polyhedron(P.A[survivors], P.b[survivors], P.dim)


def interior_point(P: Polyhedron) -> tuple[np.ndarray, float]:
    """Chebyshev center of P and the radius of the inscribed ball.

    Raises EmptyPolyhedronError when P is empty and GeometryError when the
    center LP is unbounded (P has an unbounded interior).
    """
    if P.nrows == 0:
        raise GeometryError("polyhedron is the whole space, center is undefined")
    norms = np.linalg.norm(P.A, axis=1)
    A_ext = np.hstack([P.A, norms[:, None]])
    guard = np.zeros((1, P.dim + 1))
    guard[0, -1] = -1.0
    Q = Polyhedron(np.vstack([A_ext, guard]), np.concatenate([P.b, [0.0]]), P.dim + 1)
    c = np.zeros(P.dim + 1)
    c[-1] = 1.0
    res = solve_lp(c, Q, "max")
    if res.status == "infeasible":
        raise EmptyPolyhedronError("cannot compute an interior point of an empty set")
    if res.status == "unbounded":
        raise GeometryError("inscribed-ball LP is unbounded")
    return res.point[:-1], float(res.value)


def bounding_box(P: Polyhedron) -> tuple[np.ndarray, np.ndarray]:
    """Componentwise (lo, hi) bounds of a nonempty bounded P via 2*dim LPs."""
    lo = np.empty(P.dim)
    hi = np.empty(P.dim)
    for k in range(P.dim):
        e = np.zeros(P.dim)
        e[k] = 1.0
        fall = solve_lp(e, P, "min")
        rise = solve_lp(e, P, "max")
        if fall.status == "infeasible" or rise.status == "infeasible":
            raise EmptyPolyhedronError("bounding box of an empty set")
        if fall.status == "unbounded" or rise.status == "unbounded":
            raise GeometryError("polyhedron is unbounded")
        lo[k], hi[k] = fall.value, rise.value
    return lo, hi


def project_fm(P: Polyhedron, keep: int, *, row_cap: int = FM_ROW_CAP) -> Polyhedron:
    """Orthogonal projection of P onto its first `keep` coordinates.

    Coordinates are eliminated one at a time from the back. After each
    elimination the result is pruned: trivial rows vanish in the Polyhedron
    constructor, an empty intermediate short-circuits to the canonical empty
    set, and remove_redundant keeps the row count from snowballing. When an
    intermediate system would exceed row_cap rows, RowExplosionError is
    raised rather than grinding on.
    """
    if not 0 < keep < P.dim:
        raise ValueError(f"keep must lie strictly between 0 and {P.dim}")
    cur = P
    while cur.dim > keep:
        A, b = cur.A, cur.b
        scale = np.maximum(np.abs(A).max(axis=1, initial=0.0), np.abs(b))
        scale = np.where(scale > 0.0, scale, 1.0)
        A = A / scale[:, None]
        b = b / scale
        col = A[:, -1]
        zero = np.abs(col) <= 1e-12
        pos = np.nonzero(col > 1e-12)[0]
        neg = np.nonzero(col < -1e-12)[0]
        n_new = int(zero.sum()) + pos.size * neg.size
        if n_new > row_cap:
            raise RowExplosionError(
                f"projection needs {n_new} rows, cap is {row_cap}")
        parts_A = [A[zero][:, :-1]]
        parts_b = [b[zero]]
        if pos.size and neg.size:
            # Pairing an upper bound (positive coefficient) with a lower bound:
            # |col_n| * row_p + col_p * row_n, the eliminated column cancels.
            wp = (-col[neg])[None, :, None]   # |col_n|, broadcast over pairs
            wn = col[pos][:, None, None]      # col_p
            comb_A = wp * A[pos][:, None, :-1] + wn * A[neg][None, :, :-1]
            comb_b = (-col[neg])[None, :] * b[pos][:, None] + col[pos][:, None] * b[neg][None, :]
            parts_A.append(comb_A.reshape(-1, A.shape[1] - 1))
            parts_b.append(comb_b.reshape(-1))
        cur = Polyhedron(np.vstack(parts_A), np.concatenate(parts_b), cur.dim - 1)
        if is_empty(cur):
            return Polyhedron.empty(keep)
        cur = remove_redundant(cur)
    return cur


def normalize_rows(A, b) -> tuple[np.ndarray, np.ndarray]:
    """Rows rescaled to unit coefficient norm (zero rows left alone)."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).ravel()
    norms = np.linalg.norm(A, axis=1)
    scale = np.where(norms > 0.0, norms, 1.0)
    return A / scale[:, None], b / scale
