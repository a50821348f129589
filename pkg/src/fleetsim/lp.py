"""Dense linear programming core: two-phase revised simplex plus helpers.

Everything downstream that optimizes (task assignment, MPC) reduces to
``min c'x  s.t.  Ax = b, x >= 0`` and runs through :func:`solve_lp`. The
solver is deliberately deterministic: Dantzig pricing with lowest-index
tie-breaking, switching to Bland's rule after a run of degenerate pivots,
and a leaving-variable rule that always picks the smallest basis column
among tied ratios. Identical inputs give identical bases on every call,
which distributed protocols rely on for consensus.

An exact mode re-runs the same pivot rules over ``fractions.Fraction``
arithmetic (floats convert losslessly), useful in tests where perturbation
tie-breaking must be provable rather than numerical.

Also here: the assignment-problem encoding (one redundant constraint row
dropped so the system has full row rank 2n-1), a Hungarian oracle, and the
lexicographic cost perturbation used to make optimal assignments unique.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import permutations

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import LpError

__all__ = [
    "StandardLP",
    "LpSolution",
    "AssignmentProblem",
    "solve_lp",
    "simplex_from_basis",
    "build_assignment_lp",
    "hungarian",
    "brute_force_assignment",
    "assignment_cost",
    "lex_perturb",
    "perturbation_vector",
    "OPTIMAL",
    "INFEASIBLE",
    "UNBOUNDED",
]

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

_TOL = 1e-9
_PHASE1_TOL = 1e-7
_BLAND_AFTER = 50
_MAX_ITER = 50000


@dataclass(frozen=True)
class StandardLP:
    """min c'x subject to Ax = b, x >= 0 (dense, m rows by n columns)."""

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.asarray(self.b, dtype=float).ravel()
        c = np.asarray(self.c, dtype=float).ravel()
        if A.shape != (b.shape[0], c.shape[0]):
            raise LpError(
                "inconsistent shapes: A %s, b %s, c %s" % (A.shape, b.shape, c.shape)
            )
        if A.shape[0] < 1 or A.shape[1] < 1:
            raise LpError("empty LP")
        for name, arr in (("A", A), ("b", b), ("c", c)):
            if not np.all(np.isfinite(arr)):
                raise LpError("%s contains NaN or inf" % name)
        for name, arr in (("A", A), ("b", b), ("c", c)):
            arr.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]


@dataclass
class LpSolution:
    """Solver output.

    ``basis`` lists the basic column indices in row order; ``y`` are the
    duals of the final basis (aligned with the rows actually used, see
    ``kept_rows`` when redundant rows were dropped in phase 1).
    """

    status: str
    x: np.ndarray | None = None
    objective: float | None = None
    basis: list[int] = field(default_factory=list)
    y: np.ndarray | None = None
    kept_rows: list[int] | None = None
    iterations: int = 0


def _simplex(A, b, c, basis, *, bland_after=_BLAND_AFTER, max_iter=_MAX_ITER):
    """Revised simplex from a feasible basis. Returns (basis, xB, status, iters)."""
    m, n = A.shape
    basis = list(basis)
    stall = 0
    for it in range(max_iter):
        B = A[:, basis]
        try:
            xB = np.linalg.solve(B, b)
            y = np.linalg.solve(B.T, c[basis])
        except np.linalg.LinAlgError as exc:
            raise LpError("singular basis during simplex") from exc
        rc = c - y @ A
        rc[basis] = 0.0
        if stall >= bland_after:
            neg = np.flatnonzero(rc < -_TOL)
            enter = int(neg[0]) if neg.size else -1
        else:
            enter = int(np.argmin(rc))
            if rc[enter] >= -_TOL:
                enter = -1
        if enter < 0:
            return basis, xB, OPTIMAL, it
        d = np.linalg.solve(B, A[:, enter])
        pos = d > _TOL
        if not pos.any():
            return basis, xB, UNBOUNDED, it
        safe_xb = np.maximum(xB, 0.0)
        ratios = np.full(m, np.inf)
        ratios[pos] = safe_xb[pos] / d[pos]
        rmin = float(ratios.min())
        ties = np.flatnonzero(ratios <= rmin + _TOL * (1.0 + abs(rmin)))
        leave_row = min(ties, key=lambda r: basis[r])
        stall = stall + 1 if rmin <= _TOL else 0
        basis[leave_row] = enter
    raise LpError("simplex exceeded %d iterations" % max_iter)


def simplex_from_basis(A, b, c, basis, **kw):
    """Phase-2 entry point when a feasible starting basis is already known.

    Returns (basis, x, objective, status). Used by the distributed
    assignment protocol, whose restricted problems always carry a feasible
    warm start.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    final, xB, status, _ = _simplex(A, b, c, list(basis), **kw)
    x = np.zeros(A.shape[1])
    x[final] = np.maximum(xB, 0.0)
    return final, x, float(c @ x), status


def solve_lp(problem: StandardLP, *, exact: bool = False) -> LpSolution:
    """Two-phase revised simplex.

    Phase 1 minimizes artificial infeasibility from the all-artificial
    basis; redundant rows discovered there are dropped before phase 2.
    ``exact=True`` reruns the identical pivot rules in rational arithmetic.
    """
    if exact:
        return _solve_lp_exact(problem)

    A = problem.A.copy()
    b = problem.b.copy()
    c = problem.c.copy()
    m, n = A.shape
    flip = b < 0
    A[flip] *= -1.0
    b[flip] *= -1.0

    A1 = np.hstack([A, np.eye(m)])
    c1 = np.concatenate([np.zeros(n), np.ones(m)])
    basis = list(range(n, n + m))
    basis, xB, status, it1 = _simplex(A1, b, c1, basis)
    if status != OPTIMAL:
        raise LpError("phase 1 ended %s, which should be impossible" % status)
    if float(c1[basis] @ xB) > _PHASE1_TOL:
        return LpSolution(status=INFEASIBLE, iterations=it1)

    # Drive leftover artificials out of the basis; a row where that is
    # impossible is linearly dependent and gets dropped.
    kept = list(range(m))
    drop_rows = []
    B = A1[:, basis]
    for row, col in enumerate(basis):
        if col < n:
            continue
        u = np.linalg.solve(B.T, np.eye(m)[row])
        coeffs = u @ A
        cands = np.flatnonzero((np.abs(coeffs) > 1e-7) & ~np.isin(np.arange(n), basis))
        if cands.size:
            basis[row] = int(cands[0])
            B = A1[:, basis]
        else:
            drop_rows.append(row)
    if drop_rows:
        keep_mask = np.ones(m, dtype=bool)
        keep_mask[drop_rows] = False
        A = A[keep_mask]
        b = b[keep_mask]
        kept = [r for r in kept if keep_mask[r]]
        basis = [basis[r] for r in range(m) if keep_mask[r]]
        m = A.shape[0]

    basis, xB, status, it2 = _simplex(A, b, c, basis)
    iters = it1 + it2
    if status == UNBOUNDED:
        return LpSolution(status=UNBOUNDED, basis=basis, iterations=iters)
    x = np.zeros(n)
    x[basis] = np.maximum(xB, 0.0)
    y = np.linalg.solve(A[:, basis].T, c[basis])
    # express the duals against the caller's row orientation, not the
    # sign-normalized one used internally
    y[flip[kept]] *= -1.0
    return LpSolution(
        status=OPTIMAL,
        x=x,
        objective=float(c @ x),
        basis=basis,
        y=y,
        kept_rows=kept if drop_rows else None,
        iterations=iters,
    )


# -- exact-arithmetic twin ---------------------------------------------------


def _frac_solve(B, rhs):
    """Gaussian elimination over Fractions; B is a list-of-rows square matrix."""
    m = len(B)
    M = [row[:] + [rhs[i]] for i, row in enumerate(B)]
    for col in range(m):
        piv = next((r for r in range(col, m) if M[r][col] != 0), None)
        if piv is None:
            raise LpError("singular basis in exact simplex")
        M[col], M[piv] = M[piv], M[col]
        inv = Fraction(1, 1) / M[col][col]
        M[col] = [v * inv for v in M[col]]
        for r in range(m):
            if r != col and M[r][col] != 0:
                f = M[r][col]
                M[r] = [a - f * bb for a, bb in zip(M[r], M[col])]
    return [M[r][m] for r in range(m)]


def _simplex_exact(A, b, c, basis, *, bland_after=_BLAND_AFTER, max_iter=_MAX_ITER):
    m = len(A)
    n = len(A[0])
    basis = list(basis)
    zero = Fraction(0)
    stall = 0
    cols = [[A[r][j] for r in range(m)] for j in range(n)]
    for it in range(max_iter):
        Bmat = [[A[r][j] for j in basis] for r in range(m)]
        xB = _frac_solve(Bmat, b)
        Bt = [[Bmat[r][k] for r in range(m)] for k in range(m)]
        y = _frac_solve(Bt, [c[j] for j in basis])
        in_basis = set(basis)
        enter = -1
        if stall >= bland_after:
            for j in range(n):
                if j in in_basis:
                    continue
                if c[j] - sum(y[r] * cols[j][r] for r in range(m)) < zero:
                    enter = j
                    break
        else:
            best = zero
            for j in range(n):
                if j in in_basis:
                    continue
                rc = c[j] - sum(y[r] * cols[j][r] for r in range(m))
                if rc < best:
                    best = rc
                    enter = j
        if enter < 0:
            return basis, xB, OPTIMAL, it
        d = _frac_solve(Bmat, cols[enter])
        ratios = [(xB[r] / d[r], r) for r in range(m) if d[r] > zero]
        if not ratios:
            return basis, xB, UNBOUNDED, it
        rmin = min(q for q, _ in ratios)
        leave_row = min((r for q, r in ratios if q == rmin), key=lambda r: basis[r])
        stall = stall + 1 if rmin == zero else 0
        basis[leave_row] = enter
    raise LpError("exact simplex exceeded %d iterations" % max_iter)


def _solve_lp_exact(problem: StandardLP) -> LpSolution:
    m, n = problem.m, problem.n
    A = [[Fraction(x) for x in row] for row in problem.A]
    b = [Fraction(x) for x in problem.b]
    c = [Fraction(x) for x in problem.c]
    for r in range(m):
        if b[r] < 0:
            A[r] = [-v for v in A[r]]
            b[r] = -b[r]
    A1 = [row + [Fraction(1 if i == r else 0) for i in range(m)] for r, row in enumerate(A)]
    c1 = [Fraction(0)] * n + [Fraction(1)] * m
    basis, xB, status, it1 = _simplex_exact(A1, b, c1, list(range(n, n + m)))
    if sum(c1[j] * xB[r] for r, j in enumerate(basis)) > 0:
        return LpSolution(status=INFEASIBLE, iterations=it1)
    if any(j >= n for j in basis):
        # Fall back to the numeric path's row handling only when needed; the
        # exact mode serves small test problems with full row rank.
        raise LpError("exact mode requires full row rank after phase 1")
    basis, xB, status, it2 = _simplex_exact(A, b, c, basis)
    if status == UNBOUNDED:
        return LpSolution(status=UNBOUNDED, basis=basis, iterations=it1 + it2)
    x = np.zeros(n)
    for r, j in enumerate(basis):
        x[j] = float(xB[r])
    obj = sum(c[j] * xB[r] for r, j in enumerate(basis))
    return LpSolution(
        status=OPTIMAL,
        x=x,
        objective=float(obj),
        basis=basis,
        iterations=it1 + it2,
    )


# -- assignment problems -----------------------------------------------------


@dataclass(frozen=True)
class AssignmentProblem:
    """n robots, n tasks, square cost matrix."""

    n: int
    cost: np.ndarray

    def __post_init__(self):
        cost = np.asarray(self.cost, dtype=float)
        if cost.shape != (self.n, self.n):
            raise LpError("cost shape %s does not match n=%d" % (cost.shape, self.n))
        if not np.all(np.isfinite(cost)):
            raise LpError("cost matrix contains NaN or inf")
        cost = cost.copy()
        cost.setflags(write=False)
        object.__setattr__(self, "cost", cost)


def assignment_column(i: int, k: int, n: int) -> np.ndarray:
    """Constraint column for decision variable x_ik under the dropped-row
    convention: rows are n robot equations then the first n-1 task
    equations (the last task row is redundant and omitted)."""
    a = np.zeros(2 * n - 1)
    a[i] = 1.0
    if k < n - 1:
        a[n + k] = 1.0
    return a


def build_assignment_lp(p: AssignmentProblem) -> StandardLP:
    """Encode the assignment problem in standard form with full row rank.

    Variables x_ik are flattened as j = i*n + k. The constraint matrix is
    totally unimodular, so every basic solution (and hence every optimum
    found by the simplex) is integral.
    """
    n = p.n
    m = 2 * n - 1
    A = np.zeros((m, n * n))
    for i in range(n):
        for k in range(n):
            A[:, i * n + k] = assignment_column(i, k, n)
    return StandardLP(A=A, b=np.ones(m), c=p.cost.ravel().copy())


def assignment_cost(perm, cost: np.ndarray) -> float:
    """Cost of assigning robot i to task perm[i]; the one summation used by
    every route so exact comparisons are apples to apples."""
    total = 0.0
    for i, k in enumerate(perm):
        total += float(cost[i, k])
    return total


def hungarian(p: AssignmentProblem) -> tuple[tuple[int, ...], float]:
    """Optimal assignment oracle, O(n^3). Returns (perm, objective)."""
    rows, cols = linear_sum_assignment(p.cost)
    perm = tuple(int(c) for c in cols[np.argsort(rows)])
    return perm, assignment_cost(perm, p.cost)


def brute_force_assignment(cost: np.ndarray) -> tuple[tuple[int, ...], float]:
    """Exhaustive n! search; test oracle for the oracle."""
    n = cost.shape[0]
    best_perm = None
    best = np.inf
    for perm in permutations(range(n)):
        v = assignment_cost(perm, cost)
        if v < best:
            best = v
            best_perm = perm
    return best_perm, best


def perturbation_vector(n_cols: int, eps: float = 1e-7, ratio: float = 0.5) -> np.ndarray:
    """Geometric tie-breaking offsets delta_j = eps * ratio**j.

    With ratio 1/2 the offsets behave like binary digits: no two distinct
    column subsets of equal size share a perturbation sum, so cost ties
    between assignments break deterministically (down to float resolution;
    beyond ~50 columns the tail vanishes into rounding and tie-breaking
    falls back to the solver's lowest-index pivot rules).
    """
    if eps == 0.0:
        return np.zeros(n_cols)
    return eps * np.power(float(ratio), np.arange(n_cols))


def lex_perturb(lp: StandardLP, eps: float = 1e-7, ratio: float = 0.5) -> StandardLP:
    """Return a copy of ``lp`` with the geometric perturbation added to c.

    eps=0 returns an identical problem. The argmin of the perturbed
    problem is an argmin of the original whenever eps is below the
    smallest nonzero objective gap between vertices.
    """
    delta = perturbation_vector(lp.n, eps=eps, ratio=ratio)
    return StandardLP(A=lp.A.copy(), b=lp.b.copy(), c=lp.c + delta)


# -- small builder for structured LPs ---------------------------------------


class LpBuilder:
    """Assemble min-cost LPs from free/nonnegative variables and eq/le rows.

    Free variables are split into positive and negative parts; inequality
    rows get slack columns. ``build`` returns the StandardLP plus an
    extractor mapping a standard-form solution back to the declared
    variables.
    """

    def __init__(self):
        self._vars = []  # (kind, size)
        self._rows = []  # (kind, {var_index: coeff_array}, rhs)
        self._cost = {}  # var_index -> array

    def add_var(self, size: int, free: bool = True) -> int:
        self._vars.append(("free" if free else "nonneg", int(size)))
        return len(self._vars) - 1

    def add_eq(self, coeffs: dict[int, np.ndarray], rhs: float) -> None:
        self._rows.append(("eq", {k: np.asarray(v, dtype=float) for k, v in coeffs.items()}, float(rhs)))

    def add_le(self, coeffs: dict[int, np.ndarray], rhs: float) -> None:
        self._rows.append(("le", {k: np.asarray(v, dtype=float) for k, v in coeffs.items()}, float(rhs)))

    def add_cost(self, var: int, weights) -> None:
        w = np.asarray(weights, dtype=float)
        self._cost[var] = self._cost.get(var, 0) + w

    def build(self) -> tuple[StandardLP, "LpExtract"]:
        offsets = []
        ncols = 0
        for kind, size in self._vars:
            offsets.append((kind, ncols, size))
            ncols += 2 * size if kind == "free" else size
        nslack = sum(1 for kind, _, _ in self._rows if kind == "le")
        total = ncols + nslack
        A = np.zeros((len(self._rows), total))
        b = np.zeros(len(self._rows))
        c = np.zeros(total)
        slack_at = ncols
        for r, (kind, coeffs, rhs) in enumerate(self._rows):
            for var, coef in coeffs.items():
                vkind, off, size = offsets[var]
                coef = np.broadcast_to(coef, (size,))
                A[r, off : off + size] += coef
                if vkind == "free":
                    A[r, off + size : off + 2 * size] -= coef
            b[r] = rhs
            if kind == "le":
                A[r, slack_at] = 1.0
                slack_at += 1
        for var, w in self._cost.items():
            vkind, off, size = offsets[var]
            w = np.broadcast_to(w, (size,))
            c[off : off + size] += w
            if vkind == "free":
                c[off + size : off + 2 * size] -= w
        return StandardLP(A=A, b=b, c=c), LpExtract(offsets)


class LpExtract:
    def __init__(self, offsets):
        self._offsets = offsets

    def value(self, x: np.ndarray, var: int) -> np.ndarray:
        kind, off, size = self._offsets[var]
        if kind == "free":
            return x[off : off + size] - x[off + size : off + 2 * size]
        return x[off : off + size].copy()
