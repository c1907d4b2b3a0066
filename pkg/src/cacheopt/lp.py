"""Dense two-phase simplex solver.

Small, deterministic, dependency-free (numpy only).  The linear programs in
this package have at most a few thousand rows, are often heavily degenerate
(many symmetric files produce identical coefficients), and must solve
bit-reproducibly, so a dense tableau simplex with a fixed pivot rule is the
right tool.  Dantzig pricing is used until a degeneracy stall is detected,
after which Bland's rule guarantees termination.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

PIVOT_TOL = 1e-10
FEAS_TOL = 1e-9
DEGENERATE_STALL = 50
MAX_ITERATIONS = 500_000


class SizeGuardError(RuntimeError):
    """A problem exceeds the desk-scale enumeration guards."""


@dataclass(frozen=True)
class LpProblem:
    """min objective @ x  s.t.  eq_lhs x = eq_rhs, ub_lhs x <= ub_rhs, x >= lower_bounds.

    Empty constraint blocks are passed as None.  ``lower_bounds`` defaults to
    zero for every variable.
    """

    objective: np.ndarray
    eq_lhs: np.ndarray | None = None
    eq_rhs: np.ndarray | None = None
    ub_lhs: np.ndarray | None = None
    ub_rhs: np.ndarray | None = None
    lower_bounds: np.ndarray | None = None
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=float)
        object.__setattr__(self, "objective", c)
        n = c.shape[0]
        for lhs_name, rhs_name in (("eq_lhs", "eq_rhs"), ("ub_lhs", "ub_rhs")):
            lhs, rhs = getattr(self, lhs_name), getattr(self, rhs_name)
            if (lhs is None) != (rhs is None):
                raise ValueError(f"{lhs_name} and {rhs_name} must be given together")
            if lhs is None:
                continue
            lhs = np.atleast_2d(np.asarray(lhs, dtype=float))
            rhs = np.asarray(rhs, dtype=float).ravel()
            if lhs.shape != (rhs.shape[0], n):
                raise ValueError(f"{lhs_name} has shape {lhs.shape}, expected ({rhs.shape[0]}, {n})")
            object.__setattr__(self, lhs_name, lhs)
            object.__setattr__(self, rhs_name, rhs)
        if self.lower_bounds is not None:
            lb = np.asarray(self.lower_bounds, dtype=float).ravel()
            if lb.shape[0] != n:
                raise ValueError("lower_bounds length mismatch")
            object.__setattr__(self, "lower_bounds", lb)
        if self.names is not None and len(self.names) != n:
            raise ValueError("names length mismatch")
        for arr in (self.objective, self.eq_lhs, self.eq_rhs, self.ub_lhs,
                    self.ub_rhs, self.lower_bounds):
            if arr is not None and not np.all(np.isfinite(arr)):
                raise ValueError("non-finite coefficient in problem")

    @property
    def n_vars(self) -> int:
        return self.objective.shape[0]


@dataclass(frozen=True)
class LpSolution:
    status: str  # 'optimal' | 'infeasible' | 'unbounded'
    x: np.ndarray | None
    value: float | None
    iterations: int
    duals_eq: np.ndarray | None = None
    duals_ub: np.ndarray | None = None

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def _dedupe_rows(lhs: np.ndarray, rhs: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Drop exactly duplicated (lhs, rhs) rows, keeping first occurrences.

    Returns (lhs, rhs, keep_index) where keep_index maps retained rows back to
    the original row numbers.
    """
    if lhs.shape[0] == 0:
        return lhs, rhs, np.arange(0)
    stacked = np.ascontiguousarray(np.hstack([lhs, rhs[:, None]]))
    seen: dict[bytes, int] = {}
    keep = []
    for i in range(stacked.shape[0]):
        key = stacked[i].tobytes()
        if key not in seen:
            seen[key] = i
            keep.append(i)
    keep_idx = np.array(keep, dtype=int)
    return lhs[keep_idx], rhs[keep_idx], keep_idx


class _Tableau:
    """Full-tableau simplex state: rows = constraints, last row = reduced costs."""

    def __init__(self, body: np.ndarray, rhs: np.ndarray, basis: list[int]):
        m, _ = body.shape
        self.T = np.hstack([body, rhs[:, None]])
        self.basis = basis
        self.m = m
        self.iterations = 0
        self.cost = np.zeros(self.T.shape[1])

    def set_objective(self, costs: np.ndarray):
        """Install reduced-cost row for the given variable costs."""
        self.cost = np.append(costs.astype(float), 0.0)
        for r, j in enumerate(self.basis):
            cj = self.cost[j]
            if cj != 0.0:
                self.cost -= cj * self.T[r]

    def pivot(self, row: int, col: int):
        T = self.T
        piv = T[row, col]
        T[row] = T[row] / piv
        colvals = T[:, col].copy()
        colvals[row] = 0.0
        T -= np.outer(colvals, T[row])
        ccoef = self.cost[col]
        if ccoef != 0.0:
            self.cost -= ccoef * T[row]
        self.basis[row] = col
        self.iterations += 1

    def run(self, eligible: np.ndarray) -> str:
        """Iterate to optimality over the columns marked eligible to enter.

        Dantzig pricing with a largest-pivot ratio tie-break; after
        DEGENERATE_STALL consecutive degenerate pivots, Bland's rule takes
        over until the objective moves again (each degenerate plateau is left
        in finitely many Bland pivots, and the objective strictly decreases
        between plateaus, so the method terminates).
        """
        stall = 0
        bland = False
        while True:
            if self.iterations > MAX_ITERATIONS:
                raise RuntimeError("simplex iteration limit exceeded")
            red = self.cost[:-1]
            cand = np.where(eligible & (red < -PIVOT_TOL))[0]
            if cand.size == 0:
                return "optimal"
            if bland:
                col = int(cand[0])
            else:
                col = int(cand[np.argmin(red[cand])])
            colvals = self.T[:, col]
            rows = np.where(colvals > PIVOT_TOL)[0]
            if rows.size == 0:
                return "unbounded"
            ratios = self.T[rows, -1] / colvals[rows]
            best = np.min(ratios)
            tied = rows[ratios <= best + 1e-12]
            if bland:
                # leave by smallest basis variable index among ties
                row = int(tied[np.argmin([self.basis[r] for r in tied])])
            else:
                row = int(tied[np.argmax(colvals[tied])])
            degenerate = self.T[row, -1] <= PIVOT_TOL
            self.pivot(row, col)
            if degenerate:
                stall += 1
                if stall >= DEGENERATE_STALL:
                    bland = True
            else:
                stall = 0
                bland = False


def solve(problem: LpProblem) -> LpSolution:
    """Solve an LpProblem with the two-phase simplex.

    Infeasible and unbounded problems are reported through ``status``; only
    malformed input or an internal failure raises.
    """
    n = problem.n_vars
    c = problem.objective.copy()

    shift = None
    if problem.lower_bounds is not None and np.any(problem.lower_bounds != 0.0):
        shift = problem.lower_bounds

    a_eq = problem.eq_lhs if problem.eq_lhs is not None else np.zeros((0, n))
    b_eq = problem.eq_rhs if problem.eq_rhs is not None else np.zeros(0)
    a_ub = problem.ub_lhs if problem.ub_lhs is not None else np.zeros((0, n))
    b_ub = problem.ub_rhs if problem.ub_rhs is not None else np.zeros(0)

    if shift is not None:
        b_eq = b_eq - a_eq @ shift
        b_ub = b_ub - a_ub @ shift

    a_ub, b_ub, ub_keep = _dedupe_rows(a_ub, b_ub)
    m_eq, m_ub = a_eq.shape[0], a_ub.shape[0]
    m = m_eq + m_ub

    # standard form: [x | slacks]; rows flipped so every rhs is nonnegative
    A = np.vstack([a_eq, a_ub]) if m else np.zeros((0, n))
    b = np.concatenate([b_eq, b_ub])
    row_sign = np.ones(m)
    neg = b < 0
    row_sign[neg] = -1.0
    A = A * row_sign[:, None]
    b = b * row_sign

    slack = np.zeros((m, m_ub))
    for i in range(m_ub):
        slack[m_eq + i, i] = row_sign[m_eq + i]
    body = np.hstack([A, slack])
    n_total = n + m_ub

    basis: list[int] = [-1] * m
    art_cols: list[int] = []
    art_rows: list[int] = []
    for i in range(m):
        if i >= m_eq and slack[i, i - m_eq] > 0:
            basis[i] = n + (i - m_eq)
        else:
            art_rows.append(i)
    if art_rows:
        art = np.zeros((m, len(art_rows)))
        for j, i in enumerate(art_rows):
            art[i, j] = 1.0
            basis[i] = n_total + j
            art_cols.append(n_total + j)
        body = np.hstack([body, art])

    tab = _Tableau(body, b, basis)
    n_cols = body.shape[1]
    is_art = np.zeros(n_cols, dtype=bool)
    is_art[art_cols] = True

    # phase 1: drive out artificials
    if art_cols:
        phase1 = np.zeros(n_cols)
        phase1[art_cols] = 1.0
        tab.set_objective(phase1)
        status = tab.run(eligible=~is_art)
        if status != "optimal" or -tab.cost[-1] > FEAS_TOL:
            return LpSolution("infeasible", None, None, tab.iterations)
        # pivot residual artificials out, dropping redundant rows
        drop_rows = []
        for r in range(tab.m):
            if is_art[tab.basis[r]]:
                row = tab.T[r, :-1]
                nz = np.where((~is_art) & (np.abs(row) > PIVOT_TOL))[0]
                if nz.size:
                    tab.pivot(r, int(nz[0]))
                else:
                    drop_rows.append(r)
        if drop_rows:
            keep = [r for r in range(tab.m) if r not in drop_rows]
            tab.T = tab.T[keep]
            tab.basis = [tab.basis[r] for r in keep]
            tab.m = len(keep)

    # phase 2
    costs = np.zeros(n_cols)
    costs[:n] = c
    tab.set_objective(costs)
    status = tab.run(eligible=~is_art)
    if status == "unbounded":
        return LpSolution("unbounded", None, None, tab.iterations)

    x = np.zeros(n_total)
    for r, j in enumerate(tab.basis):
        if j < n_total:
            x[j] = tab.T[r, -1]
    xvars = x[:n]
    if shift is not None:
        xvars = xvars + shift
    value = float(problem.objective @ xvars)

    duals_eq, duals_ub = _recover_duals(
        problem, body, costs, tab, row_sign, m_eq, m_ub, ub_keep
    )
    return LpSolution("optimal", xvars, value, tab.iterations, duals_eq, duals_ub)


def _recover_duals(problem, body, costs, tab, row_sign, m_eq, m_ub, ub_keep):
    """Row prices y with B^T y = c_B, mapped back to the caller's rows."""
    # needs the full original row set; skipped when redundant rows were dropped
    if tab.m != row_sign.shape[0]:
        return None, None
    cols = body[:, tab.basis]
    try:
        y = np.linalg.solve(cols.T, costs[tab.basis])
    except np.linalg.LinAlgError:
        return None, None
    y = y * row_sign
    duals_eq = y[:m_eq] if m_eq else None
    if m_ub:
        n_orig = problem.ub_rhs.shape[0]
        full = np.zeros(n_orig)
        full[ub_keep] = y[m_eq:]
        duals_ub = full
    else:
        duals_ub = None
    return duals_eq, duals_ub


def solve_via_dual(problem: LpProblem) -> LpSolution:
    """Solve by pivoting on the explicit dual; intended for tall problems.

    The epigraph bound programs have far more rows than columns, which makes
    the primal tableau needlessly large.  The dual has one row per primal
    variable; its constraint prices recover a primal optimum.  Falls back to
    the direct solve if the recovered point fails a feasibility check.
    """
    if problem.lower_bounds is not None and np.any(problem.lower_bounds != 0.0):
        return solve(problem)

    n = problem.n_vars
    a_eq = problem.eq_lhs if problem.eq_lhs is not None else np.zeros((0, n))
    b_eq = problem.eq_rhs if problem.eq_rhs is not None else np.zeros(0)
    a_ub = problem.ub_lhs if problem.ub_lhs is not None else np.zeros((0, n))
    b_ub = problem.ub_rhs if problem.ub_rhs is not None else np.zeros(0)
    m_eq, m_ub = a_eq.shape[0], a_ub.shape[0]

    # max b_eq'mu + b_ub'lam  s.t. A_eq'mu + A_ub'lam <= c, lam <= 0
    # with mu = mu+ - mu-, lam = -lhat, written as a min problem:
    dual_c = np.concatenate([-b_eq, b_eq, b_ub])
    dual_lhs = np.hstack([a_eq.T, -a_eq.T, -a_ub.T])
    dual_rhs = problem.objective.copy()
    dual = LpProblem(objective=dual_c, ub_lhs=dual_lhs, ub_rhs=dual_rhs)
    sol = solve(dual)
    if sol.status == "infeasible":
        return LpSolution("unbounded", None, None, sol.iterations)
    if sol.status == "unbounded":
        return LpSolution("infeasible", None, None, sol.iterations)
    if sol.duals_ub is None:
        return solve(problem)

    x = -sol.duals_ub
    resid_ok = (
        np.all(x >= -FEAS_TOL)
        and (m_eq == 0 or np.max(np.abs(a_eq @ x - b_eq)) <= FEAS_TOL)
        and (m_ub == 0 or np.max(a_ub @ x - b_ub) <= FEAS_TOL)
    )
    value = float(problem.objective @ x)
    if not resid_ok or abs(value - (-sol.value)) > 1e-6 * (1.0 + abs(value)):
        return solve(problem)

    z = sol.x
    duals_eq = z[:m_eq] - z[m_eq:2 * m_eq] if m_eq else None
    duals_ub = -z[2 * m_eq:] if m_ub else None
    return LpSolution("optimal", x, value, sol.iterations, duals_eq, duals_ub)


def dump(problem: LpProblem) -> str:
    """Human-readable text layout of a problem, for debugging only."""
    names = problem.names or tuple(f"x{j}" for j in range(problem.n_vars))

    def term(coef, j):
        return f"{coef:+g} {names[j]}"

    def row(coefs):
        parts = [term(v, j) for j, v in enumerate(coefs) if v != 0.0]
        return " ".join(parts) if parts else "0"

    out = io.StringIO()
    out.write("minimize\n  " + row(problem.objective) + "\n")
    out.write("subject to\n")
    if problem.eq_lhs is not None:
        for lhs, rhs in zip(problem.eq_lhs, problem.eq_rhs):
            out.write(f"  {row(lhs)} = {rhs:g}\n")
    if problem.ub_lhs is not None:
        for lhs, rhs in zip(problem.ub_lhs, problem.ub_rhs):
            out.write(f"  {row(lhs)} <= {rhs:g}\n")
    lb = problem.lower_bounds
    if lb is None:
        out.write("  x >= 0\n")
    else:
        out.write("  x >= [" + ", ".join(f"{v:g}" for v in lb) + "]\n")
    return out.getvalue()
