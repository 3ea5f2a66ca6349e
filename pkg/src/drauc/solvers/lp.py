"""Dense two-phase tableau simplex with Bland's anti-cycling rule.

Meant for verification-scale problems (a few hundred rows). After the
tableau terminates, primal and dual values are recomputed from the final
basis with fresh linear solves and the KKT residuals are checked, so a
numerically drifted tableau surfaces as status ``numerical_error`` rather
than a silently wrong answer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

_PIVOT_TOL = 1e-10
_KKT_TOL = 1e-8


@dataclass
class LpProblem:
    """``min`` (or ``max``) c.x subject to A x (<= | =) b and x >= lower.

    ``senses`` holds ``"<="`` or ``"="`` per row; a lower bound of ``-inf``
    makes the variable free.
    """

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    senses: Sequence[str]
    lower: Optional[np.ndarray] = None
    maximize: bool = False

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.asarray(self.b, dtype=float).ravel()
        n = self.c.size
        if self.A.size == 0:
            self.A = self.A.reshape(0, n)
        m = self.A.shape[0]
        if self.A.shape != (m, n) or self.b.size != m or len(self.senses) != m:
            raise ValueError(
                f"inconsistent LP dimensions: c {self.c.shape}, A {self.A.shape}, "
                f"b {self.b.shape}, {len(self.senses)} senses"
            )
        bad = [s for s in self.senses if s not in ("<=", "=")]
        if bad:
            raise ValueError(f"row senses must be '<=' or '=', got {bad[0]!r}")
        self.senses = list(self.senses)
        self.lower = np.zeros(n) if self.lower is None else np.asarray(self.lower, dtype=float).ravel()
        if self.lower.size != n:
            raise ValueError("lower bounds length differs from number of variables")
        if np.any(self.lower == np.inf):
            raise ValueError("lower bounds cannot be +inf")
        for name in ("c", "A", "b"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"LP data {name} contains non-finite values")


@dataclass
class LpSolution:
    status: str  # optimal | infeasible | unbounded | numerical_error
    x: Optional[np.ndarray] = None
    duals: Optional[np.ndarray] = None
    value: Optional[float] = None
    dual_value: Optional[float] = None
    residuals: dict = field(default_factory=dict)
    n_pivots: int = 0


class _Unbounded(Exception):
    pass


def _pivot(T: np.ndarray, r: int, c: int) -> None:
    T[r] /= T[r, c]
    col = T[:, c].copy()
    col[r] = 0.0
    nz = np.flatnonzero(np.abs(col) > 0)
    if nz.size:
        T[nz] -= np.outer(col[nz], T[r])


def _run_simplex(T: np.ndarray, basis: list[int], allowed: np.ndarray, max_pivots: int) -> int:
    """Bland's rule on tableau ``T`` whose last row is the reduced-cost row
    (minimization, entries ``c_j - z_j``) and last column the right-hand side."""
    m = T.shape[0] - 1
    pivots = 0
    while True:
        reduced = T[-1, :-1]
        cand = np.flatnonzero((reduced < -_PIVOT_TOL) & allowed)
        if cand.size == 0:
            return pivots
        e = int(cand[0])
        colv = T[:m, e]
        rows = np.flatnonzero(colv > _PIVOT_TOL)
        if rows.size == 0:
            raise _Unbounded
        ratios = T[rows, -1] / colv[rows]
        best = ratios.min()
        ties = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
        r = int(min(ties, key=lambda i: basis[i]))
        _pivot(T, r, e)
        basis[r] = e
        pivots += 1
        if pivots > max_pivots:
            raise RuntimeError("simplex pivot limit reached")


def solve_lp(problem: LpProblem, max_pivots: int = 200_000) -> LpSolution:
    p = problem
    m, n = p.A.shape
    sign = -1.0 if p.maximize else 1.0
    c_min = sign * p.c

    # shift finite lower bounds to zero, split free variables as x = u - v
    finite = np.isfinite(p.lower)
    shift = np.where(finite, p.lower, 0.0)
    b0 = p.b - p.A @ shift
    free_idx = np.flatnonzero(~finite)
    cols = [p.A, -p.A[:, free_idx]]
    cost = [c_min, -c_min[free_idx]]
    ineq = [i for i, s in enumerate(p.senses) if s == "<="]
    slack = np.zeros((m, len(ineq)))
    for k, i in enumerate(ineq):
        slack[i, k] = 1.0
    cols.append(slack)
    cost.append(np.zeros(len(ineq)))
    A_std = np.hstack(cols)
    c_std = np.concatenate(cost)
    b_std = b0.copy()
    row_flip = np.where(b_std < 0, -1.0, 1.0)
    A_std *= row_flip[:, None]
    b_std *= row_flip
    n_std = A_std.shape[1]
    n_struct = n + free_idx.size

    # initial basis: slacks with +1 coefficient where possible, artificials elsewhere
    basis: list[int] = []
    art_rows = []
    slack_of_row = {i: n_struct + k for k, i in enumerate(ineq)}
    for i in range(m):
        s = slack_of_row.get(i)
        if s is not None and row_flip[i] > 0:
            basis.append(s)
        else:
            basis.append(-1)
            art_rows.append(i)
    n_art = len(art_rows)
    T = np.zeros((m + 1, n_std + n_art + 1))
    T[:m, :n_std] = A_std
    T[:m, -1] = b_std
    for k, i in enumerate(art_rows):
        T[i, n_std + k] = 1.0
        basis[i] = n_std + k
    pivots = 0

    if n_art:
        # phase 1: minimize the sum of artificials
        T[-1, :] = 0.0
        T[-1, n_std:n_std + n_art] = 1.0
        for i in art_rows:
            T[-1] -= T[i]
        allowed = np.ones(n_std + n_art, dtype=bool)
        pivots += _run_simplex(T, basis, allowed, max_pivots)
        if -T[-1, -1] > 1e-9 * max(1.0, np.abs(b_std).max(initial=0.0)):
            return LpSolution("infeasible", n_pivots=pivots)
        # drive remaining artificials out of the basis; drop redundant rows
        keep = np.ones(m, dtype=bool)
        for i in range(m):
            if basis[i] >= n_std:
                row = T[i, :n_std]
                cand = np.flatnonzero(np.abs(row) > 1e-9)
                if cand.size:
                    _pivot(T, i, int(cand[0]))
                    basis[i] = int(cand[0])
                    pivots += 1
                else:
                    keep[i] = False
        T = np.vstack([T[:m][keep], T[-1:]])
        basis = [bv for bv, k in zip(basis, keep) if k]
        T = np.delete(T, np.s_[n_std:n_std + n_art], axis=1)
    else:
        keep = np.ones(m, dtype=bool)

    # phase 2
    mk = T.shape[0] - 1
    T[-1, :] = 0.0
    T[-1, :n_std] = c_std
    for i in range(mk):
        T[-1] -= c_std[basis[i]] * T[i]
    try:
        pivots += _run_simplex(T, basis, np.ones(n_std, dtype=bool), max_pivots)
    except _Unbounded:
        return LpSolution("unbounded", n_pivots=pivots)

    # recompute from the basis for accuracy
    A_keep = A_std[keep]
    b_keep = b_std[keep]
    B = A_keep[:, basis]
    try:
        xb = np.linalg.solve(B, b_keep)
        y_keep = np.linalg.solve(B.T, c_std[basis])
    except np.linalg.LinAlgError:
        return LpSolution("numerical_error", n_pivots=pivots)
    z = np.zeros(n_std)
    z[basis] = xb
    z[np.abs(z) < 1e-13] = 0.0
    x = z[:n].copy()
    x[free_idx] -= z[n:n_struct]
    x += shift
    y = np.zeros(m)
    y[keep] = y_keep
    y *= row_flip  # duals of the original (unflipped) rows, minimization form

    sol = _finish(p, x, y, c_min, sign)
    sol.n_pivots = pivots
    return sol


def _finish(p: LpProblem, x, y, c_min, sign) -> LpSolution:
    A, b = p.A, p.b
    ineq = np.array([s == "<=" for s in p.senses], dtype=bool)
    finite = np.isfinite(p.lower)
    row_gap = b - A @ x  # >= 0 on inequality rows, 0 on equalities
    primal_res = max(
        np.max(-row_gap[ineq], initial=0.0),
        np.max(np.abs(row_gap[~ineq]), initial=0.0),
        np.max(p.lower[finite] - x[finite], initial=0.0),
    )
    # min-form dual: y <= 0 on <= rows, reduced costs r = c - A^T y,
    # r >= 0 on bounded variables, r = 0 on free ones
    r = c_min - A.T @ y
    dual_res = max(
        np.max(y[ineq], initial=0.0),
        np.max(-r[finite], initial=0.0),
        np.max(np.abs(r[~finite]), initial=0.0),
    )
    comp_res = max(
        np.max(np.abs(y[ineq] * row_gap[ineq]), initial=0.0),
        np.max(np.abs(r[finite] * (x[finite] - p.lower[finite])), initial=0.0),
    )
    value_min = float(c_min @ x)
    dual_min = float(b @ y + r[finite] @ p.lower[finite])
    res = {"primal": float(primal_res), "dual": float(dual_res), "complementarity": float(comp_res)}
    scale = 1.0 + max(np.abs(b).max(initial=0.0), np.abs(c_min).max(initial=0.0))
    status = "optimal" if max(res.values()) <= _KKT_TOL * scale else "numerical_error"
    return LpSolution(
        status,
        x=x,
        duals=sign * y,
        value=sign * value_min,
        dual_value=sign * dual_min,
        residuals=res,
    )
