"""Small dense convex QP: minimize 1/2 x'Qx + c'x subject to A x <= b.

Backed by cvxopt's interior-point ``coneqp``; the result is independently
checked against the KKT conditions before it is returned.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .subgradient import SolverError


class NotPositiveSemidefinite(ValueError):
    pass


class QpInfeasible(SolverError):
    pass


@dataclass
class QpSolution:
    x: np.ndarray
    value: float
    duals: np.ndarray
    residuals: dict = field(default_factory=dict)

    def __iter__(self):
        yield self.x
        yield self.value


def _check_psd(Q: np.ndarray, tol: float = 1e-9) -> None:
    if not np.allclose(Q, Q.T, atol=1e-12 * max(1.0, np.abs(Q).max(initial=0.0))):
        raise NotPositiveSemidefinite("Q is not symmetric")
    n = Q.shape[0]
    shift = tol * max(1.0, np.abs(Q).max(initial=0.0))
    try:
        np.linalg.cholesky(Q + shift * np.eye(n))
    except np.linalg.LinAlgError:
        raise NotPositiveSemidefinite("Q is not positive semidefinite") from None


def _feasible(A, b) -> bool:
    from .lp import LpProblem, solve_lp

    n = A.shape[1]
    sol = solve_lp(LpProblem(np.zeros(n), A, b, ["<="] * len(b), lower=np.full(n, -np.inf)))
    return sol.status == "optimal"


def solve_qp(Q, c, A=None, b=None, kkt_tol: float = 1e-6) -> QpSolution:
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    c = np.asarray(c, dtype=float).ravel()
    n = c.size
    if Q.shape != (n, n):
        raise ValueError(f"Q has shape {Q.shape}, expected ({n}, {n})")
    if A is None:
        A = np.zeros((0, n))
        b = np.zeros(0)
    A = np.asarray(A, dtype=float).reshape(-1, n)
    b = np.asarray(b, dtype=float).ravel()
    if A.shape[0] != b.size:
        raise ValueError("A and b row counts differ")
    _check_psd(Q)

    if A.shape[0] == 0:
        x, *_ = np.linalg.lstsq(Q, -c, rcond=None)
        z = np.zeros(0)
        if not np.allclose(Q @ x, -c, atol=kkt_tol):
            raise SolverError("unconstrained QP is unbounded below")
    else:
        import cvxopt
        from cvxopt import solvers

        opts = {"show_progress": False, "abstol": 1e-11, "reltol": 1e-11, "feastol": 1e-11, "maxiters": 200}
        try:
            res = solvers.qp(
                cvxopt.matrix(Q), cvxopt.matrix(c), cvxopt.matrix(A), cvxopt.matrix(b), options=opts
            )
        except (ValueError, ArithmeticError) as exc:
            # the interior-point iteration breaks down on empty feasible sets
            if not _feasible(A, b):
                raise QpInfeasible("QP constraints are infeasible") from None
            raise SolverError(f"QP solver failed: {exc}") from None
        if res["status"] in ("primal infeasible",):
            raise QpInfeasible("QP constraints are infeasible")
        if res["x"] is None:
            raise SolverError(f"QP solver failed with status {res['status']!r}")
        x = np.array(res["x"]).ravel()
        z = np.array(res["z"]).ravel()

    slack = b - A @ x
    res = {
        "stationarity": float(np.abs(Q @ x + c + A.T @ z).max(initial=0.0)),
        "primal": float(np.max(-slack, initial=0.0)),
        "dual": float(np.max(-z, initial=0.0)),
        "complementarity": float(np.abs(z * slack).max(initial=0.0)),
    }
    if max(res.values()) > kkt_tol:
        if res["primal"] > 1e-4:
            raise QpInfeasible(f"QP appears infeasible (residuals {res})")
        raise SolverError(f"QP solution fails KKT check: {res}")
    value = float(0.5 * x @ Q @ x + c @ x)
    return QpSolution(x, value, z, res)
