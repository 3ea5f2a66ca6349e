from .lp import LpProblem, LpSolution, solve_lp
from .qp import NotPositiveSemidefinite, QpSolution, solve_qp
from .subgradient import SolverError, SubgradientConfig, SubgradientResult, minimize_subgradient

__all__ = [
    "LpProblem",
    "LpSolution",
    "solve_lp",
    "NotPositiveSemidefinite",
    "QpSolution",
    "solve_qp",
    "SolverError",
    "SubgradientConfig",
    "SubgradientResult",
    "minimize_subgradient",
]
