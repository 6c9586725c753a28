"""LP, QP and matrix-equation solvers."""
from ._backend import BACKEND, available_backends
from .config import DEFAULT_TOLERANCES, Tolerances
from .lp import LpProblem, SolveReport, solve_lp
from .qp import AdmmWorkspace, QpProblem, kkt_residuals, solve_qp
from .riccati import (NoConvergence, UnstableSystem, dare_residual, solve_dare,
                      solve_discrete_lyapunov, spectral_radius)

__all__ = [
    "BACKEND", "available_backends", "DEFAULT_TOLERANCES", "Tolerances",
    "LpProblem", "SolveReport", "solve_lp",
    "AdmmWorkspace", "QpProblem", "kkt_residuals", "solve_qp",
    "NoConvergence", "UnstableSystem", "dare_residual", "solve_dare",
    "solve_discrete_lyapunov", "spectral_radius",
]
