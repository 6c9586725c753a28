"""Solver tolerances in one place."""
from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    lp_pivot: float = 1e-10
    lp_feasibility: float = 1e-8
    lp_max_iter: int = 50_000
    lp_bland_after: int = 50
    lp_dense_max_entries: int = 400_000  # above this, large LPs go to HiGHS

    qp_eps_abs: float = 1e-7
    qp_eps_rel: float = 1e-7
    qp_kkt: float = 1e-7
    qp_infeasible: float = 1e-6
    qp_max_iter: int = 20_000
    qp_check_every: int = 25
    qp_rho: float = 0.1
    qp_sigma: float = 1e-6
    qp_alpha: float = 1.6
    qp_polish_delta: float = 1e-9
    qp_polish_refine: int = 5

    dare_tol: float = 1e-12
    dare_max_iter: int = 100_000
    lyapunov_kron_max_n: int = 60
    symmetry: float = 1e-10


DEFAULT_TOLERANCES = Tolerances()
