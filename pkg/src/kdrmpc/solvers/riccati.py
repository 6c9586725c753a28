"""Riccati and Lyapunov matrix equations for LQR synthesis."""
from __future__ import annotations

import numpy as np

from .config import DEFAULT_TOLERANCES, Tolerances


class NoConvergence(RuntimeError):
    pass


class UnstableSystem(ValueError):
    pass


def spectral_radius(M) -> float:
    M = np.atleast_2d(M)
    return float(np.max(np.abs(np.linalg.eigvals(M)))) if M.size else 0.0


def dare_residual(A, B, Q, R, P) -> float:
    BtP = B.T @ P
    G = np.linalg.solve(R + BtP @ B, BtP @ A)
    return float(np.linalg.norm(A.T @ P @ A - A.T @ P @ B @ G + Q - P, "fro"))


def solve_dare(A, B, Q, R, tol: Tolerances = DEFAULT_TOLERANCES):
    """Return ``(P, K)`` with ``u = K x`` stabilizing ``A + B K``.

    Plain Riccati recursion from ``P = Q``; stops when successive iterates
    differ by less than ``tol.dare_tol`` relative to ``|P|``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    P = Q.copy()
    for _ in range(tol.dare_max_iter):
        BtP = B.T @ P
        S = R + BtP @ B
        BtPA = BtP @ A
        with np.errstate(over="ignore", invalid="ignore"):
            P_next = Q + A.T @ P @ A - BtPA.T @ np.linalg.solve(S, BtPA)
        if not np.all(np.isfinite(P_next)) or np.max(np.abs(P_next)) > 1e150:
            raise NoConvergence("Riccati recursion diverges; (A, B) is not stabilizable")
        P_next = 0.5 * (P_next + P_next.T)
        diff = np.max(np.abs(P_next - P))
        P = P_next
        if diff <= tol.dare_tol * max(1.0, np.max(np.abs(P))):
            break
    else:
        raise NoConvergence(f"Riccati recursion did not converge in {tol.dare_max_iter} iterations")
    BtP = B.T @ P
    K = -np.linalg.solve(R + BtP @ B, BtP @ A)
    return P, K


def solve_discrete_lyapunov(Phi, M, tol: Tolerances = DEFAULT_TOLERANCES) -> np.ndarray:
    """Solve ``P - Phi' P Phi = M`` for stable ``Phi``."""
    Phi = np.atleast_2d(np.asarray(Phi, dtype=float))
    M = np.atleast_2d(np.asarray(M, dtype=float))
    n = Phi.shape[0]
    if spectral_radius(Phi) >= 1.0:
        raise UnstableSystem("Phi must have spectral radius < 1")
    if n <= tol.lyapunov_kron_max_n:
        # vec(Phi' P Phi) = kron(Phi', Phi') vec(P) for row-major vec
        lhs = np.eye(n * n) - np.kron(Phi.T, Phi.T)
        P = np.linalg.solve(lhs, M.reshape(-1)).reshape(n, n)
    else:
        # doubling: P = sum_k (Phi')^k M Phi^k, squaring the step each pass
        P = M.copy()
        Ak = Phi.copy()
        for _ in range(64):
            inc = Ak.T @ P @ Ak
            P = P + inc
            Ak = Ak @ Ak
            if np.max(np.abs(inc)) <= 1e-15 * max(1.0, np.max(np.abs(P))):
                break
    return 0.5 * (P + P.T)
