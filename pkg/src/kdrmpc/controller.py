"""Gain synthesis and the online tube MPC quadratic program.

The QP is condensed: the nominal lifted trajectory is eliminated and only
the corrections ``c_0..c_{N-1}`` are decision variables.  All constraint
matrices are fixed; only the right-hand side depends on the current lifted
state, so the factorization and warm start are reused between steps.
"""
from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .koopman import LiftedModel
from .solvers import (AdmmWorkspace, LpProblem, SolveReport, solve_dare, solve_discrete_lyapunov,
                      solve_lp, spectral_radius)
from .tubes import TubeSet

FEAS_TOL = 1e-7


class InfeasibleAtState(RuntimeError):
    def __init__(self, msg, stage=None):
        super().__init__(msg)
        self.stage = stage


@dataclass(frozen=True)
class Gains:
    K: np.ndarray
    P: np.ndarray
    Pi: np.ndarray
    Phi: np.ndarray
    Qbar: np.ndarray
    R: np.ndarray
    P_dare: np.ndarray


def lift_weight(Q, model: LiftedModel) -> np.ndarray:
    """State weight in lifted coordinates: ``C'QC`` for an ``n_x`` weight,
    unchanged for a full lifted weight."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if Q.shape == (model.n, model.n):
        return Q
    if Q.shape == (model.n_x, model.n_x):
        return model.C.T @ Q @ model.C
    raise ValueError(f"Q must be {model.n_x}x{model.n_x} or {model.n}x{model.n}")


def synthesize(model: LiftedModel, Q, R) -> Gains:
    Qbar = lift_weight(Q, model)
    R = np.atleast_2d(np.asarray(R, dtype=float))
    P_dare, K = solve_dare(model.A, model.B, Qbar, R)
    Phi = model.A + model.B @ K
    if spectral_radius(Phi) >= 1.0:
        raise RuntimeError("LQR gain does not stabilize the lifted model")
    P = solve_discrete_lyapunov(Phi, Qbar + K.T @ R @ K)
    Pi = R + model.B.T @ P @ model.B
    return Gains(K, P, 0.5 * (Pi + Pi.T), Phi, Qbar, R, P_dare)


@dataclass
class MpcSolution:
    c: np.ndarray | None
    s_bar: np.ndarray | None
    u_bar: np.ndarray | None
    objective: float
    report: SolveReport
    feasible: bool
    first_infeasible_stage: int | None = None
    wall_time: float = 0.0


@dataclass
class ControllerConfig:
    model: LiftedModel
    gains: Gains
    tube: TubeSet
    N: int
    _local: threading.local = field(default_factory=threading.local, repr=False, compare=False)

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("horizon must be at least 1")
        if self.tube.N != self.N:
            raise ValueError("tube and controller horizons differ")
        self._build()

    @property
    def K(self):
        return self.gains.K

    @property
    def Phi(self):
        return self.gains.Phi

    @property
    def Pi(self):
        return self.gains.Pi

    def _build(self):
        """Constraint rows ``A_c c <= b0 - M s`` grouped by stage."""
        N, n, nu = self.N, self.model.n, self.model.n_u
        Phi, B, K = self.gains.Phi, self.model.B, self.gains.K
        tube = self.tube
        Phis = [np.eye(n)]
        for _ in range(N):
            Phis.append(Phis[-1] @ Phi)
        # Sc[i]: s_bar_i = Phi^i s + Sc[i] c
        Sc = [np.zeros((n, N * nu))]
        for i in range(N):
            nxt = Phi @ Sc[-1]
            nxt[:, i * nu:(i + 1) * nu] += B
            Sc.append(nxt)
        blocks, b0s, Ms, stage = [], [], [], []
        G = tube.G
        for i in range(N):
            E = np.zeros((nu, N * nu))
            E[:, i * nu:(i + 1) * nu] = np.eye(nu)
            blocks.append(G @ (K @ Sc[i] + E))
            Ms.append(G @ K @ Phis[i])
            b0s.append(tube.input_rhs[i])
            stage += [("input", i)] * G.shape[0]
            FC = tube.FC
            blocks.append(FC @ Sc[i + 1])
            Ms.append(FC @ Phis[i + 1])
            b0s.append(tube.state_rhs[i])
            stage += [("state", i + 1)] * FC.shape[0]
        Ht = tube.terminal.H
        blocks.append(Ht @ Sc[N])
        Ms.append(Ht @ Phis[N])
        b0s.append(tube.terminal.h)
        stage += [("terminal", N)] * Ht.shape[0]
        self.A_c = np.vstack(blocks)
        self.b0 = np.concatenate(b0s)
        self.M = np.vstack(Ms)
        self.stage_of_row = stage
        self.Sc = np.array(Sc)
        self.Phis = np.array(Phis)
        self.H_qp = np.kron(np.eye(N), 2.0 * self.gains.Pi)

    def workspace(self) -> AdmmWorkspace:
        ws = getattr(self._local, "ws", None)
        if ws is None:
            ws = AdmmWorkspace(self.H_qp, self.A_c)
            self._local.ws = ws
        return ws

    def rhs(self, s) -> np.ndarray:
        return self.b0 - self.M @ s

    def candidate_feasible(self, s, c, tol: float = FEAS_TOL) -> tuple[bool, float]:
        """Direct check of ``A_c c <= b(s)``; returns (ok, worst violation)."""
        viol = float(np.max(self.A_c @ np.ravel(c) - self.rhs(s), initial=-np.inf))
        return viol <= tol, viol

    def to_dict(self) -> dict:
        g = self.gains
        return {"N": self.N, "K": g.K.tolist(), "P": g.P.tolist(), "Pi": g.Pi.tolist(),
                "Phi": g.Phi.tolist(), "Qbar": g.Qbar.tolist(), "R": g.R.tolist(),
                "spectral_radius_Phi": spectral_radius(g.Phi)}


def shift_candidate(c) -> np.ndarray:
    c = np.atleast_2d(c)
    return np.vstack([c[1:], np.zeros((1, c.shape[1]))])


def _first_infeasible_stage(cfg: ControllerConfig, b) -> int | None:
    """Smallest stage whose constraints, together with all earlier ones, admit no c."""
    stages = np.array([s for _, s in cfg.stage_of_row])
    n = cfg.A_c.shape[1]
    for j in range(cfg.N + 1):
        rows = stages <= j
        rep = solve_lp(LpProblem(np.zeros(n), cfg.A_c[rows], b[rows], bounds=[(None, None)] * n))
        if rep.status == "Infeasible":
            return j
    return None


def solve_mpc(cfg: ControllerConfig, s, warm_start: bool = True) -> MpcSolution:
    s = np.asarray(s, dtype=float)
    if s.shape != (cfg.model.n,) or not np.all(np.isfinite(s)):
        raise ValueError("lifted state must be a finite vector of the model dimension")
    N, nu = cfg.N, cfg.model.n_u
    b = cfg.rhs(s)
    m = b.size
    ws = cfg.workspace()
    rep = ws.solve(np.zeros(N * nu), np.full(m, -np.inf), b, warm_start=warm_start)
    if rep.status == "Optimal" and rep.residuals.get("primal", 0.0) > FEAS_TOL:
        rep.status, rep.x = "MaxIter", None
    if rep.status != "Optimal":
        stage = _first_infeasible_stage(cfg, b) if rep.status == "Infeasible" else None
        return MpcSolution(None, None, None, np.nan, rep, False, stage)
    c = rep.x.reshape(N, nu)
    s_bar = cfg.Phis @ s + cfg.Sc @ rep.x
    u_bar = np.array([cfg.K @ s_bar[i] + c[i] for i in range(N)])
    obj = float(sum(ci @ cfg.gains.Pi @ ci for ci in c))
    return MpcSolution(c, s_bar, u_bar, obj, rep, True)


def control_step(cfg: ControllerConfig, x, input_tol: float = FEAS_TOL):
    """Lift, solve, and return ``(u, solution)``; the solution records the
    wall time of the whole step."""
    t0 = time.perf_counter()
    s = cfg.model.lift(x)
    sol = solve_mpc(cfg, s)
    if not sol.feasible:
        raise InfeasibleAtState(f"MPC infeasible at x = {np.asarray(x).tolist()}", sol.first_infeasible_stage)
    u = cfg.K @ s + sol.c[0]
    G, g = cfg.tube.G, cfg.tube.input_rhs[0]
    if np.any(G @ u > g + input_tol):
        raise InfeasibleAtState("applied input leaves the input set")
    sol.wall_time = time.perf_counter() - t0
    return u, sol
