"""Distributionally robust CVaR backoffs over a type-1 Wasserstein ball.

The ground metric is the infinity norm, so the dual-norm constraint in the
reformulation is a 1-norm bound and the whole problem is an LP.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Box, HPolytope, support
from .solvers import LpProblem, SolveReport, solve_lp

CLAMP_TOL = 1e-7


@dataclass(frozen=True)
class DroInstance:
    a: np.ndarray
    samples: np.ndarray
    H: np.ndarray
    h: np.ndarray
    alpha: float
    theta: float

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, dtype=float))
        xi = np.asarray(self.samples, dtype=float).reshape(-1, a.size)
        H = np.asarray(self.H, dtype=float).reshape(-1, a.size)
        h = np.atleast_1d(np.asarray(self.h, dtype=float))
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.theta < 0:
            raise ValueError("theta must be nonnegative")
        if xi.shape[0] == 0:
            raise ValueError("need at least one sample")
        if np.any(xi @ H.T > h + 1e-9):
            raise ValueError("samples lie outside the declared support")
        for k, v in (("a", a), ("samples", xi), ("H", H), ("h", h)):
            object.__setattr__(self, k, v)

    @classmethod
    def from_box(cls, a, samples, box: Box, alpha, theta) -> "DroInstance":
        P = box.to_hpolytope()
        return cls(a, samples, P.H, P.h, alpha, theta)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]


@dataclass(frozen=True)
class LpLayout:
    """Column offsets of the DRO LP variables."""

    N: int
    m: int  # support rows
    k: int  # disturbance dimension

    @property
    def n_vars(self) -> int:
        return 3 + self.N * (1 + self.m + self.k)

    def s(self, l):
        return 3 + l

    def gamma(self, l):
        start = 3 + self.N + l * self.m
        return slice(start, start + self.m)

    def v(self, l):
        start = 3 + self.N * (1 + self.m) + l * self.k
        return slice(start, start + self.k)


ETA, T, LAM = 0, 1, 2


def build_cvar_dro_lp(inst: DroInstance) -> LpProblem:
    """Variables ``[eta, t, lam, s_1..s_N, gamma_1..gamma_N, v_1..v_N]``.

    ``v_l`` bounds ``|a - H' gamma_l|`` componentwise, so ``sum(v_l) <= lam``
    encodes the 1-norm constraint.
    """
    N, k = inst.samples.shape
    m = inst.H.shape[0]
    lay = LpLayout(N, m, k)
    nv = lay.n_vars
    rows, rhs = [], []

    r = np.zeros(nv)
    r[LAM] = inst.theta
    r[T] = -inst.alpha
    r[3:3 + N] = 1.0 / N
    rows.append(r)
    rhs.append(0.0)

    for l in range(N):
        xi = inst.samples[l]
        # -s_l - eta + t + gamma_l.(h - H xi) <= -a.xi
        r = np.zeros(nv)
        r[lay.s(l)] = -1.0
        r[ETA] = -1.0
        r[T] = 1.0
        r[lay.gamma(l)] = inst.h - inst.H @ xi
        rows.append(r)
        rhs.append(-float(inst.a @ xi))
        # v_l >= a - H' gamma_l  and  v_l >= -(a - H' gamma_l)
        blk = np.zeros((k, nv))
        blk[:, lay.v(l)] = -np.eye(k)
        blk[:, lay.gamma(l)] = -inst.H.T
        rows.extend(blk)
        rhs.extend(-inst.a)
        blk = np.zeros((k, nv))
        blk[:, lay.v(l)] = -np.eye(k)
        blk[:, lay.gamma(l)] = inst.H.T
        rows.extend(blk)
        rhs.extend(inst.a)
        # sum v_l <= lam
        r = np.zeros(nv)
        r[lay.v(l)] = 1.0
        r[LAM] = -1.0
        rows.append(r)
        rhs.append(0.0)

    cost = np.zeros(nv)
    cost[ETA] = 1.0
    bounds = [(0.0, None), (None, None)] + [(0.0, None)] * (nv - 2)
    return LpProblem(cost, np.array(rows), np.array(rhs), bounds=bounds)


@dataclass
class BackoffResult:
    eta: float
    lp_report: SolveReport | None
    clamped: bool
    support_bound: float


def compute_backoff(inst: DroInstance, method: str = "auto") -> BackoffResult:
    """Smallest ``eta >= 0`` whose worst-case CVaR constraint holds.

    ``eta`` can never exceed the support bound ``max a.xi`` over the support
    (that value is always feasible), so a result within ``CLAMP_TOL`` of it
    is reported as the bound itself and flagged as clamped.
    """
    bound = support(HPolytope(inst.H, inst.h), inst.a)
    if not np.any(inst.a):
        return BackoffResult(0.0, None, False, bound)
    rep = solve_lp(build_cvar_dro_lp(inst), method=method)
    if not rep.ok:
        raise RuntimeError(f"DRO LP returned {rep.status}; the instance should always be feasible")
    eta = max(float(rep.x[ETA]), 0.0)
    clamped = abs(eta - max(bound, 0.0)) <= CLAMP_TOL
    if clamped:
        eta = max(bound, 0.0)
    return BackoffResult(eta, rep, clamped, bound)


def backoff_vector(F, alpha, samples, support_box: Box, theta: float) -> tuple[np.ndarray, list]:
    """One DRO backoff per row of ``F`` (rows act on the disturbance space)."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (F.shape[0],))
    results = []
    for j, row in enumerate(F):
        if not np.any(row):
            results.append(BackoffResult(0.0, None, False, 0.0))
            continue
        inst = DroInstance.from_box(row, samples, support_box, float(alpha[j]), theta)
        results.append(compute_backoff(inst))
    return np.array([r.eta for r in results]), results


def robust_backoff_vector(F, support_box: Box) -> np.ndarray:
    """Worst-case backoff: the support of the disturbance box along each row."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    return np.array([support(support_box, row) if np.any(row) else 0.0 for row in F])


def empirical_cvar(z, alpha: float) -> float:
    """Upper-tail CVaR at level ``alpha`` of equally weighted samples ``z``.

    ``min_t t + E[(z - t)+] / alpha``, evaluated on the sorted samples with a
    fractional weight on the boundary sample.
    """
    z = np.sort(np.asarray(z, dtype=float))[::-1]
    N = z.size
    mass = alpha * N
    k = int(np.floor(mass))
    tail = z[:k].sum()
    if k < N:
        tail += (mass - k) * z[k]
    return float(tail / mass)
