"""Dense two-phase simplex with Bland's-rule fallback.

Problems beyond ``Tolerances.lp_dense_max_entries`` tableau entries are
handed to HiGHS (through scipy); the dense tableau is quadratic in memory.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve

from . import _backend
from .config import DEFAULT_TOLERANCES, Tolerances

_REFACTOR_EVERY = 100
_PRIMAL_CHECK = 1e-7


class _NumericalFailure(ArithmeticError):
    pass


def _equilibrate(A, passes: int = 4, limit: float = 1e6):
    """Row and column factors ``R, S`` bringing ``R A S`` entries near 1.

    Entries below 1e-12 of the largest one are ignored and the factors are
    kept within ``[1/limit, limit]``.
    """
    m, n = A.shape
    R, S = np.ones(m), np.ones(n)
    absA = np.abs(A)
    top = float(absA.max(initial=0.0))
    if top == 0.0:
        return R, S
    nz = absA > 1e-12 * top
    for _ in range(passes):
        for axis in (1, 0):
            W = absA * R[:, None] * S
            big = np.where(nz, W, 0.0).max(axis=axis, initial=0.0)
            small = np.where(nz, W, np.inf).min(axis=axis, initial=np.inf)
            ok = big > 0
            f = np.ones_like(big)
            f[ok] = 1.0 / (np.sqrt(big[ok]) * np.sqrt(small[ok]))
            if axis == 1:
                R = np.clip(R * f, 1.0 / limit, limit)
            else:
                S = np.clip(S * f, 1.0 / limit, limit)
    return R, S


@dataclass(frozen=True)
class LpProblem:
    """``min cost.x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  lo <= x <= hi``.

    ``bounds`` follows scipy: ``None`` means every variable is ``>= 0``; a
    single ``(lo, hi)`` pair applies to all variables; ``None`` entries are
    infinite.
    """

    cost: np.ndarray
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    bounds: list | tuple | None = None

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.cost, dtype=float))
        if c.ndim != 1 or c.size == 0:
            raise ValueError("cost must be a nonempty vector")
        object.__setattr__(self, "cost", c)
        n = c.size
        for An, bn in (("A_ub", "b_ub"), ("A_eq", "b_eq")):
            A, b = getattr(self, An), getattr(self, bn)
            if (A is None) != (b is None):
                raise ValueError(f"{An} and {bn} must be given together")
            if A is None:
                A, b = np.zeros((0, n)), np.zeros(0)
            A = np.asarray(A, dtype=float).reshape(-1, n)
            b = np.atleast_1d(np.asarray(b, dtype=float))
            if b.shape != (A.shape[0],):
                raise ValueError(f"{bn} has wrong length")
            object.__setattr__(self, An, A)
            object.__setattr__(self, bn, b)
        object.__setattr__(self, "bounds", _normalize_bounds(self.bounds, n))

    @property
    def n(self) -> int:
        return self.cost.size


def _normalize_bounds(bounds, n):
    if bounds is None:
        return [(0.0, np.inf)] * n
    if len(bounds) == 2 and all(b is None or np.isscalar(b) for b in bounds):
        bounds = [tuple(bounds)] * n
    if len(bounds) != n:
        raise ValueError("bounds length does not match the number of variables")
    out = []
    for lo, hi in bounds:
        lo = -np.inf if lo is None else float(lo)
        hi = np.inf if hi is None else float(hi)
        if lo > hi:
            raise ValueError("lower bound above upper bound")
        out.append((lo, hi))
    return out


@dataclass
class SolveReport:
    status: str  # Optimal | Infeasible | Unbounded | MaxIter
    x: np.ndarray | None
    objective: float
    iterations: int
    residuals: dict = field(default_factory=dict)
    ineq_dual: np.ndarray | None = None
    eq_dual: np.ndarray | None = None
    solver: str = ""

    def __post_init__(self):
        if (self.status == "Optimal") != (self.x is not None):
            raise ValueError("solution must be present exactly when status is Optimal")

    @property
    def ok(self) -> bool:
        return self.status == "Optimal"


def solve_lp(p: LpProblem, method: str = "auto", tol: Tolerances = DEFAULT_TOLERANCES) -> SolveReport:
    """Solve an LP; never raises for a well-formed problem.

    ``method`` is ``"simplex"``, ``"highs"`` or ``"auto"`` (dense simplex
    unless the tableau would be large).
    """
    if method == "auto":
        rep = solve_lp(p, _auto_method(p, tol), tol)
        if rep.status == "MaxIter" and rep.solver == "simplex":
            # numerical cycling on badly degenerate problems; hand over
            return _solve_highs(p)
        return rep
    if method == "simplex":
        try:
            return _DenseSimplex(p, tol).solve()
        except _NumericalFailure:
            rep = _solve_highs(p)
            rep.solver = "highs (simplex fallback)"
            return rep
    if method == "highs":
        return _solve_highs(p)
    raise ValueError(f"unknown LP method {method!r}")


def _auto_method(p: LpProblem, tol: Tolerances) -> str:
    n_std = sum(2 if np.isinf(lo) and np.isinf(hi) else 1 for lo, hi in p.bounds)
    n_upper = sum(1 for lo, hi in p.bounds if np.isfinite(lo) and np.isfinite(hi))
    m = p.A_ub.shape[0] + p.A_eq.shape[0] + n_upper
    return "simplex" if (m + 1) * (n_std + 2 * m + 1) <= tol.lp_dense_max_entries else "highs"


def _solve_highs(p: LpProblem) -> SolveReport:
    from scipy.optimize import linprog

    kw = {}
    if p.A_ub.shape[0]:
        kw.update(A_ub=p.A_ub, b_ub=p.b_ub)
    if p.A_eq.shape[0]:
        kw.update(A_eq=p.A_eq, b_eq=p.b_eq)
    bounds = [(None if np.isinf(lo) else lo, None if np.isinf(hi) else hi) for lo, hi in p.bounds]
    res = linprog(p.cost, bounds=bounds, method="highs", **kw)
    status = {0: "Optimal", 1: "MaxIter", 2: "Infeasible", 3: "Unbounded"}.get(res.status, "MaxIter")
    if status == "Infeasible":
        # HiGHS reports "infeasible or unbounded" under status 2; settle it.
        feas = linprog(np.zeros(p.n), bounds=bounds, method="highs", **kw)
        if feas.status == 0:
            status = "Unbounded"
    if status != "Optimal":
        return SolveReport(status, None, np.nan, int(getattr(res, "nit", 0)), solver="highs")
    x = np.asarray(res.x)
    lam = -np.asarray(res.ineqlin.marginals) if p.A_ub.shape[0] else np.zeros(0)
    mu = -np.asarray(res.eqlin.marginals) if p.A_eq.shape[0] else np.zeros(0)
    return SolveReport("Optimal", x, float(res.fun), int(res.nit), _lp_residuals(p, x),
                       lam, mu, solver="highs")


def _lp_residuals(p: LpProblem, x) -> dict:
    viol = 0.0
    if p.A_ub.shape[0]:
        viol = max(viol, float(np.max(p.A_ub @ x - p.b_ub, initial=0.0)))
    if p.A_eq.shape[0]:
        viol = max(viol, float(np.max(np.abs(p.A_eq @ x - p.b_eq))))
    lo = np.array([b[0] for b in p.bounds])
    hi = np.array([b[1] for b in p.bounds])
    viol = max(viol, float(np.max(np.maximum(lo - x, x - hi), initial=0.0)))
    return {"primal": viol}


class _DenseSimplex:
    def __init__(self, p: LpProblem, tol: Tolerances):
        self.p = p
        self.tol = tol
        self._to_standard_form()

    def _to_standard_form(self):
        p = self.p
        n = p.n
        cols = []  # (orig index, sign) per standard variable
        offset = np.zeros(n)
        upper_rows = []
        for j, (lo, hi) in enumerate(p.bounds):
            if np.isfinite(lo):
                offset[j] = lo
                cols.append((j, 1.0))
                if np.isfinite(hi):
                    upper_rows.append((len(cols) - 1, hi - lo))
            elif np.isfinite(hi):
                offset[j] = hi
                cols.append((j, -1.0))
            else:
                cols.append((j, 1.0))
                cols.append((j, -1.0))
        ns = len(cols)
        M = np.zeros((n, ns))
        for k, (j, sgn) in enumerate(cols):
            M[j, k] = sgn
        self.M, self.offset = M, offset

        A_ub = p.A_ub @ M
        b_ub = p.b_ub - p.A_ub @ offset
        if upper_rows:
            extra = np.zeros((len(upper_rows), ns))
            for r, (k, cap) in enumerate(upper_rows):
                extra[r, k] = 1.0
            A_ub = np.vstack([A_ub, extra])
            b_ub = np.concatenate([b_ub, [cap for _, cap in upper_rows]])
        A_eq = p.A_eq @ M
        b_eq = p.b_eq - p.A_eq @ offset
        self.n_ub_orig = p.A_ub.shape[0]
        m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
        m = m_ub + m_eq
        # rows: [A_ub | I | 0] (slacks), then [A_eq | 0]
        A = np.zeros((m, ns + m_ub))
        A[:m_ub, :ns] = A_ub
        A[:m_ub, ns:] = np.eye(m_ub)
        A[m_ub:, :ns] = A_eq
        b = np.concatenate([b_ub, b_eq])
        sign = np.where(b < 0, -1.0, 1.0)
        A *= sign[:, None]
        b = b * sign
        c = np.concatenate([M.T @ p.cost, np.zeros(m_ub)])
        # geometric equilibration; mixed magnitudes (1e6 next to 1) otherwise
        # steer the ratio test onto tiny pivots
        R, S = _equilibrate(A)
        self.R, self.S = R, S
        self.A = R[:, None] * A * S
        self.b = R * b
        self.c = S * c
        self.row_sign = sign
        self.ns, self.m_ub, self.m_eq = ns, m_ub, m_eq

    def solve(self) -> SolveReport:
        tol = self.tol
        A, b, c = self.A, self.b, self.c
        m, nA = A.shape
        kern = _backend.kernels

        # initial basis: slack where it has +1 coefficient, artificial otherwise
        basis = np.full(m, -1, dtype=np.int64)
        need_art = []
        for i in range(m):
            if i < self.m_ub and self.row_sign[i] > 0:
                basis[i] = self.ns + i
            else:
                need_art.append(i)
        n_art = len(need_art)
        self.kept_rows = np.ones(m, dtype=bool)
        iters = 0
        if n_art:
            # phase 1: minimise the sum of artificials
            A1 = np.zeros((m, nA + n_art))
            A1[:, :nA] = A
            for k, i in enumerate(need_art):
                A1[i, nA + k] = 1.0
                basis[i] = nA + k
            c1 = np.zeros(nA + n_art)
            c1[nA:] = 1.0
            st, it, T = self._run(A1, b, c1, basis, nA + n_art)
            iters += it
            if st == "MaxIter":
                return SolveReport("MaxIter", None, np.nan, iters, solver="simplex")
            scale = max(1.0, float(np.max(np.abs(b), initial=0.0)))
            if -T[m, -1] > tol.lp_feasibility * scale:
                return SolveReport("Infeasible", None, np.nan, iters, solver="simplex")
            # drive artificials out of the basis; drop redundant rows
            keep = np.ones(m, dtype=bool)
            for i in range(m):
                if basis[i] >= nA:
                    row = T[i, :nA]
                    cand = np.flatnonzero(np.abs(row) > 1e-9)
                    if cand.size:
                        j = int(cand[np.argmax(np.abs(row[cand]))])
                        kern.pivot(T, i, j)
                        basis[i] = j
                    else:
                        keep[i] = False
            self.kept_rows = keep
            basis = np.ascontiguousarray(basis[keep])
        rows = np.flatnonzero(self.kept_rows)
        st, it, T = self._run(A[rows], b[rows], c, basis, nA)
        iters += it
        if st != "Optimal":
            obj = -np.inf if st == "Unbounded" else np.nan
            return SolveReport(st, None, obj, iters, solver="simplex")
        xs = np.zeros(nA)
        xs[basis] = np.maximum(T[:-1, -1], 0.0)
        xs *= self.S
        x = self.offset + self.M @ xs[: self.ns]
        res = _lp_residuals(self.p, x)
        scale = max(1.0, float(np.max(np.abs(self.p.b_ub), initial=0.0)),
                    float(np.max(np.abs(self.p.b_eq), initial=0.0)))
        if not np.all(np.isfinite(x)) or not res["primal"] <= _PRIMAL_CHECK * scale:
            raise _NumericalFailure(f"simplex point violates constraints by {res['primal']:.3g}")
        lam, mu = self._duals(basis)
        return SolveReport("Optimal", x, float(self.p.cost @ x), iters, res, lam, mu,
                           solver="simplex")

    def _tableau(self, A, b, cost, basis):
        """Fresh tableau for ``basis`` computed from the original data."""
        m, n = A.shape
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", LinAlgWarning)
            lu = lu_factor(A[:, basis], check_finite=False)
        d = np.abs(np.diag(lu[0]))
        if d.min(initial=np.inf) <= 1e-13 * max(1.0, d.max(initial=0.0)):
            raise _NumericalFailure("simplex basis became singular")
        T = np.empty((m + 1, n + 1))
        T[:m, :n] = lu_solve(lu, A, check_finite=False)
        T[:m, -1] = lu_solve(lu, b, check_finite=False)
        T[:m, -1][(T[:m, -1] < 0.0) & (T[:m, -1] > -self.tol.lp_feasibility)] = 0.0
        cb = cost[basis]
        T[m, :n] = cost - cb @ T[:m, :n]
        T[m, -1] = -cb @ T[:m, -1]
        return np.ascontiguousarray(T)

    def _run(self, A, b, cost, basis, n_allowed):
        """Simplex pivots with periodic refactorisation.

        The dense tableau accumulates round-off over long pivot sequences, so
        it is rebuilt from ``A`` every ``_REFACTOR_EVERY`` pivots and before
        any termination claim is accepted.
        """
        tol = self.tol
        kern = _backend.kernels
        iters = 0
        T = self._tableau(A, b, cost, basis)
        while iters < tol.lp_max_iter:
            chunk = min(_REFACTOR_EVERY, tol.lp_max_iter - iters)
            st, it = kern.simplex_iterate(T, basis, n_allowed, chunk, tol.lp_pivot,
                                          tol.lp_bland_after)
            iters += it
            T = self._tableau(A, b, cost, basis)
            if st == 2:
                continue
            # re-price on the fresh tableau; accept only if it agrees
            st2, it2 = kern.simplex_iterate(T.copy(), basis.copy(), n_allowed, 1, tol.lp_pivot,
                                            tol.lp_bland_after)
            if it2 == 0 and st2 == st:
                return ("Optimal" if st == 0 else "Unbounded"), iters, T
        return "MaxIter", iters, T

    def _duals(self, basis):
        rows = np.flatnonzero(self.kept_rows)
        B = self.A[rows][:, basis]
        try:
            y_kept = np.linalg.solve(B.T, self.c[basis])
        except np.linalg.LinAlgError:
            y_kept = np.linalg.lstsq(B.T, self.c[basis], rcond=None)[0]
        y = np.zeros(self.A.shape[0])
        y[rows] = y_kept
        y = -y * self.R * self.row_sign
        return y[: self.n_ub_orig], y[self.m_ub:]
