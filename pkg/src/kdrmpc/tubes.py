"""Tightened constraint sequences and the terminal invariant set."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Box, HPolytope, box_support_rows, linear_map_box, minkowski_sum_boxes
from .solvers import LpProblem, solve_lp

REDUNDANCY_TOL = 1e-9


class EmptyTube(ValueError):
    def __init__(self, stage: int, kind: str = "state"):
        super().__init__(f"{kind} tube is empty at stage {stage}")
        self.stage = stage
        self.kind = kind


class EmptySet(ValueError):
    pass


class NoConvergence(RuntimeError):
    def __init__(self, msg, last: HPolytope | None = None, violation: float = np.nan):
        super().__init__(msg)
        self.last = last
        self.violation = violation


@dataclass(frozen=True)
class TubeSet:
    """Stage-indexed tightened sets in the lifted space.

    ``state_rhs[j-1]`` is the right-hand side of ``F C s <= .`` at stage j
    (j = 1..N); ``input_rhs[i]`` the right-hand side of ``G u <= .`` at stage
    i (i = 0..N).  The extra input stage N enters the terminal set.
    """

    FC: np.ndarray
    state_rhs: np.ndarray
    G: np.ndarray
    input_rhs: np.ndarray
    terminal: HPolytope
    eta: np.ndarray
    info: dict = field(default_factory=dict, compare=False)

    @property
    def N(self) -> int:
        return self.state_rhs.shape[0]

    def state_set(self, j: int) -> HPolytope:
        return HPolytope(self.FC, self.state_rhs[j - 1])

    def input_set(self, i: int) -> HPolytope:
        return HPolytope(self.G, self.input_rhs[i])

    def to_dict(self) -> dict:
        return {
            "FC": self.FC.tolist(),
            "state_rhs": self.state_rhs.tolist(),
            "G": self.G.tolist(),
            "input_rhs": self.input_rhs.tolist(),
            "terminal_H": self.terminal.H.tolist(),
            "terminal_h": self.terminal.h.tolist(),
            "eta": self.eta.tolist(),
            "info": self.info,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TubeSet":
        return cls(np.array(d["FC"]), np.array(d["state_rhs"]), np.array(d["G"]),
                   np.array(d["input_rhs"]), HPolytope(np.array(d["terminal_H"]), np.array(d["terminal_h"])),
                   np.array(d["eta"]), d.get("info", {}))


def _nonempty(H, h) -> bool:
    rep = solve_lp(LpProblem(np.zeros(H.shape[1]), H, h, bounds=[(None, None)] * H.shape[1]))
    return rep.status != "Infeasible"


def error_box(D, W_hat: Box, D_set: Box) -> Box:
    """``D_set (+) D W_hat`` in the lifted space."""
    return minkowski_sum_boxes(D_set, linear_map_box(D, W_hat))


def build_state_tube(F, f, eta, Phi, D, W_hat: Box, D_set: Box, N: int, C=None,
                     check_empty: bool = True) -> np.ndarray:
    """Right-hand sides of ``F C s <= .`` for stages 1..N.

    Stage 1 removes the stochastic backoff and the model-error set; stage
    j+1 further removes ``Phi^j (D_set (+) D W_hat)``.
    """
    Phi = np.atleast_2d(Phi)
    n = Phi.shape[0]
    F = np.atleast_2d(np.asarray(F, dtype=float))
    C = np.eye(F.shape[1], n) if C is None else np.asarray(C, dtype=float)
    FC = F @ C
    E = error_box(D, W_hat, D_set)
    rhs = np.asarray(f, dtype=float) - np.asarray(eta, dtype=float) - box_support_rows(FC, D_set)
    out = [rhs]
    M = np.eye(n)
    for _ in range(1, N):
        M = M @ Phi
        rhs = rhs - box_support_rows(FC @ M, E)
        out.append(rhs)
    out = np.array(out)
    if check_empty:
        for j, r in enumerate(out, start=1):
            if not _nonempty(FC, r):
                raise EmptyTube(j, "state")
    return out


def build_input_tube(G, g, K, Phi, D, W_hat: Box, D_set: Box, N: int,
                     check_empty: bool = True) -> np.ndarray:
    """Right-hand sides of ``G u <= .`` for stages 0..N.

    Stage 0 is the input set itself; stage i+1 removes
    ``K Phi^i (D_set (+) D W_hat)``.
    """
    Phi = np.atleast_2d(Phi)
    K = np.atleast_2d(K)
    G = np.atleast_2d(np.asarray(G, dtype=float))
    E = error_box(D, W_hat, D_set)
    rhs = np.asarray(g, dtype=float)
    out = [rhs]
    M = np.eye(Phi.shape[0])
    for _ in range(N):
        rhs = rhs - box_support_rows(G @ K @ M, E)
        out.append(rhs)
        M = M @ Phi
    out = np.array(out)
    if check_empty:
        for i, r in enumerate(out):
            if not _nonempty(G, r):
                raise EmptyTube(i, "input")
    return out


def _max_over(H, h, a):
    """``max a.x`` over ``Hx <= h``; returns +inf when unbounded, None when empty."""
    rep = solve_lp(LpProblem(-a, H, h, bounds=[(None, None)] * H.shape[1]))
    if rep.status == "Unbounded":
        return np.inf
    if rep.status == "Infeasible":
        return None
    if rep.status != "Optimal":
        return np.inf
    return -rep.objective


def remove_redundant(H, h, tol: float = REDUNDANCY_TOL):
    """Drop rows implied by the others (one LP per row)."""
    H = np.asarray(H, dtype=float)
    h = np.asarray(h, dtype=float)
    keep = np.ones(H.shape[0], dtype=bool)
    for i in range(H.shape[0]):
        keep[i] = False
        if not keep.any():
            keep[i] = True
            continue
        v = _max_over(H[keep], h[keep], H[i])
        if v is None:
            raise EmptySet("polytope is empty")
        if v > h[i] + tol:
            keep[i] = True
    return H[keep], h[keep]


@dataclass
class TerminalSetResult:
    polytope: HPolytope
    iterations: int
    n_rows: int


def compute_terminal_set(constraints: HPolytope, Phi, W_term: Box, max_iter: int = 500,
                         tol: float = REDUNDANCY_TOL) -> TerminalSetResult:
    """Maximal RPI subset of ``constraints`` for ``s+ = Phi s + w, w in W_term``.

    Backward iteration ``O_{k+1} = O_k & pre(O_k)``.  Only the rows added in
    the previous pass can produce new non-redundant rows, so each pass maps
    just those and keeps the ones not implied by the current set.
    """
    Phi = np.atleast_2d(np.asarray(Phi, dtype=float))
    H, h = remove_redundant(constraints.H, constraints.h, tol)
    rows, rhs = H.copy(), h.copy()
    for k in range(1, max_iter + 1):
        cand = rows @ Phi
        cand_h = rhs - box_support_rows(rows, W_term)
        new_r, new_h = [], []
        for r, b in zip(cand, cand_h):
            scale = np.max(np.abs(r))
            if scale <= 1e-14:
                if b < -tol:
                    raise EmptySet(f"terminal set empty at iteration {k}")
                continue
            r, b = r / scale, b / scale
            v = _max_over(H, h, r)
            if v is None:
                raise EmptySet(f"terminal set empty at iteration {k}")
            if v > b + tol:
                new_r.append(r)
                new_h.append(b)
        if not new_r:
            H, h = remove_redundant(H, h, tol)
            return TerminalSetResult(HPolytope(H, h), k, H.shape[0])
        rows, rhs = np.array(new_r), np.array(new_h)
        H = np.vstack([H, rows])
        h = np.concatenate([h, rhs])
        if not _nonempty(H, h):
            raise EmptySet(f"terminal set empty at iteration {k}")
    # non-invariance certificate: worst one-step excess of Phi O (+) W over O
    Hp = H @ Phi
    wsup = box_support_rows(H, W_term)
    viol = float(max(_max_over(H, h, Hp[i]) + wsup[i] - h[i] for i in range(H.shape[0])))
    raise NoConvergence(f"invariant-set iteration did not converge in {max_iter} passes",
                        HPolytope(H, h), viol)


def terminal_set(constraints: HPolytope, Phi, W_term: Box, max_iter: int = 500) -> HPolytope:
    return compute_terminal_set(constraints, Phi, W_term, max_iter).polytope


def chebyshev_center(P: HPolytope, bound: float = 1e3):
    """Center and radius of the largest inscribed ball (within ``|x| <= bound``)."""
    n = P.dim
    norms = np.linalg.norm(P.H, axis=1)
    A = np.hstack([P.H, norms[:, None]])
    rep = solve_lp(LpProblem(np.r_[np.zeros(n), -1.0], A, P.h,
                             bounds=[(-bound, bound)] * n + [(0.0, bound)]))
    if not rep.ok:
        raise EmptySet("polytope is empty")
    return rep.x[:n], rep.x[n]


def sample_polytope(P: HPolytope, n_samples: int, rng, bound: float = 1e3, burn: int = 50,
                    thin: int = 5) -> np.ndarray:
    """Hit-and-run samples from ``P`` intersected with ``|x|_inf <= bound``."""
    n = P.dim
    H = np.vstack([P.H, np.eye(n), -np.eye(n)])
    h = np.concatenate([P.h, np.full(2 * n, bound)])
    x, _ = chebyshev_center(P, bound)
    out = np.empty((n_samples, n))
    total = burn + n_samples * thin
    k = 0
    for it in range(total):
        d = rng.standard_normal(n)
        d /= np.linalg.norm(d)
        Hd = H @ d
        slack = h - H @ x
        with np.errstate(divide="ignore", invalid="ignore"):
            t = slack / Hd
        hi = np.min(t[Hd > 1e-14], initial=np.inf)
        lo = np.max(t[Hd < -1e-14], initial=-np.inf)
        hi, lo = max(hi, 0.0), min(lo, 0.0)
        x = x + rng.uniform(lo, hi) * d
        if it >= burn and (it - burn) % thin == 0 and k < n_samples:
            out[k] = x
            k += 1
    return out


@dataclass
class InvarianceReport:
    n_samples: int
    violations: int
    worst: float


def verify_invariance(omega: HPolytope, Phi, W: Box, n_samples: int = 10_000, rng=None,
                      tol: float = 1e-9) -> InvarianceReport:
    """Sample ``s`` in ``omega`` and check ``Phi s + w`` stays inside for every
    vertex ``w`` of ``W`` (row-wise: the worst vertex attains the box support)."""
    rng = np.random.default_rng(0) if rng is None else rng
    S = sample_polytope(omega, n_samples, rng)
    lhs = S @ (omega.H @ Phi).T + box_support_rows(omega.H, W)[None, :]
    excess = np.max(lhs - omega.h[None, :], axis=1)
    return InvarianceReport(n_samples, int(np.sum(excess > tol)), float(excess.max()))


def r_infinity_box(Phi, E: Box, tol: float = 1e-12, max_terms: int = 100_000) -> Box:
    """Box outer bound on ``E (+) Phi E (+) Phi^2 E (+) ...``."""
    Phi = np.atleast_2d(Phi)
    c = np.zeros(E.dim)
    w = np.zeros(E.dim)
    M = np.eye(E.dim)
    for _ in range(max_terms):
        term = linear_map_box(M, E)
        c += term.center
        w += term.halfwidth
        if np.max(term.halfwidth, initial=0.0) + np.max(np.abs(term.center), initial=0.0) <= tol:
            break
        M = M @ Phi
    return Box(c, w)
