"""Polyhedral and box set arithmetic.

Uncertainty sets are axis-aligned boxes, so supports, linear images and
Pontryagin differences against them have closed forms.  General
H-polytopes only need an LP for their support function.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MEMBERSHIP_TOL = 1e-9


class EmptyResult(ValueError):
    """A set operation produced an empty set."""


class UnboundedSupport(ValueError):
    """The support function is +inf in the requested direction."""


@dataclass(frozen=True)
class HPolytope:
    """The set ``{x : H x <= h}``."""

    H: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        h = np.atleast_1d(np.asarray(self.h, dtype=float))
        if H.shape[0] < 1 or H.shape[1] < 1:
            raise ValueError("HPolytope needs at least one row and one column")
        if h.shape != (H.shape[0],):
            raise ValueError(f"h has shape {h.shape}, expected ({H.shape[0]},)")
        if np.any(np.all(H == 0.0, axis=1)):
            raise ValueError("H has an all-zero row")
        H.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "h", h)

    @property
    def dim(self) -> int:
        return self.H.shape[1]

    @property
    def n_rows(self) -> int:
        return self.H.shape[0]

    def intersect(self, other: "HPolytope") -> "HPolytope":
        return HPolytope(np.vstack([self.H, other.H]), np.concatenate([self.h, other.h]))

    def is_empty(self) -> bool:
        from .solvers import LpProblem, solve_lp

        n = self.dim
        rep = solve_lp(LpProblem(cost=np.zeros(n), A_ub=self.H, b_ub=self.h,
                                 bounds=[(None, None)] * n))
        return rep.status == "Infeasible"


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``center +/- halfwidth``."""

    center: np.ndarray
    halfwidth: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=float)).copy()
        w = np.atleast_1d(np.asarray(self.halfwidth, dtype=float)).copy()
        if w.shape == (1,) and c.shape[0] > 1:
            w = np.full_like(c, w[0])
        if c.shape != w.shape:
            raise ValueError("center and halfwidth dimensions differ")
        if np.any(w < 0):
            raise ValueError("halfwidth must be componentwise nonnegative")
        c.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "halfwidth", w)

    @classmethod
    def from_bounds(cls, lower, upper) -> "Box":
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        return cls((upper + lower) / 2.0, (upper - lower) / 2.0)

    @classmethod
    def hull(cls, points) -> "Box":
        """Smallest box containing every row of ``points``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return cls.from_bounds(pts.min(axis=0), pts.max(axis=0))

    @classmethod
    def zero(cls, n: int) -> "Box":
        return cls(np.zeros(n), np.zeros(n))

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    @property
    def lower(self) -> np.ndarray:
        return self.center - self.halfwidth

    @property
    def upper(self) -> np.ndarray:
        return self.center + self.halfwidth

    def vertices(self) -> np.ndarray:
        n = self.dim
        signs = np.array(np.meshgrid(*[[-1.0, 1.0]] * n, indexing="ij")).reshape(n, -1).T
        return self.center + signs * self.halfwidth

    def to_hpolytope(self) -> HPolytope:
        n = self.dim
        eye = np.eye(n)
        return HPolytope(np.vstack([eye, -eye]), np.concatenate([self.upper, -self.lower]))

    def expand(self, amount) -> "Box":
        return Box(self.center, self.halfwidth + amount)


def support(s: HPolytope | Box, direction) -> float:
    """Support function ``sup {a . x : x in s}``."""
    a = np.asarray(direction, dtype=float)
    if a.shape != (s.dim,):
        raise ValueError(f"direction has shape {a.shape}, set dimension is {s.dim}")
    if isinstance(s, Box):
        return float(a @ s.center + np.abs(a) @ s.halfwidth)
    from .solvers import LpProblem, solve_lp

    rep = solve_lp(LpProblem(cost=-a, A_ub=s.H, b_ub=s.h, bounds=[(None, None)] * s.dim))
    if rep.status == "Unbounded":
        raise UnboundedSupport(f"support unbounded in direction {a}")
    if rep.status == "Infeasible":
        raise EmptyResult("support of an empty polytope")
    return -rep.objective


def box_support_rows(H, b: Box) -> np.ndarray:
    """Row-wise box supports: ``[support(b, H[l]) for l]`` in one shot."""
    H = np.atleast_2d(H)
    return H @ b.center + np.abs(H) @ b.halfwidth


def linear_map_box(M, b: Box) -> Box:
    """Tightest axis-aligned box containing ``{M x : x in b}``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[1] != b.dim:
        raise ValueError(f"map has {M.shape[1]} columns, box dimension is {b.dim}")
    return Box(M @ b.center, np.abs(M) @ b.halfwidth)


def minkowski_sum_boxes(a: Box, b: Box) -> Box:
    if a.dim != b.dim:
        raise ValueError("box dimensions differ")
    return Box(a.center + b.center, a.halfwidth + b.halfwidth)


def pontryagin_diff_box(p: HPolytope, b: Box, check_empty: bool = True) -> HPolytope:
    """``p - b = {x : x + y in p for all y in b}``, exact row by row.

    Raises EmptyResult when the tightened polytope has no points.
    """
    if p.dim != b.dim:
        raise ValueError("dimensions differ")
    out = HPolytope(p.H, p.h - box_support_rows(p.H, b))
    if check_empty and out.is_empty():
        raise EmptyResult("Pontryagin difference is empty")
    return out


def pontryagin_diff_boxes(a: Box, b: Box) -> tuple[Box, np.ndarray]:
    """Box minus box.

    Returns the difference and the per-coordinate shortfall (positive where
    ``b`` is wider than ``a``, in which case the result is empty there and
    the returned halfwidth is clamped to zero).
    """
    if a.dim != b.dim:
        raise ValueError("box dimensions differ")
    raw = a.halfwidth - b.halfwidth
    shortfall = np.maximum(-raw, 0.0)
    return Box(a.center - b.center, np.maximum(raw, 0.0)), shortfall


def contains(s: HPolytope | Box, point, tol: float = MEMBERSHIP_TOL) -> bool:
    x = np.asarray(point, dtype=float)
    if isinstance(s, Box):
        return bool(np.all(np.abs(x - s.center) <= s.halfwidth + tol))
    return bool(np.all(s.H @ x <= s.h + tol))


def contains_many(s: HPolytope | Box, points, tol: float = MEMBERSHIP_TOL) -> np.ndarray:
    X = np.atleast_2d(np.asarray(points, dtype=float))
    if isinstance(s, Box):
        return np.all(np.abs(X - s.center) <= s.halfwidth + tol, axis=1)
    return np.all(X @ s.H.T <= s.h + tol, axis=1)
