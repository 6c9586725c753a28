"""Disturbance support, modeling-error hulls and sample-size certificates."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .geometry import Box, linear_map_box, minkowski_sum_boxes, pontryagin_diff_boxes
from .koopman import Dataset, LiftedModel
from .solvers import LpProblem, solve_lp


class SampleOutsideRadius(ValueError):
    pass


class DomainError(ValueError):
    pass


class ModelErrorClampWarning(UserWarning):
    """The error hull is thinner than the disturbance box in some coordinate."""


@dataclass(frozen=True)
class DisturbanceEstimate:
    samples: np.ndarray
    support_box: Box
    epsilon_x: float
    lipschitz_Lx: float

    @property
    def error_bound(self) -> float:
        return self.lipschitz_Lx * self.epsilon_x

    def to_dict(self) -> dict:
        return {
            "n_samples": int(self.samples.shape[0]),
            "support_center": self.support_box.center.tolist(),
            "support_halfwidth": self.support_box.halfwidth.tolist(),
            "epsilon_x": self.epsilon_x,
            "lipschitz_Lx": self.lipschitz_Lx,
            "error_bound": self.error_bound,
        }


def estimate_disturbances(X, Xn, L_x: float, eps_x: float, tol: float = 1e-12) -> DisturbanceEstimate:
    """Take ``w_hat = x+`` from near-origin zero-input pairs.

    The hull of the samples is widened by ``L_x * eps_x`` per side, which
    bounds the estimation error ``|w_hat - w| <= L_x |x|``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Xn = np.asarray(Xn, dtype=float).reshape(X.shape)
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms > eps_x + tol):
        raise SampleOutsideRadius(f"max |x| = {norms.max():.3g} exceeds eps_x = {eps_x:.3g}")
    if L_x < 0 or eps_x < 0:
        raise ValueError("L_x and eps_x must be nonnegative")
    box = Box.hull(Xn).expand(L_x * eps_x)
    return DisturbanceEstimate(Xn.copy(), box, float(eps_x), float(L_x))


@dataclass(frozen=True)
class ModelErrorSets:
    samples: np.ndarray
    total_hull: Box
    model_error: Box
    shortfall: np.ndarray  # amount clamped per coordinate (0 when none)
    n_used: int

    @property
    def clamped(self) -> bool:
        return bool(np.any(self.shortfall > 0))

    def to_dict(self) -> dict:
        return {
            "n_used": self.n_used,
            "total_hull_center": self.total_hull.center.tolist(),
            "total_hull_halfwidth": self.total_hull.halfwidth.tolist(),
            "model_error_center": self.model_error.center.tolist(),
            "model_error_halfwidth": self.model_error.halfwidth.tolist(),
            "clamp_shortfall": self.shortfall.tolist(),
        }


def model_error_samples(model: LiftedModel, data: Dataset) -> np.ndarray:
    S = model.lift(data.X)
    Sn = model.lift(data.Xn)
    return Sn - S @ model.A.T - data.U @ model.B.T


def extract_model_errors(model: LiftedModel, data: Dataset, estimate: DisturbanceEstimate,
                         region: Box | None = None) -> ModelErrorSets:
    """Hull the lifted residuals and remove the disturbance part.

    ``region`` restricts the hull to transitions whose start and end states
    both lie in that box (the operating region of the controller).
    """
    if region is not None:
        keep = region_mask(data, region)
        data = data.subset(keep)
    if len(data) == 0:
        raise ValueError("no transitions left for the error hull")
    W = model_error_samples(model, data)
    hull = Box.hull(W)
    Dw = linear_map_box(model.D, estimate.support_box)
    dset, short = pontryagin_diff_boxes(hull, Dw)
    if np.any(short > 0):
        warnings.warn(
            f"model-error hull clamped to zero width in coordinates {np.flatnonzero(short > 0).tolist()}",
            ModelErrorClampWarning, stacklevel=2)
    return ModelErrorSets(W, hull, dset, short, len(data))


def region_mask(data: Dataset, region: Box) -> np.ndarray:
    lo, hi = region.lower, region.upper
    inside = lambda Z: np.all((Z >= lo) & (Z <= hi), axis=1)  # noqa: E731
    return inside(data.X) & inside(data.Xn)


def hoeffding_required_samples(eps_h: float, delta_h: float) -> int:
    if not (0 < eps_h < 1 and 0 < delta_h < 1):
        raise DomainError("eps_h and delta_h must lie in (0, 1)")
    return math.ceil(-math.log(delta_h / 2) / (2 * eps_h**2))


@dataclass(frozen=True)
class HoeffdingCert:
    eps_h: float
    delta_h: float
    required_N: int
    actual_N: int

    @property
    def valid(self) -> bool:
        return self.actual_N >= self.required_N

    @classmethod
    def build(cls, eps_h, delta_h, actual_N) -> "HoeffdingCert":
        return cls(eps_h, delta_h, hoeffding_required_samples(eps_h, delta_h), int(actual_N))

    def to_dict(self) -> dict:
        return {"eps_h": self.eps_h, "delta_h": self.delta_h, "required_N": self.required_N,
                "actual_N": self.actual_N, "valid": self.valid}


def wasserstein_radius(radius: float, L_x: float = 0.0, eps_x: float = 0.0, inflate: bool = False,
                       c1: float | None = None, c2: float | None = None, beta: float | None = None,
                       n_samples: int | None = None, n_x: int = 1) -> float:
    """Ball radius for the ambiguity set.

    Default: the configured (cross-validated) ``radius``, plus ``L_x*eps_x``
    when ``inflate``.  With ``c1, c2, beta, n_samples`` given, the
    concentration formula is used instead (always inflated).
    """
    shift = L_x * eps_x
    if c1 is not None and c2 is not None:
        if beta is None or n_samples is None:
            raise ValueError("formula path needs beta and n_samples")
        base = max(math.log(c1 / beta), 0.0) / (c2 * n_samples)
        return base ** (1.0 / max(n_x, 2)) + shift
    return float(radius) + (shift if inflate else 0.0)


def wasserstein_distance(P, Q, p_weights=None, q_weights=None, ord=np.inf) -> float:
    """Type-1 Wasserstein distance between two discrete measures (transport LP)."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    n, m = P.shape[0], Q.shape[0]
    a = np.full(n, 1.0 / n) if p_weights is None else np.asarray(p_weights, dtype=float)
    b = np.full(m, 1.0 / m) if q_weights is None else np.asarray(q_weights, dtype=float)
    cost = np.linalg.norm(P[:, None, :] - Q[None, :, :], ord=ord, axis=2).ravel()
    A_eq = np.zeros((n + m, n * m))
    for i in range(n):
        A_eq[i, i * m:(i + 1) * m] = 1.0
    for j in range(m):
        A_eq[n + j, j::m] = 1.0
    # one marginal constraint is implied by the others
    rep = solve_lp(LpProblem(cost, A_eq=A_eq[:-1], b_eq=np.concatenate([a, b])[:-1]))
    if not rep.ok:
        raise RuntimeError(f"transport LP failed: {rep.status}")
    return rep.objective


def empirical_lipschitz(X, Xn) -> float:
    """Rough estimate of L_x from zero-input pairs (display only).

    Fits ``x+ ~ M x + c`` and returns ``|M|_2``; the near-origin drift of a
    smooth map is dominated by its Jacobian there.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Xn = np.asarray(Xn, dtype=float).reshape(X.shape)
    G = np.hstack([X, np.ones((X.shape[0], 1))])
    coef = np.linalg.lstsq(G, Xn, rcond=None)[0]
    return float(np.linalg.norm(coef[:-1].T, 2))


def combined_error_box(errors: ModelErrorSets, estimate: DisturbanceEstimate, D) -> Box:
    """``D_set (+) D W_hat`` as a box."""
    return minkowski_sum_boxes(errors.model_error, linear_map_box(D, estimate.support_box))
