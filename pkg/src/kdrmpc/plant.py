"""Ground-truth nonlinear plant: vector fields, integrators, disturbances."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .koopman import Dataset


def _mass_spring(x, u, p):
    # the literal form drives x1 by itself; the corrected form is x1' = x2
    x1, x2 = x[0], x[1]
    first = x2 if p.get("corrected", False) else x1
    return np.array([first, -p.get("k3", 1.0) * x1**3 - p.get("c", 1.5) * x2 + p.get("b", 0.5) * u[0]])


def _linear(x, u, p):
    return np.asarray(p["A"], dtype=float) @ x + np.asarray(p["B"], dtype=float) @ u


def _decay(x, u, p):
    return -p.get("rate", 1.0) * x


VECTOR_FIELDS = {"mass_spring": _mass_spring, "linear": _linear, "decay": _decay}


@dataclass(frozen=True)
class DisturbanceSpec:
    """Per-coordinate disturbance law.

    ``kind`` is ``uniform`` (``lo, hi``), ``beta_affine`` (``a, b, scale,
    shift``: ``scale * (Beta(a, b) + shift)``) or ``zero``.
    """

    kind: str = "zero"
    params: tuple = ()

    def __post_init__(self):
        need = {"zero": 0, "uniform": 2, "beta_affine": 4}
        if self.kind not in need:
            raise ValueError(f"unknown disturbance kind {self.kind!r}")
        p = tuple(float(v) for v in self.params)
        if len(p) != need[self.kind]:
            raise ValueError(f"{self.kind} takes {need[self.kind]} parameters")
        if self.kind == "uniform" and p[0] > p[1]:
            raise ValueError("uniform needs lo <= hi")
        if self.kind == "beta_affine" and (p[0] <= 0 or p[1] <= 0):
            raise ValueError("beta shape parameters must be positive")
        object.__setattr__(self, "params", p)

    @property
    def support(self) -> tuple[float, float]:
        if self.kind == "zero":
            return 0.0, 0.0
        if self.kind == "uniform":
            return self.params
        _, _, scale, shift = self.params
        ends = sorted([scale * shift, scale * (1.0 + shift)])
        return ends[0], ends[1]

    def sample(self, rng, size=None):
        if self.kind == "zero":
            return np.zeros(size) if size is not None else 0.0
        if self.kind == "uniform":
            return rng.uniform(self.params[0], self.params[1], size)
        a, b, scale, shift = self.params
        ga = rng.standard_gamma(a, size)
        gb = rng.standard_gamma(b, size)
        return scale * (ga / (ga + gb) + shift)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": list(self.params)}


@dataclass(frozen=True)
class PlantSpec:
    dynamics: str = "mass_spring"
    params: dict = field(default_factory=dict)
    dt: float = 0.1
    integrator: str = "rk4"
    disturbance: tuple = ()
    n_x: int = 2
    n_u: int = 1

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("sampling period must be positive")
        if self.dynamics not in VECTOR_FIELDS:
            raise ValueError(f"unknown vector field {self.dynamics!r}")
        if self.integrator not in ("rk4", "euler"):
            raise ValueError(f"unknown integrator {self.integrator!r}")
        dist = tuple(d if isinstance(d, DisturbanceSpec) else DisturbanceSpec(**d) for d in self.disturbance)
        if not dist:
            dist = tuple(DisturbanceSpec() for _ in range(self.n_x))
        if len(dist) != self.n_x:
            raise ValueError("need one disturbance law per state coordinate")
        object.__setattr__(self, "disturbance", dist)

    def vector_field(self, x, u):
        return VECTOR_FIELDS[self.dynamics](x, u, self.params)

    def with_disturbance(self, dist) -> "PlantSpec":
        return PlantSpec(self.dynamics, self.params, self.dt, self.integrator, tuple(dist), self.n_x, self.n_u)

    @property
    def support_box(self):
        from .geometry import Box

        lo, hi = zip(*(d.support for d in self.disturbance))
        return Box.from_bounds(lo, hi)

    def to_dict(self) -> dict:
        return {"dynamics": self.dynamics, "params": self.params, "dt": self.dt, "integrator": self.integrator,
                "disturbance": [d.to_dict() for d in self.disturbance], "n_x": self.n_x, "n_u": self.n_u}


def discretize(spec: PlantSpec, x, u) -> np.ndarray:
    """Noise-free one-step map ``f_d(x, u)``."""
    x = np.asarray(x, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    f, h = spec.vector_field, spec.dt
    if spec.integrator == "euler":
        return x + h * f(x, u)
    k1 = f(x, u)
    k2 = f(x + 0.5 * h * k1, u)
    k3 = f(x + 0.5 * h * k2, u)
    k4 = f(x + h * k3, u)
    return x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def sample_disturbance(spec: PlantSpec, rng, size=None) -> np.ndarray:
    if size is None:
        return np.array([d.sample(rng) for d in spec.disturbance])
    return np.stack([d.sample(rng, size) for d in spec.disturbance], axis=-1)


def step(spec: PlantSpec, x, u, rng, w=None) -> np.ndarray:
    """``x+ = f_d(x, u) + w``; ``w`` is drawn from the disturbance laws unless given."""
    if w is None:
        w = sample_disturbance(spec, rng)
    return discretize(spec, x, u) + w


@dataclass
class Trajectory:
    states: np.ndarray
    inputs: np.ndarray
    disturbances: np.ndarray
    objective: np.ndarray
    solve_time: np.ndarray
    status: str = "ok"  # ok | infeasible
    candidate_ok: np.ndarray | None = None

    def __post_init__(self):
        T = self.inputs.shape[0]
        if self.states.shape[0] != T + 1 or self.disturbances.shape[0] != T:
            raise ValueError("trajectory lengths are inconsistent")
        if self.objective.shape[0] != T or self.solve_time.shape[0] != T:
            raise ValueError("per-step records have the wrong length")

    @property
    def T(self) -> int:
        return self.inputs.shape[0]


def spawn_rngs(seed, n: int) -> list:
    """Independent generators, one per trajectory, from one seed."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(n)]


def generate_training_data(spec: PlantSpec, n_traj: int, traj_len: int, rng, u_mean=-7.0, u_std=5.0,
                           x0_std=1.5, safety_box=None) -> tuple[Dataset, dict]:
    """Random-input trajectories.  A trajectory stops at the first step whose
    successor leaves ``safety_box`` (|x_i| <= safety_box[i]); that transition
    is dropped."""
    seeds = rng.bit_generator.seed_seq.spawn(n_traj) if hasattr(rng.bit_generator, "seed_seq") else None
    X, U, Xn = [], [], []
    truncated = 0
    limit = None if safety_box is None else np.broadcast_to(np.asarray(safety_box, dtype=float), (spec.n_x,))
    for t in range(n_traj):
        r = np.random.default_rng(seeds[t]) if seeds is not None else rng
        x = r.normal(0.0, x0_std, spec.n_x)
        for _ in range(traj_len):
            u = r.normal(u_mean, u_std, spec.n_u)
            xn = step(spec, x, u, r)
            if limit is not None and np.any(np.abs(xn) > limit):
                truncated += 1
                break
            X.append(x)
            U.append(u)
            Xn.append(xn)
            x = xn
    data = Dataset(np.array(X).reshape(-1, spec.n_x), np.array(U).reshape(-1, spec.n_u),
                   np.array(Xn).reshape(-1, spec.n_x))
    return data, {"n_traj": n_traj, "traj_len": traj_len, "n_samples": len(data), "truncated": truncated}


def generate_disturbance_data(spec: PlantSpec, eps_x: float, n: int, rng) -> Dataset:
    """Zero-input single steps from states drawn uniformly in the ball ``|x| <= eps_x``."""
    d = rng.standard_normal((n, spec.n_x))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = eps_x * rng.uniform(0.0, 1.0, n) ** (1.0 / spec.n_x)
    X = d * r[:, None]
    U = np.zeros((n, spec.n_u))
    Xn = np.array([step(spec, x, u, rng) for x, u in zip(X, U)])
    return Dataset(X, U, Xn)
