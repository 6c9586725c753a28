"""Observable dictionaries and EDMD identification of lifted linear models."""
from __future__ import annotations

import csv
import itertools
import json
from dataclasses import dataclass, field

import numpy as np

RIDGE = 1e-8
COND_LIMIT = 1e12


class NonFinite(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    """Transition triples ``(x, u, x_next)`` stored row-wise."""

    X: np.ndarray
    U: np.ndarray
    Xn: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        Xn = np.asarray(self.Xn, dtype=float).reshape(X.shape)
        U = np.asarray(self.U, dtype=float).reshape(X.shape[0], -1)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "Xn", Xn)

    def __len__(self):
        return self.X.shape[0]

    @property
    def n_x(self) -> int:
        return self.X.shape[1]

    @property
    def n_u(self) -> int:
        return self.U.shape[1]

    def subset(self, mask) -> "Dataset":
        return Dataset(self.X[mask], self.U[mask], self.Xn[mask])


def _term_name(exps) -> str:
    parts = []
    for i, e in enumerate(exps):
        if e == 1:
            parts.append(f"x{i + 1}")
        elif e > 1:
            parts.append(f"x{i + 1}^{e}")
    return "*".join(parts) if parts else "1"


@dataclass(frozen=True)
class Dictionary:
    """Monomial observables; the first ``n_x`` entries are the state itself.

    ``terms`` holds exponent tuples for the observables after the identity
    block.  Lifting subtracts the raw value at the origin so that
    ``lift(0) == 0``; a constant term therefore becomes an all-zero slot.
    """

    n_x: int
    terms: tuple = ()
    spec: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        terms = tuple(tuple(int(e) for e in t) for t in self.terms)
        for t in terms:
            if len(t) != self.n_x or min(t) < 0:
                raise ValueError(f"bad exponent tuple {t}")
        ident = {tuple(int(i == j) for i in range(self.n_x)) for j in range(self.n_x)}
        if ident & set(terms):
            raise ValueError("identity observables are implicit; do not list them")
        if len(set(terms)) != len(terms):
            raise ValueError("duplicate observables")
        object.__setattr__(self, "terms", terms)
        exps = [tuple(int(i == j) for i in range(self.n_x)) for j in range(self.n_x)] + list(terms)
        object.__setattr__(self, "_exps", np.array(exps, dtype=int).reshape(-1, self.n_x))
        object.__setattr__(self, "_offset", (self._exps.sum(axis=1) == 0).astype(float))

    @classmethod
    def from_spec(cls, n_x: int, spec: dict | None = None) -> "Dictionary":
        """Build from a config mapping.

        ``family``: ``"identity"``, ``"powers"`` (x_i^k only) or
        ``"monomials"`` (all products up to ``degree``); ``constant`` adds
        the constant observable; ``extra`` lists further exponent tuples.
        """
        spec = dict(spec or {})
        family = spec.get("family", "powers")
        degree = int(spec.get("degree", 1))
        terms = []
        if spec.get("constant", False):
            terms.append((0,) * n_x)
        if family == "identity":
            pass
        elif family == "powers":
            for k in range(2, degree + 1):
                for i in range(n_x):
                    terms.append(tuple(k if j == i else 0 for j in range(n_x)))
        elif family == "monomials":
            for k in range(2, degree + 1):
                for combo in itertools.combinations_with_replacement(range(n_x), k):
                    terms.append(tuple(combo.count(j) for j in range(n_x)))
        else:
            raise ValueError(f"unknown dictionary family {family!r}")
        for t in spec.get("extra", []):
            t = tuple(int(e) for e in t)
            if t not in terms:
                terms.append(t)
        spec.setdefault("family", family)
        spec.setdefault("degree", degree)
        return cls(n_x, tuple(terms), spec)

    @property
    def n(self) -> int:
        return self.n_x + len(self.terms)

    @property
    def names(self) -> list[str]:
        return [_term_name(e) for e in self._exps]

    @property
    def zero_slots(self) -> np.ndarray:
        """Indices that are identically zero after the origin shift."""
        return np.flatnonzero(self._offset)

    def lift(self, x) -> np.ndarray:
        """Lift one state (shape ``(n_x,)``) or a batch (shape ``(N, n_x)``)."""
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)):
            raise NonFinite("state contains NaN or Inf")
        single = x.ndim == 1
        Xb = np.atleast_2d(x)
        if Xb.shape[1] != self.n_x:
            raise ValueError(f"expected state dimension {self.n_x}")
        out = np.prod(Xb[:, None, :] ** self._exps[None, :, :], axis=2) - self._offset
        return out[0] if single else out

    def to_spec(self) -> dict:
        return {"n_x": self.n_x, "terms": [list(t) for t in self.terms], "names": self.names}


def lift(d: Dictionary, x) -> np.ndarray:
    return d.lift(x)


@dataclass(frozen=True)
class LiftedModel:
    A: np.ndarray
    B: np.ndarray
    dictionary: Dictionary
    stats: dict = field(default_factory=dict, compare=False)
    ridge_used: bool = False

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        B = np.asarray(self.B, dtype=float).reshape(A.shape[0], -1)
        if A.shape != (self.dictionary.n, self.dictionary.n):
            raise ValueError("A does not match dictionary size")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def n_x(self) -> int:
        return self.dictionary.n_x

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def C(self) -> np.ndarray:
        return np.hstack([np.eye(self.n_x), np.zeros((self.n_x, self.n - self.n_x))])

    @property
    def D(self) -> np.ndarray:
        return self.C.T.copy()

    def lift(self, x):
        return self.dictionary.lift(x)

    def to_dict(self) -> dict:
        return {
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "dictionary": self.dictionary.to_spec(),
            "ridge_used": self.ridge_used,
            "stats": self.stats,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LiftedModel":
        spec = d["dictionary"]
        dic = Dictionary(int(spec["n_x"]), tuple(tuple(t) for t in spec["terms"]))
        return cls(np.array(d["A"]), np.array(d["B"]), dic, d.get("stats", {}), bool(d.get("ridge_used", False)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "LiftedModel":
        return cls.from_dict(json.loads(text))


def predict_nominal(model: LiftedModel, s, u) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if s.shape != (model.n,) or u.shape != (model.n_u,):
        raise ValueError("dimension mismatch")
    return model.A @ s + model.B @ u


def edmd_objective(model: LiftedModel, data: Dataset) -> float:
    S = model.lift(data.X)
    Sn = model.lift(data.Xn)
    R = Sn - S @ model.A.T - data.U @ model.B.T
    return float(np.sum(R * R))


def fit_edmd(d: Dictionary, data: Dataset) -> LiftedModel:
    """Least-squares ``(A, B)`` minimising ``sum |lift(x+) - A lift(x) - B u|^2``.

    Regressor columns that are identically zero (the shifted constant slot)
    are left out and get zero coefficients.  If the remaining Gram matrix is
    still ill-conditioned a small ridge term is added and flagged.
    """
    if data.n_x != d.n_x:
        raise ValueError("dataset state dimension does not match dictionary")
    n, n_u = d.n, data.n_u
    if len(data) < n + n_u:
        raise ValueError(f"need at least {n + n_u} samples, got {len(data)}")
    if not (np.all(np.isfinite(data.X)) and np.all(np.isfinite(data.U)) and np.all(np.isfinite(data.Xn))):
        raise NonFinite("dataset contains NaN or Inf")
    S = d.lift(data.X)
    Y = d.lift(data.Xn)
    G = np.hstack([S, data.U])
    active = np.flatnonzero(np.any(G != 0.0, axis=0))
    Ga = G[:, active]
    gram = Ga.T @ Ga
    cond = float(np.linalg.cond(gram)) if active.size else np.inf
    ridge = not np.isfinite(cond) or cond > COND_LIMIT
    if ridge:
        theta_a = np.linalg.solve(gram + RIDGE * np.eye(active.size), Ga.T @ Y)
    else:
        theta_a = np.linalg.lstsq(Ga, Y, rcond=None)[0]
    theta = np.zeros((n + n_u, n))
    theta[active] = theta_a
    A = theta[:n].T
    B = theta[n:].T
    R = Y - G @ theta
    normal = Ga.T @ (Ga @ theta_a - Y)
    scale = max(1.0, float(np.max(np.abs(Ga.T @ Y))))
    per = np.linalg.norm(R, axis=1)
    stats = {
        "n_samples": len(data),
        "gram_condition": cond,
        "normal_eq_residual_rel": float(np.max(np.abs(normal))) / scale,
        "residual_norm_mean": float(per.mean()),
        "residual_norm_max": float(per.max()),
        "residual_rms_per_coord": np.sqrt(np.mean(R * R, axis=0)).tolist(),
        "zero_slots": d.zero_slots.tolist(),
    }
    return LiftedModel(A, B, d, stats, ridge)


def write_dataset(path, data: Dataset, include_inputs: bool = True) -> None:
    nx, nu = data.n_x, data.n_u
    header = [f"x{i + 1}" for i in range(nx)]
    cols = [data.X]
    if include_inputs:
        header += [f"u{i + 1}" for i in range(nu)]
        cols.append(data.U)
    header += [f"xn{i + 1}" for i in range(nx)]
    cols.append(data.Xn)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in np.hstack(cols):
            w.writerow([repr(float(v)) for v in row])


def read_dataset(path) -> Dataset:
    """Read a CSV with header ``x1..xn[,u1..um],xn1..xnn``."""
    with open(path, newline="") as fh:
        header = next(csv.reader(fh))
    nx = sum(1 for h in header if h.startswith("x") and not h.startswith("xn"))
    nu = sum(1 for h in header if h.startswith("u"))
    if nx == 0 or len(header) != 2 * nx + nu:
        raise ValueError(f"unrecognised dataset header {header}")
    M = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    U = M[:, nx:nx + nu] if nu else np.zeros((M.shape[0], 0))
    return Dataset(M[:, :nx], U, M[:, nx + nu:])
