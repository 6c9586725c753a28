"""Experiment configuration: TOML (or JSON) file -> validated dataclass."""
from __future__ import annotations

import copy
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "name": "experiment",
    "seed": 0,
    "plant": {
        "dynamics": "mass_spring",
        "params": {"corrected": False},
        "dt": 0.1,
        "integrator": "rk4",
        "disturbance": [
            {"kind": "uniform", "params": [-0.001, 0.001]},
            {"kind": "uniform", "params": [-0.1, 0.1]},
        ],
    },
    "data": {
        "n_traj": 500,
        "traj_len": 100,
        "x0_std": 1.5,
        "u_mean": -7.0,
        "u_std": 5.0,
        "safety_box": None,
        "n_disturbance": 330,
        "eps_x": 1e-4,
        "L_x": 1.2,
    },
    "dictionary": {"family": "powers", "degree": 3, "constant": True},
    "uncertainty": {"eps_h": 0.05, "delta_h": 0.05, "region": None},
    "dro": {"theta": 1e-4, "alpha": [0.1], "inflate_radius": False},
    "constraints": {"F": [[0.0, 1.0]], "f": [0.6], "G": [[1.0], [-1.0]], "g": [100.0, 100.0]},
    "controller": {"Q": [100.0, 100.0, 1.0, 0.1, 0.1, 0.1, 0.1], "R": [0.1], "N": 5,
                   "terminal_max_iter": 500},
    "montecarlo": {"runs": 500, "T": 60, "x0": [-0.6, 0.0], "threads": 1},
    "sensitivity": {
        "samples": [10, 50, 100, 500, 1000],
        "radii": [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7],
        "alpha": 0.1,
        "distribution": {"kind": "uniform", "params": [-0.1, 0.1]},
        "support": "distribution",
        "repeats": 1,
    },
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "params":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class ExperimentConfig:
    raw: dict
    source: str = ""
    out: Path = field(default_factory=lambda: Path("runs"))

    def __getitem__(self, key):
        return self.raw[key]

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def name(self) -> str:
        return str(self.raw["name"])

    def hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, default=float).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def with_overrides(self, seed=None, runs=None, threads=None, out=None) -> "ExperimentConfig":
        raw = copy.deepcopy(self.raw)
        if seed is not None:
            raw["seed"] = int(seed)
        if runs is not None:
            raw["montecarlo"]["runs"] = int(runs)
        if threads is not None:
            raw["montecarlo"]["threads"] = int(threads)
        cfg = ExperimentConfig(raw, self.source, Path(out) if out is not None else self.out)
        validate(cfg)
        return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        if path.suffix == ".json":
            data = json.loads(text)
        else:
            data = tomllib.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return from_mapping(data, str(path))


def from_mapping(data: dict, source: str = "<mapping>") -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a table")
    unknown = set(data) - set(DEFAULTS) - {"out"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    out = Path(data.get("out", "runs"))
    raw = _merge(DEFAULTS, {k: v for k, v in data.items() if k != "out"})
    cfg = ExperimentConfig(raw, source, out)
    validate(cfg)
    return cfg


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def _mat(x, name):
    try:
        a = np.atleast_2d(np.asarray(x, dtype=float))
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a numeric matrix") from None
    _require(np.all(np.isfinite(a)), f"{name} must be finite")
    return a


def validate(cfg: ExperimentConfig) -> None:
    """Check dimensions and ranges before any stage runs."""
    r = cfg.raw
    p = r["plant"]
    _require(p["dt"] > 0, "plant.dt must be positive")
    _require(p["integrator"] in ("rk4", "euler"), "plant.integrator must be rk4 or euler")
    n_x = int(p.get("n_x", 2))
    n_u = int(p.get("n_u", 1))
    _require(len(p["disturbance"]) == n_x, "plant.disturbance needs one entry per state")
    for d in p["disturbance"]:
        _require(d.get("kind") in ("uniform", "beta_affine", "zero"), f"bad disturbance kind {d.get('kind')}")
    d = r["data"]
    for k in ("n_traj", "traj_len", "n_disturbance"):
        _require(int(d[k]) >= 1, f"data.{k} must be >= 1")
    _require(d["eps_x"] >= 0 and d["L_x"] >= 0, "data.eps_x and data.L_x must be >= 0")
    u = r["uncertainty"]
    _require(0 < u["eps_h"] < 1 and 0 < u["delta_h"] < 1, "uncertainty.eps_h/delta_h must lie in (0,1)")
    if u["region"] is not None:
        _require(len(u["region"]) == n_x, "uncertainty.region needs one halfwidth per state")
    c = r["constraints"]
    F, G = _mat(c["F"], "F"), _mat(c["G"], "G")
    _require(F.shape[1] == n_x, "F must have n_x columns")
    _require(G.shape[1] == n_u, "G must have n_u columns")
    _require(len(c["f"]) == F.shape[0], "f length must match F rows")
    _require(len(c["g"]) == G.shape[0], "g length must match G rows")
    alpha = np.atleast_1d(np.asarray(r["dro"]["alpha"], dtype=float))
    _require(alpha.size in (1, F.shape[0]), "dro.alpha must be scalar or one per F row")
    _require(np.all((alpha > 0) & (alpha < 1)), "dro.alpha must lie in (0,1)")
    _require(r["dro"]["theta"] >= 0, "dro.theta must be >= 0")
    k = r["controller"]
    _require(int(k["N"]) >= 1, "controller.N must be >= 1")
    Q = np.asarray(k["Q"], dtype=float)
    _require(Q.ndim in (1, 2), "controller.Q must be a diagonal list or a matrix")
    R = np.asarray(k["R"], dtype=float)
    _require(R.size in (n_u, n_u * n_u), "controller.R has the wrong size")
    m = r["montecarlo"]
    _require(int(m["runs"]) >= 1 and int(m["T"]) >= 1, "montecarlo.runs and T must be >= 1")
    _require(len(m["x0"]) == n_x, "montecarlo.x0 needs n_x entries")
    _require(int(m["threads"]) >= 1, "montecarlo.threads must be >= 1")
    s = r["sensitivity"]
    _require(0 < s["alpha"] < 1, "sensitivity.alpha must lie in (0,1)")
    _require(s["support"] in ("distribution", "samples"), "sensitivity.support must be distribution or samples")
    _require(all(int(n) >= 1 for n in s["samples"]), "sensitivity.samples must be positive")
    _require(all(t >= 0 for t in s["radii"]), "sensitivity.radii must be nonnegative")


def as_matrix_weight(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    return np.diag(w) if w.ndim == 1 else w
