"""Offline design pipeline: data -> model -> uncertainty -> backoffs -> tubes."""
from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import __version__
from ..controller import ControllerConfig, Gains, synthesize
from ..dro import backoff_vector, robust_backoff_vector
from ..geometry import Box, HPolytope, linear_map_box
from ..koopman import Dictionary, LiftedModel, fit_edmd
from ..plant import DisturbanceSpec, PlantSpec, generate_disturbance_data, generate_training_data
from ..solvers import BACKEND, spectral_radius
from ..tubes import (TubeSet, build_input_tube, build_state_tube, compute_terminal_set, error_box,
                     r_infinity_box)
from ..uncertainty import (DisturbanceEstimate, HoeffdingCert, ModelErrorSets, empirical_lipschitz,
                           estimate_disturbances, extract_model_errors, wasserstein_radius)
from .config import ExperimentConfig, as_matrix_weight

BUNDLE_NAME = "bundle.json"


class StageError(RuntimeError):
    def __init__(self, stage: str, msg: str):
        super().__init__(f"[{stage}] {msg}")
        self.stage = stage


def plant_from_config(cfg: ExperimentConfig) -> PlantSpec:
    p = cfg["plant"]
    return PlantSpec(p["dynamics"], dict(p.get("params", {})), float(p["dt"]), p["integrator"],
                     tuple(DisturbanceSpec(d["kind"], tuple(d.get("params", ()))) for d in p["disturbance"]),
                     int(p.get("n_x", 2)), int(p.get("n_u", 1)))


def stage_seeds(seed: int) -> dict:
    """Independent streams per pipeline stage, derived from the experiment seed."""
    names = ["train", "disturbance", "montecarlo", "sensitivity", "verify"]
    kids = np.random.SeedSequence(seed).spawn(len(names))
    return dict(zip(names, kids))


@dataclass
class Design:
    """Everything the online controller and the reports need."""

    plant: PlantSpec
    model: LiftedModel
    estimate: DisturbanceEstimate
    errors: ModelErrorSets
    hoeffding: HoeffdingCert
    theta: float
    eta: np.ndarray
    eta_info: list
    controller: ControllerConfig
    r_inf_x: Box
    diagnostics: dict


def build_controller(model: LiftedModel, gains: Gains, estimate: DisturbanceEstimate, errors: ModelErrorSets,
                     eta, cfg: ExperimentConfig) -> tuple[ControllerConfig, dict]:
    c = cfg["constraints"]
    N = int(cfg["controller"]["N"])
    F = np.atleast_2d(np.asarray(c["F"], dtype=float))
    G = np.atleast_2d(np.asarray(c["G"], dtype=float))
    D = model.D
    W_hat, D_set = estimate.support_box, errors.model_error
    state_rhs = build_state_tube(F, c["f"], eta, gains.Phi, D, W_hat, D_set, N, model.C)
    input_rhs = build_input_tube(G, c["g"], gains.K, gains.Phi, D, W_hat, D_set, N)
    FC = F @ model.C
    base = HPolytope(np.vstack([FC, G @ gains.K]), np.concatenate([state_rhs[-1], input_rhs[N]]))
    E = error_box(D, W_hat, D_set)
    W_term = linear_map_box(np.linalg.matrix_power(gains.Phi, N), E)
    t0 = time.perf_counter()
    term = compute_terminal_set(base, gains.Phi, W_term, int(cfg["controller"]["terminal_max_iter"]))
    info = {"terminal_iterations": term.iterations, "terminal_rows": term.n_rows,
            "terminal_seconds": time.perf_counter() - t0}
    tube = TubeSet(FC, state_rhs, G, input_rhs, term.polytope, np.asarray(eta, dtype=float), info)
    return ControllerConfig(model, gains, tube, N), info


def run_design(cfg: ExperimentConfig, robust: bool = False) -> Design:
    seeds = stage_seeds(cfg.seed)
    d = cfg["data"]
    try:
        plant = plant_from_config(cfg)
    except ValueError as exc:
        raise StageError("plant", str(exc)) from None

    stage = "data"
    try:
        train, train_info = generate_training_data(
            plant, int(d["n_traj"]), int(d["traj_len"]), np.random.default_rng(seeds["train"]),
            u_mean=float(d["u_mean"]), u_std=float(d["u_std"]), x0_std=float(d["x0_std"]),
            safety_box=d["safety_box"])
        dw = generate_disturbance_data(plant, float(d["eps_x"]), int(d["n_disturbance"]),
                                       np.random.default_rng(seeds["disturbance"]))
        stage = "fit"
        dic = Dictionary.from_spec(plant.n_x, cfg["dictionary"])
        model = fit_edmd(dic, train)
        stage = "uncertainty"
        estimate = estimate_disturbances(dw.X, dw.Xn, float(d["L_x"]), float(d["eps_x"]))
        reg = cfg["uncertainty"]["region"]
        region = None if reg is None else Box(np.zeros(plant.n_x), np.asarray(reg, dtype=float))
        errors = extract_model_errors(model, train, estimate, region)
        hoeff = HoeffdingCert.build(cfg["uncertainty"]["eps_h"], cfg["uncertainty"]["delta_h"], errors.n_used)
        stage = "dro"
        dro = cfg["dro"]
        theta = wasserstein_radius(float(dro["theta"]), estimate.lipschitz_Lx, estimate.epsilon_x,
                                   inflate=bool(dro["inflate_radius"]))
        F = np.atleast_2d(np.asarray(cfg["constraints"]["F"], dtype=float))
        if robust:
            eta = robust_backoff_vector(F, estimate.support_box)
            eta_info = [{"eta": float(e), "kind": "robust"} for e in eta]
        else:
            eta, res = backoff_vector(F, dro["alpha"], estimate.samples, estimate.support_box, theta)
            eta_info = [{"eta": r.eta, "clamped": r.clamped, "support_bound": r.support_bound} for r in res]
        stage = "controller"
        Q = as_matrix_weight(cfg["controller"]["Q"])
        R = as_matrix_weight(cfg["controller"]["R"])
        gains = synthesize(model, Q, R)
        stage = "tubes"
        ctrl, tinfo = build_controller(model, gains, estimate, errors, eta, cfg)
    except StageError:
        raise
    except (ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        raise StageError(stage, f"{type(exc).__name__}: {exc}") from exc

    E = error_box(model.D, estimate.support_box, errors.model_error)
    r_inf = r_infinity_box(gains.Phi, E)
    r_inf_x = linear_map_box(model.C, r_inf)
    diag = {
        "training": train_info,
        "fit": model.stats,
        "ridge_used": model.ridge_used,
        "empirical_Lx": empirical_lipschitz(dw.X, dw.Xn),
        "spectral_radius_Phi": spectral_radius(gains.Phi),
        "tubes": tinfo,
        "robust": robust,
        "backend": BACKEND,
    }
    return Design(plant, model, estimate, errors, hoeff, theta, np.asarray(eta), eta_info, ctrl, r_inf_x, diag)


def bundle_dict(design: Design, cfg: ExperimentConfig) -> dict:
    ctrl = design.controller
    return {
        "schema": "kdrmpc-bundle/1",
        "provenance": {"seed": cfg.seed, "config_hash": cfg.hash(), "config_source": cfg.source,
                       "version": __version__, "created": time.strftime("%Y-%m-%dT%H:%M:%S")},
        "config": cfg.raw,
        "plant": design.plant.to_dict(),
        "model": design.model.to_dict(),
        "uncertainty": {
            "disturbance": design.estimate.to_dict(),
            "disturbance_samples": design.estimate.samples.tolist(),
            "model_error": design.errors.to_dict(),
            "hoeffding": design.hoeffding.to_dict(),
        },
        "dro": {"theta": design.theta, "eta": design.eta.tolist(), "rows": design.eta_info},
        "tubes": ctrl.tube.to_dict(),
        "controller": ctrl.to_dict(),
        "r_inf_x": {"center": design.r_inf_x.center.tolist(), "halfwidth": design.r_inf_x.halfwidth.tolist()},
        "diagnostics": design.diagnostics,
    }


BUNDLE_KEYS = ("schema", "provenance", "config", "plant", "model", "uncertainty", "dro", "tubes",
               "controller", "r_inf_x", "diagnostics")


def validate_bundle(b: dict) -> list[str]:
    """Structural check; returns a list of problems (empty when valid)."""
    problems = [f"missing key {k}" for k in BUNDLE_KEYS if k not in b]
    if problems:
        return problems
    if b["schema"] != "kdrmpc-bundle/1":
        problems.append("unknown schema")
    n = len(b["model"]["A"])
    if any(len(r) != n for r in b["model"]["A"]):
        problems.append("model.A is not square")
    N = b["controller"]["N"]
    if len(b["tubes"]["state_rhs"]) != N or len(b["tubes"]["input_rhs"]) != N + 1:
        problems.append("tube lengths do not match the horizon")
    if len(b["tubes"]["terminal_H"]) != len(b["tubes"]["terminal_h"]):
        problems.append("terminal set rows and rhs differ in length")
    if any(e < 0 for e in b["dro"]["eta"]):
        problems.append("negative backoff")
    return problems


def write_bundle(design: Design, cfg: ExperimentConfig, out: Path) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / BUNDLE_NAME
    path.write_text(json.dumps(bundle_dict(design, cfg), sort_keys=True, indent=1, default=_jsonable))
    return path


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not serializable: {type(o)}")


def load_bundle(path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / BUNDLE_NAME
    return json.loads(path.read_text())


def controller_from_bundle(b: dict) -> ControllerConfig:
    model = LiftedModel.from_dict(b["model"])
    c = b["controller"]
    gains = Gains(np.array(c["K"]), np.array(c["P"]), np.array(c["Pi"]), np.array(c["Phi"]),
                  np.array(c["Qbar"]), np.array(c["R"]), np.array(c["P"]))
    tube = TubeSet.from_dict(b["tubes"])
    return ControllerConfig(model, gains, tube, int(c["N"]))
