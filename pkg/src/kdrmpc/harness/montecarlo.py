"""Closed-loop Monte-Carlo runs and their aggregate statistics."""
from __future__ import annotations

import csv
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..controller import ControllerConfig, InfeasibleAtState, control_step, shift_candidate
from ..geometry import Box
from ..plant import PlantSpec, Trajectory, spawn_rngs, step
from .svg import line_chart


def run_trajectory(ctrl: ControllerConfig, plant: PlantSpec, x0, T: int, rng,
                   disturbance_free: bool = False) -> Trajectory:
    """Closed loop for ``T`` steps.  An infeasible solve ends the run; the
    remaining entries are padded with NaN and the status records it."""
    nx, nu = plant.n_x, plant.n_u
    X = np.full((T + 1, nx), np.nan)
    U = np.full((T, nu), np.nan)
    W = np.full((T, nx), np.nan)
    J = np.full(T, np.nan)
    tt = np.full(T, np.nan)
    cand = np.ones(T, dtype=bool)
    X[0] = x = np.asarray(x0, dtype=float)
    status = "ok"
    c_prev = None
    for k in range(T):
        if c_prev is not None:
            cand[k], _ = ctrl.candidate_feasible(ctrl.model.lift(x), shift_candidate(c_prev))
        try:
            u, sol = control_step(ctrl, x)
        except InfeasibleAtState:
            status = "infeasible"
            break
        w = np.zeros(nx) if disturbance_free else None
        xn = step(plant, x, u, rng, w)
        if w is None:
            from ..plant import discretize

            w = xn - discretize(plant, x, u)
        U[k], W[k], J[k], tt[k] = u, w, sol.objective, sol.wall_time
        X[k + 1] = x = xn
        c_prev = sol.c
    return Trajectory(X, U, W, J, tt, status, cand)


@dataclass
class MonteCarloReport:
    runs: int
    T: int
    satisfaction: np.ndarray  # (T, n_rows): rate of F x_k <= f at k = 1..T
    mean: np.ndarray  # (T+1, n_x)
    q90: np.ndarray  # (T+1, n_x)
    infeasible: int
    candidate_failures: int
    solve_time_mean: float
    solve_time_std: float
    solve_time_p95: float
    final_norm_of_mean: float
    mean_final_norm: float
    terminal_in_rinf: int
    extra: dict = field(default_factory=dict)

    @property
    def min_satisfaction(self) -> float:
        return float(np.min(self.satisfaction))

    def to_dict(self) -> dict:
        return {
            "runs": self.runs, "T": self.T,
            "min_satisfaction": self.min_satisfaction,
            "satisfaction": self.satisfaction.tolist(),
            "infeasible": self.infeasible,
            "candidate_failures": self.candidate_failures,
            "solve_time_mean": self.solve_time_mean,
            "solve_time_std": self.solve_time_std,
            "solve_time_p95": self.solve_time_p95,
            "final_norm_of_mean": self.final_norm_of_mean,
            "mean_final_norm": self.mean_final_norm,
            "terminal_in_rinf": self.terminal_in_rinf,
            "peak_mean": self.mean.max(axis=0).tolist(),
            **self.extra,
        }


def satisfaction_rates(states, F, f) -> np.ndarray:
    """Fraction of runs with ``F x_k <= f`` for k = 1..T, per row.

    Runs that stopped early count as violations from that step on (NaN
    compares false)."""
    S = np.asarray(states)[:, 1:, :]
    with np.errstate(invalid="ignore"):
        ok = np.einsum("rkx,jx->rkj", S, np.atleast_2d(F)) <= np.asarray(f)
    return ok.mean(axis=0)


def aggregate(trajs: list[Trajectory], F, f, r_inf_x: Box | None, tol: float = 1e-6) -> MonteCarloReport:
    X = np.array([t.states for t in trajs])
    T = trajs[0].T
    sat = satisfaction_rates(X, F, f)
    times = np.concatenate([t.solve_time[np.isfinite(t.solve_time)] for t in trajs])
    finals = X[:, -1, :]
    done = np.all(np.isfinite(finals), axis=1)
    inside = 0
    if r_inf_x is not None:
        inside = int(sum(np.all(np.abs(x - r_inf_x.center) <= r_inf_x.halfwidth + tol) for x in finals[done]))
    # runs that all stopped early leave all-NaN slices; NaN is the right answer there
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mean = np.nanmean(X, axis=0)
        q90 = np.nanquantile(X, 0.9, axis=0)
        final_mean = np.nanmean(finals, axis=0)
        mean_final_norm = float(np.nanmean(np.linalg.norm(finals, axis=1)))
    return MonteCarloReport(
        runs=len(trajs), T=T, satisfaction=sat, mean=mean, q90=q90,
        infeasible=sum(t.status == "infeasible" for t in trajs),
        candidate_failures=int(sum((~t.candidate_ok).sum() for t in trajs)),
        solve_time_mean=float(times.mean()) if times.size else np.nan,
        solve_time_std=float(times.std()) if times.size else np.nan,
        solve_time_p95=float(np.quantile(times, 0.95)) if times.size else np.nan,
        final_norm_of_mean=float(np.linalg.norm(final_mean)),
        mean_final_norm=mean_final_norm,
        terminal_in_rinf=inside,
    )


def run_montecarlo(ctrl: ControllerConfig, plant: PlantSpec, x0, runs: int, T: int, seed,
                   threads: int = 1) -> list[Trajectory]:
    """Independent runs, one RNG stream each; results do not depend on
    ``threads``.  Each worker thread gets its own solver workspace."""
    rngs = spawn_rngs(seed, runs)
    if threads <= 1:
        return [run_trajectory(ctrl, plant, x0, T, r) for r in rngs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda r: run_trajectory(ctrl, plant, x0, T, r), rngs))


def write_outputs(report: MonteCarloReport, trajs: list[Trajectory], F, f, out: Path, label: str) -> dict:
    """CSV files are the authoritative record; SVG charts are drawn from them."""
    out.mkdir(parents=True, exist_ok=True)
    n_x = report.mean.shape[1]
    traj_path = out / f"{label}_trajectories.csv"
    with open(traj_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run", "k"] + [f"x{i + 1}" for i in range(n_x)] +
                   [f"u{i + 1}" for i in range(trajs[0].inputs.shape[1])] + ["objective", "solve_time", "status"])
        for r, t in enumerate(trajs):
            for k in range(t.T + 1):
                u = t.inputs[k] if k < t.T else np.full(t.inputs.shape[1], np.nan)
                J = t.objective[k] if k < t.T else np.nan
                st = t.solve_time[k] if k < t.T else np.nan
                w.writerow([r, k] + [repr(float(v)) for v in t.states[k]] + [repr(float(v)) for v in u] +
                           [repr(float(J)), repr(float(st)), t.status])
    steps_path = out / f"{label}_steps.csv"
    F = np.atleast_2d(F)
    with open(steps_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k"] + [f"mean_x{i + 1}" for i in range(n_x)] + [f"q90_x{i + 1}" for i in range(n_x)] +
                   [f"sat_row{j}" for j in range(F.shape[0])])
        for k in range(report.T + 1):
            sat = report.satisfaction[k - 1] if k > 0 else np.ones(F.shape[0])
            w.writerow([k] + [repr(float(v)) for v in report.mean[k]] + [repr(float(v)) for v in report.q90[k]] +
                       [repr(float(v)) for v in sat])
    plots = []
    ks = list(range(report.T + 1))
    for j, row in enumerate(F):
        nz = np.flatnonzero(row)
        if nz.size != 1:
            continue
        i = int(nz[0])
        bound = float(f[j] / row[i])
        path = out / f"{label}_x{i + 1}.svg"
        path.write_text(line_chart(
            ks, {f"mean x{i + 1}": report.mean[:, i].tolist(), f"90% quantile x{i + 1}": report.q90[:, i].tolist()},
            hlines={f"constraint x{i + 1} = {bound:g}": bound}, title=f"{label}: x{i + 1}", xlabel="k",
            ylabel=f"x{i + 1}"))
        plots.append(str(path))
    return {"trajectories_csv": str(traj_path), "steps_csv": str(steps_path), "plots": plots}
