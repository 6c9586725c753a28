"""Backoff sensitivity to sample count and ball radius."""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..dro import DroInstance, compute_backoff
from ..geometry import Box
from ..plant import DisturbanceSpec


@dataclass
class SensitivityTable:
    samples: list
    radii: list
    eta: np.ndarray  # (len(samples), len(radii))
    clamped: np.ndarray
    alpha: float
    seconds: float

    def to_dict(self) -> dict:
        return {"samples": self.samples, "radii": self.radii, "eta": self.eta.tolist(),
                "clamped": self.clamped.tolist(), "alpha": self.alpha, "seconds": self.seconds}


def run_sensitivity(samples, radii, dist: DisturbanceSpec, alpha: float, seed, support: str = "distribution",
                    repeats: int = 1) -> SensitivityTable:
    """One fresh sample set per (row, repeat), shared across the radii of that row.

    ``support`` selects the polyhedral support used in the LP: the declared
    support of the distribution or the hull of the drawn samples.
    Repeats are averaged.
    """
    t0 = time.perf_counter()
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    seqs = ss.spawn(len(samples))
    eta = np.zeros((len(samples), len(radii)))
    clamped = np.zeros((len(samples), len(radii)), dtype=bool)
    for i, (n, ss) in enumerate(zip(samples, seqs)):
        for r, sub in enumerate(ss.spawn(repeats)):
            rng = np.random.default_rng(sub)
            xi = dist.sample(rng, int(n)).reshape(-1, 1)
            box = Box.from_bounds([dist.support[0]], [dist.support[1]]) if support == "distribution" \
                else Box.hull(xi)
            for j, th in enumerate(radii):
                res = compute_backoff(DroInstance.from_box([1.0], xi, box, alpha, float(th)))
                eta[i, j] += res.eta / repeats
                clamped[i, j] |= res.clamped
    return SensitivityTable(list(samples), list(radii), eta, clamped, alpha, time.perf_counter() - t0)


def write_table(table: SensitivityTable, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["samples"] + [f"{r:g}" for r in table.radii])
        for n, row in zip(table.samples, table.eta):
            w.writerow([n] + [repr(float(v)) for v in row])


def slope_errors(eta_row, radii, alpha, clamped_row) -> list[float]:
    """Deviation of adjacent unclamped differences from ``d theta / alpha``."""
    out = []
    for j in range(len(radii) - 1):
        if clamped_row[j] or clamped_row[j + 1]:
            continue
        expect = (radii[j] - radii[j + 1]) / alpha
        out.append(abs((eta_row[j] - eta_row[j + 1]) - expect))
    return out
