"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Workloads: the dense simplex on CVaR-DRO LPs of growing sample count, a
dense random LP, and ADMM on random box-constrained QPs. Every workload is
solved with both backends and the results are checked for agreement.
"""
import argparse
import json
import time

import numpy as np

from kdrmpc.dro import DroInstance, build_cvar_dro_lp
from kdrmpc.geometry import Box
from kdrmpc.solvers import LpProblem, QpProblem, _backend, available_backends, solve_lp, solve_qp


def dro_lp(n_samples, seed=0):
    rng = np.random.default_rng(seed)
    xi = rng.uniform(-0.1, 0.1, size=(n_samples, 1))
    return build_cvar_dro_lp(DroInstance.from_box([1.0], xi, Box([0.0], [0.1]), 0.1, 1e-4))


def random_lp(n, m, seed=0):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(m, n))
    b = rng.uniform(1.0, 2.0, size=m)
    return LpProblem(rng.normal(size=n), A, b, bounds=[(-5.0, 5.0)] * n)


def random_qp(n, m, seed=0):
    rng = np.random.default_rng(seed)
    L = rng.normal(size=(n, n))
    P = L @ L.T + 0.1 * np.eye(n)
    A = rng.normal(size=(m, n))
    return QpProblem(P, rng.normal(size=n) * 10, A, rng.uniform(0.5, 1.0, size=m))


def workloads():
    for n in (20, 50, 100):
        p = dro_lp(n)
        yield f"simplex dro N={n}", lambda p=p: solve_lp(p, "simplex")
    p = random_lp(60, 120)
    yield "simplex random 60x120", lambda: solve_lp(p, "simplex")
    for n, m in ((10, 30), (40, 120)):
        q = random_qp(n, m)
        yield f"admm qp n={n} m={m}", lambda q=q: solve_qp(q)


def time_call(fn, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", default=None)
    args = ap.parse_args(argv)

    backends = available_backends()
    if "cython" not in backends:
        print("compiled kernels not built; only the fallback will be timed")
    saved = _backend.kernels
    rows = []
    try:
        for name, fn in workloads():
            row = {"workload": name}
            objs = {}
            for label, mod in backends.items():
                _backend.kernels = mod
                t, rep = time_call(fn, args.repeat)
                row[label] = t
                objs[label] = rep.objective
            if len(objs) == 2:
                row["speedup"] = row["python"] / row["cython"]
                row["agree"] = bool(abs(objs["python"] - objs["cython"])
                                    <= 1e-6 * max(1.0, abs(objs["python"])))
            rows.append(row)
    finally:
        _backend.kernels = saved

    print(f"{'workload':<26}{'python [ms]':>13}{'cython [ms]':>13}{'speedup':>9}  agree")
    for r in rows:
        cy = f"{1e3 * r['cython']:13.2f}" if "cython" in r else f"{'-':>13}"
        sp = f"{r['speedup']:9.1f}" if "speedup" in r else f"{'-':>9}"
        print(f"{r['workload']:<26}{1e3 * r['python']:13.2f}{cy}{sp}  {r.get('agree', '-')}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=1)


if __name__ == "__main__":
    main()
