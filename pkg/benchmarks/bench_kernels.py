#!/usr/bin/env python3
"""Benchmark the compiled solver kernels against the pure-Python fallback.

Times the two hot kernels on representative workloads plus an end-to-end
trajectory score (which exercises assembly + kernel together).

    python3 benchmarks/bench_kernels.py [--repeats N]

The backends share one algorithm, so the comparison is purely dispatch and
loop overhead; results differ only by floating-point reassociation.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from cafim import BlockState, ContactParams, MassProps, World, rollout
from cafim.contact_model import kinematics
from cafim.kernels import _reference

try:
    from cafim.kernels import _native
except ImportError:
    _native = None

from cafim.loss import LossSettings, _qp_pieces, step_residual


def _timeit(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def make_qp_instances(n_instances=50, seed=0):
    params = ContactParams.cuboid((0.05, 0.05, 0.05), mu=0.3)
    world = World(MassProps.cuboid(0.37, (0.05, 0.05, 0.05)))
    x0 = BlockState([0, 0, 0.15], [1, 0, 0, 0], [0.4, 0.1, 0], [4.0, 2.0, 1.0])
    traj = rollout(x0, params, 0.005, n_instances + 1, world)
    settings = LossSettings()
    out = []
    for i in range(n_instances):
        res = step_residual(traj, i, params, world)
        kin = kinematics(params, traj.states[i])
        h, q, *_ = _qp_pieces(res, kin, params.mu, settings.weights)
        out.append((h, q))
    return out


def make_pgs_instances(n_instances=50, seed=0):
    rng = np.random.default_rng(seed)
    minv = 1.0 / np.array([0.37, 0.37, 0.37, 6e-4, 6e-4, 6e-4])
    out = []
    for _ in range(n_instances):
        nc = int(rng.integers(1, 5))
        j_n = np.zeros((nc, 6))
        j_t = np.zeros((2 * nc, 6))
        j_n[:, 2] = 1.0
        j_n[:, 3:] = rng.normal(0, 0.05, (nc, 3))
        j_t[0::2, 0] = 1.0
        j_t[1::2, 1] = 1.0
        j_t[:, 3:] = rng.normal(0, 0.05, (2 * nc, 3))
        out.append((j_n, j_t, minv, rng.normal(0, 0.5, 6), rng.uniform(0, 0.02, nc)))
    return out


def bench_backend(impl, qps, pgs):
    def run_qp():
        for h, q in qps:
            impl.projected_qp_solve(h, q, 400, 1e-8)

    def run_pgs():
        for j_n, j_t, minv, u_free, bias in pgs:
            impl.pgs_solve(j_n, j_t, minv, u_free, bias, 0.3, 50, 1e-8)

    return run_qp, run_pgs


def bench_score(repeats):
    import cafim.loss as loss_mod
    from cafim.loss import score

    params = ContactParams.cuboid((0.05, 0.05, 0.05), mu=0.32)
    world = World(MassProps.cuboid(0.37, (0.05, 0.05, 0.05)))
    x0 = BlockState([0, 0, 0.15], [1, 0, 0, 0], [0.4, 0.1, 0], [4.0, 2.0, 1.0])
    traj = rollout(x0, params, 0.005, 120, world)

    original = loss_mod.projected_qp_solve
    times = {}
    try:
        for name, impl in (("native", _native), ("python", _reference)):
            if impl is None:
                continue
            loss_mod.projected_qp_solve = impl.projected_qp_solve
            times[name] = _timeit(lambda: score(traj, params, world), repeats)
    finally:
        loss_mod.projected_qp_solve = original
    return times


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    qps = make_qp_instances()
    pgs = make_pgs_instances()

    rows = []
    for name, impl in (("native", _native), ("python", _reference)):
        if impl is None:
            print("compiled backend not built; skipping native rows")
            continue
        run_qp, run_pgs = bench_backend(impl, qps, pgs)
        rows.append((name, "impulse QP x50", _timeit(run_qp, args.repeats)))
        rows.append((name, "PGS sweep x50", _timeit(run_pgs, args.repeats)))

    score_times = bench_score(args.repeats)
    for name, t in score_times.items():
        rows.append((name, "trajectory score (120 steps)", t))

    print(f"{'backend':>8}  {'workload':<30} {'best time':>12}")
    for name, workload, t in rows:
        print(f"{name:>8}  {workload:<30} {t * 1e3:>10.2f} ms")

    by_workload = {}
    for name, workload, t in rows:
        by_workload.setdefault(workload, {})[name] = t
    for workload, d in by_workload.items():
        if "native" in d and "python" in d:
            print(f"speedup {workload}: {d['python'] / d['native']:.1f}x")


if __name__ == "__main__":
    main()
