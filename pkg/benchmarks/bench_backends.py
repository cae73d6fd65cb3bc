"""Timing comparison of the compiled kernels against the pure-Python twin.

Runs the backward solve and the thinning simulator on the M/M/inf instance
through both backends and prints a small table.  Usage:

    python benchmarks/bench_backends.py [--steps 2000] [--paths 20000] [-N 40]
"""

import argparse
import time

import numpy as np

from ctrisk import (MMInfinityParams, TimeGrid, build_mm_infinity,
                    constant_policy)
from ctrisk import _kernels_py
from ctrisk.simulator import _sim_tables

try:
    from ctrisk import _kernels as _kernels_c
except ImportError:
    _kernels_c = None


def _time(fn, repeats):
    best = float("inf")
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--paths", type=int, default=20000)
    ap.add_argument("-N", type=int, default=40)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    model = build_mm_infinity(MMInfinityParams(
        lam=1.0, mu_min=0.0, mu_max=2.0, C1=1.0, C2=0.0,
        N=args.N, horizon_T=1.0))
    grid = TimeGrid(T=1.0, steps=args.steps)
    policy = constant_policy(model, grid, 2.0)
    qs, nodes, val, cum = _sim_tables(model, policy)

    solve_args = (model.breakpoints, model.rates, model.costs, model.n_act,
                  model.terminal, grid.T, grid.steps)
    sim_args = (model.breakpoints, model.rates, qs, policy.action_idx,
                grid.h, grid.steps, model.horizon_T, model.terminal,
                nodes, val, cum, 0, args.paths, 112358, 10 ** 6)

    backends = [("python", _kernels_py)]
    if _kernels_c is not None:
        backends.insert(0, ("compiled", _kernels_c))
    else:
        print("compiled extension not available; timing python only")

    results = {}
    for name, kern in backends:
        t_solve, (psi, _) = _time(lambda: kern.solve_backward(*solve_args),
                                  args.repeats)
        t_sim, (lu, _) = _time(lambda: kern.simulate_batch(*sim_args),
                               args.repeats)
        results[name] = (t_solve, t_sim, psi, lu)

    print(f"\nM/M/inf N={args.N}, {args.steps} steps, {args.paths} paths "
          f"(best of {args.repeats})")
    print(f"{'backend':<10} {'solve [s]':>10} {'simulate [s]':>13}")
    for name, (t_solve, t_sim, _, _) in results.items():
        print(f"{name:<10} {t_solve:>10.4f} {t_sim:>13.4f}")
    if len(results) == 2:
        cs, cm, psi_c, lu_c = results["compiled"]
        ps, pm, psi_p, lu_p = results["python"]
        print(f"{'speedup':<10} {ps / cs:>9.1f}x {pm / cm:>12.1f}x")
        print(f"max |psi diff| = {np.max(np.abs(psi_c - psi_p)):.3g}, "
              f"paths bit-identical = {np.array_equal(lu_c, lu_p)}")


if __name__ == "__main__":
    main()
