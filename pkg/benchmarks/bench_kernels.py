"""Compare the compiled and NumPy kernels, and time one split step with each.

    python benchmarks/bench_kernels.py [--n 64] [--repeat 20]
"""
import argparse
import importlib
import os
import timeit

import numpy as np


def load_backends():
    from nlspw.kernels import _pykernels
    backends = {"python": _pykernels}
    try:
        backends["cython"] = importlib.import_module("nlspw.kernels._ckernels")
    except ImportError:
        print("compiled kernels not built; timing the NumPy fallback only")
    return backends


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--n", type=int, default=64, help="points per axis of the 3D lattice")
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--p", type=float, default=3.0)
    args = ap.parse_args()

    from nlspw import kernels
    from nlspw.evolution import _linear_multiplier, _step_inplace
    from nlspw.grid import GridSpec

    grid = GridSpec(3, args.n, 12.0)
    rng = np.random.default_rng(0)
    psi = np.ascontiguousarray(
        np.exp(-grid.r ** 2) * (1.0 + 0.1 * rng.standard_normal(grid.shape))
        * np.exp(1j * rng.uniform(0, 2 * np.pi, grid.shape)))
    weight = np.ascontiguousarray(np.broadcast_to(grid.r ** 2, grid.shape))
    mult = _linear_multiplier(grid, 1e-3)
    backends = load_backends()

    ref = backends["python"].nonlinear_phase(psi.copy(), 0.3, args.p)
    results = {}
    for name, mod in backends.items():
        out = mod.nonlinear_phase(psi.copy(), 0.3, args.p)
        err = float(np.max(np.abs(out - ref)))
        work = psi.copy()
        t_phase = timeit.timeit(lambda: mod.nonlinear_phase(work, 1e-6, args.p), number=args.repeat)
        t_pow = timeit.timeit(lambda: mod.abs_pow_sum(psi, args.p + 1.0), number=args.repeat)
        t_w = timeit.timeit(lambda: mod.weighted_abs2_sum(psi, weight), number=args.repeat)
        kernels.nonlinear_phase = mod.nonlinear_phase
        t_step = timeit.timeit(lambda: _step_inplace(psi.copy(), 1e-3, args.p, grid, True, mult),
                               number=args.repeat)
        results[name] = [t / args.repeat * 1e3 for t in (t_phase, t_pow, t_w, t_step)]
        print(f"{name:>7}: max |diff| vs NumPy {err:.1e}")

    print(f"\n{args.n}^3 lattice, p = {args.p:g}, {os.cpu_count()} CPUs, times in ms")
    print(f"{'backend':>8} {'phase':>8} {'|psi|^q':>8} {'w|psi|^2':>9} {'step':>8}")
    for name, row in results.items():
        print(f"{name:>8} " + " ".join(f"{v:8.2f}" for v in row))
    if "cython" in results:
        sp = [a / b for a, b in zip(results["python"], results["cython"])]
        print(f"{'speedup':>8} " + " ".join(f"{v:7.1f}x" for v in sp))


if __name__ == "__main__":
    main()
