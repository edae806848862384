"""Compare the compiled and numpy implementations of the finite-volume pair loop.

Usage::

    python3 benchmarks/bench_fvm.py [--cells 200 400 800] [--repeat 3]

Each backend is timed on one full constant-kernel run to tau = 2 and on the
bare pair-rate kernel; the results are checked for agreement.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from ahampbe import _fvm_py, fvm
from ahampbe.analytic import exact_constant
from ahampbe.kernels import builtin_kernel

try:
    from ahampbe import _fvm_core
except ImportError:  # pragma: no cover - extension not built
    _fvm_core = None


def _best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernel(cells: int, repeat: int):
    grid = fvm.build_grid(1e-3, 60.0, cells)
    x = grid.points
    W = np.ones((cells, cells))
    born = x[:, None] + x[None, :]
    target = np.searchsorted(grid.edges, born, side="right") - 1
    target[born >= grid.edges[-1]] = -1
    target = np.ascontiguousarray(target, dtype=np.int64)
    mass = fvm._cell_masses(grid, lambda s: np.exp(-s))
    out = {}
    rows = []
    for name, mod in (("numpy", _fvm_py), ("cython", _fvm_core)):
        if mod is None:
            continue
        buf = np.empty(cells)
        t = _best_of(lambda: mod.pair_mass_rates(mass, x, W, target, buf), repeat)
        out[name] = buf.copy()
        rows.append((name, t))
    if len(out) == 2:
        assert np.allclose(out["numpy"], out["cython"], rtol=1e-12, atol=1e-15)
    return rows


def bench_solve(cells: int, repeat: int):
    grid = fvm.build_grid(1e-3, 60.0, cells)
    k = builtin_kernel("constant")
    rows = []
    saved = fvm.pair_mass_rates
    try:
        for name, mod in (("numpy", _fvm_py), ("cython", _fvm_core)):
            if mod is None:
                continue
            fvm.pair_mass_rates = mod.pair_mass_rates
            sol = None

            def run():
                nonlocal sol
                sol = fvm.fvm_solve(k, lambda s: np.exp(-s), grid, 2.0)

            t = _best_of(run, repeat)
            rows.append((name, t, fvm.l1_distance(sol, exact_constant)))
    finally:
        fvm.pair_mass_rates = saved
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--cells", type=int, nargs="+", default=[200, 400, 800])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    print(f"default backend: {fvm.BACKEND}")
    if _fvm_core is None:
        print("compiled extension not available; only the numpy backend is timed")
    print(f"{'cells':>6} {'backend':>8} {'pair-rate [ms]':>15} {'solve tau=2 [s]':>16} {'L1 vs exact':>12}")
    for n in args.cells:
        kern = dict(bench_kernel(n, args.repeat))
        for name, t, err in bench_solve(n, 1 if n > 400 else args.repeat):
            print(f"{n:>6} {name:>8} {1e3 * kern[name]:>15.3f} {t:>16.3f} {err:>12.3e}")
        if "cython" in kern:
            print(f"{'':>6} {'speedup':>8} {kern['numpy'] / kern['cython']:>15.1f}x")


if __name__ == "__main__":
    main()
