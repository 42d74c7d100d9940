"""Compare the numba kernels with their numpy twins.

    python3 benchmarks/bench_kernels.py [--res 128 256] [--repeat 5]

Prints one line per (kernel, resolution): best-of-``repeat`` wall time for each
backend, the speedup, and the max abs difference between the two outputs.
"""

import argparse
import time

import numpy as np

from gammalab import _accel, _kernels
from gammalab.anisotropy import builtin_family
from gammalab.functionals import identity_integrand
from gammalab.grid import Grid
from gammalab.mollify import bump_kernel, convolve, scaled_kernel
from gammalab.solve import _Operator


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def compare(label, fn, repeat):
    results = {}
    for name in ("numba", "numpy"):
        prev = _accel.set_backend(name)
        try:
            fn()  # warm-up (compilation for numba)
            results[name] = best_of(fn, repeat)
        finally:
            _accel.set_backend(prev)
    t_nb, out_nb = results["numba"]
    t_np, out_np = results["numpy"]
    diff = float(np.max(np.abs(np.asarray(out_nb) - np.asarray(out_np))))
    print(f"{label:<28} numba {t_nb * 1e3:9.2f} ms   numpy {t_np * 1e3:9.2f} ms   "
          f"speedup {t_np / t_nb:6.2f}x   max|diff| {diff:.2e}")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--res", type=int, nargs="+", default=[64, 128, 256])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--sigma", type=float, default=0.1)
    args = ap.parse_args(argv)
    if not _accel.HAS_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    rng = np.random.default_rng(0)
    for res in args.res:
        grid = Grid((0.0, 0.0), (1.0, 1.0), res)
        u = grid.scalar(rng.standard_normal(grid.shape))
        J = scaled_kernel(bump_kernel(2), args.sigma)
        compare(f"convolve res={res}", lambda: convolve(u, J).values, args.repeat)
        fam = builtin_family("grushin_lift", domain=(grid.lo, grid.hi))
        op = _Operator(grid, fam.at(4), identity_integrand(3), 1.0)
        v = rng.standard_normal(grid.size)
        compare(f"stiffness res={res}",
                lambda: _kernels.stiffness_apply(v, op.K, op.shape, op.inv_h, op.active), args.repeat)


if __name__ == "__main__":
    main()
