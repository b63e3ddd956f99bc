"""Compare the numba and numpy element-pair kernels.

    python3 benchmarks/bench_pair_kernels.py [--h 0.01 0.005] [--repeat 5]

Times the cross-integral kernel on all element pairs of the two-domain
configuration (nonlocal (-1,0), local (0,1), hat kernel) and checks that both
backends agree.
"""
import argparse
import statistics
import time

import numpy as np

from schwarz_coupler import accel
from schwarz_coupler.assembly import FeSpace, _element_pairs
from schwarz_coupler.geometry import LOCAL, NONLOCAL, Partition1D, build_uniform_mesh
from schwarz_coupler.kernel import KernelSpec


def pairs_for(h, kernel):
    part = Partition1D([(0.0, 1.0)], [(-1.0, 0.0)], kernel.support_radius)
    mesh = build_uniform_mesh(part, h)
    sn = FeSpace.build(mesh, NONLOCAL)
    sl = FeSpace.build(mesh, LOCAL)
    bn, bl = sn.bounds, sl.bounds
    px, py = _element_pairs(bn, np.vstack([bn, bl]), kernel.support_radius)
    by = np.vstack([bn, bl])
    return bn[px, 0], bn[px, 1], by[py, 0], by[py, 1]


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times), statistics.median(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--h", type=float, nargs="+", default=[0.02, 0.01, 0.005])
    ap.add_argument("--support", type=float, default=0.5)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    kernel = KernelSpec.hat(args.support)

    # compile once outside the timed region
    accel.cross_pair_integrals([0.0], [0.1], [0.0], [0.1], 2, 2, kernel, which="numba")

    print(f"{'h':>8} {'pairs':>9} {'numpy [s]':>11} {'numba [s]':>11} {'speedup':>8} {'max |diff|':>11}")
    for h in args.h:
        xa, xb, ya, yb = pairs_for(h, kernel)
        res = {}
        timing = {}
        for name in ("numpy", "numba"):
            def run(name=name):
                res[name] = accel.cross_pair_integrals(xa, xb, ya, yb, 2, 2, kernel, which=name)
            timing[name] = best_of(run, args.repeat)[0]
        diff = float(np.max(np.abs(res["numpy"] - res["numba"])))
        print(
            f"{h:8.4f} {len(xa):9d} {timing['numpy']:11.4f} {timing['numba']:11.4f} "
            f"{timing['numpy'] / timing['numba']:8.1f} {diff:11.2e}"
        )


if __name__ == "__main__":
    main()
