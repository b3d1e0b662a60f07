"""Compiled versus numpy kernels.

Run ``python benchmarks/bench_kernels.py``. Prints best-of-N wall times and
the speed-up for the household likelihood (with and without gradient) and
the local-polynomial moments.
"""

import argparse
import timeit

import numpy as np

from bargain_lab import _kernels
from bargain_lab._kernels import pykernels
from bargain_lab.stats import gauss_hermite


def household_args(n, nodes, seed=0):
    rng = np.random.default_rng(seed)
    xi, w = gauss_hermite(nodes)
    return dict(
        m=rng.uniform(0.2, 0.8, n), mu=rng.normal(0.5, 0.1, n), sd=rng.uniform(0.05, 0.3, n),
        load=rng.uniform(0.0, 0.2, n), tau=rng.normal(0.0, 1.0, n), t_load=0.3,
        t_sign=rng.choice([-1, 0, 1], n).astype(np.int8), h_res=rng.normal(0.0, 0.5, n),
        has_h=(rng.uniform(size=n) < 0.7).astype(np.int8), h_sd=0.4, h_load=0.15,
        nodes=xi, logw=np.log(w),
    )


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=5000, help="households")
    ap.add_argument("--nodes", type=int, default=32)
    ap.add_argument("--points", type=int, default=20000, help="observations for local moments")
    ap.add_argument("--repeat", type=int, default=5)
    a = ap.parse_args(argv)
    if _kernels.ckernels is None:
        print("compiled kernels not available; nothing to compare")
        return 1
    hh = household_args(a.n, a.nodes)
    rng = np.random.default_rng(1)
    x = rng.uniform(size=a.points)
    y = np.sin(4 * x) + rng.normal(size=a.points)
    grid = np.linspace(0.05, 0.95, 91)
    cases = [
        (f"household_loglik n={a.n} nodes={a.nodes}",
         lambda m: m.household_loglik(**hh, grad=False)),
        (f"household_loglik + gradient n={a.n} nodes={a.nodes}",
         lambda m: m.household_loglik(**hh, grad=True)),
        (f"local_moments n={a.points} grid=91 degree=2",
         lambda m: m.local_moments(x, y, grid, 0.1, 2)),
    ]
    print(f"{'kernel':<48}{'cython s':>12}{'numpy s':>12}{'speed-up':>10}")
    for label, fn in cases:
        tc = best(lambda: fn(_kernels.ckernels), a.repeat)
        tp = best(lambda: fn(pykernels), a.repeat)
        print(f"{label:<48}{tc:>12.5f}{tp:>12.5f}{tp / tc:>9.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
