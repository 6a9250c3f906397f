"""Numba vs numpy timings for the hot kernels.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each kernel runs once per backend to warm up (numba compiles on first call,
cached on disk afterwards), then ``--repeat`` times; the best wall time is
reported along with the max abs difference between the two backends.
"""

from __future__ import annotations

import argparse
import json
import time

import numpy as np

from compound_bsde import _accel
from compound_bsde.grid import build_grid
from compound_bsde.oracles.bermudan import TreeConfig, binomial_bermudan_put, reduce_geobasket
from compound_bsde.oracles.normal import NormalCdfConfig, binorm_cdf, mvn_cdf_batch
from compound_bsde.oracles.surface import BermudanBasketSurface
from compound_bsde.sde import GbmModel, brownian_increments, euler_paths


def _cases():
    m5 = GbmModel.isotropic(5, 0.02, 0.0, 0.2, 49.0)
    g = build_grid(0.5, [0.1, 0.2, 0.3, 0.4, 0.5], 50)
    dw = brownian_increments(m5, g, 5000, 0)
    red = reduce_geobasket(m5)
    rng = np.random.default_rng(0)
    a, b = rng.normal(0, 1.5, (2, 100_000))
    rho = rng.uniform(-0.95, 0.95, 100_000)
    corr = np.full((5, 5), 0.5) + 0.5 * np.eye(5)
    upper = rng.normal(0.5, 1.0, (8, 5))

    return {
        "euler B=5000 N=50 d=5": lambda: euler_paths(m5, g, dw)[0],
        "binomial tree 10^4 steps": lambda: np.array(binomial_bermudan_put(red, 50.0, [0.1, 0.2, 0.3, 0.4, 0.5],
                                                                          TreeConfig(steps=10_000))),
        "bivariate cdf 10^5 points": lambda: binorm_cdf(a, b, rho),
        "genz mvn 8 rows x 2^15 pts d=5": lambda: mvn_cdf_batch(upper, corr, NormalCdfConfig(fixed_points=2 ** 15)),
        "bermudan lattice N=50": lambda: BermudanBasketSurface(50.0, [0.1, 0.2, 0.3, 0.4, 0.5], m5, g.times).pre,
    }


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - start)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", default=None)
    args = ap.parse_args(argv)
    rows = []
    for name, fn in _cases().items():
        res = {}
        for backend in ("numba", "numpy"):
            with _accel.use_backend(backend):
                fn()  # warm-up / compile
                res[backend] = _best(fn, args.repeat)
        diff = float(np.max(np.abs(np.asarray(res["numba"][1]) - np.asarray(res["numpy"][1]))))
        rows.append({"kernel": name, "numba_s": res["numba"][0], "numpy_s": res["numpy"][0],
                     "speedup": res["numpy"][0] / res["numba"][0], "max_abs_diff": diff})
    width = max(len(r["kernel"]) for r in rows)
    print(f"{'kernel':<{width}}  {'numba':>9}  {'numpy':>9}  {'speedup':>7}  {'max|diff|':>9}")
    for r in rows:
        print(f"{r['kernel']:<{width}}  {r['numba_s']:9.4f}  {r['numpy_s']:9.4f}  {r['speedup']:7.1f}  "
              f"{r['max_abs_diff']:9.1e}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return rows


if __name__ == "__main__":
    main()
