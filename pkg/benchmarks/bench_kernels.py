"""Compare the compiled and pure-Python kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json]

Times ``factor_gd`` (fixed iteration budget, no early stop) and
``scatter_add`` on problems the size of a default source matrix, checks that
both backends return the same numbers, and prints the median wall time.
"""
import argparse
import json
import statistics
import sys
import time

import numpy as np

from matcomp.kernels import available_backends


def make_problem(p, q, rank, n, seed):
    rng = np.random.default_rng(seed)
    rows = rng.integers(0, p, n).astype(np.int64)
    cols = rng.integers(0, q, n).astype(np.int64)
    theta = rng.standard_normal((p, rank)) @ rng.standard_normal((rank, q)) / np.sqrt(p * q)
    y = theta[rows, cols] + rng.standard_normal(n) / np.sqrt(p * q)
    a0 = np.ascontiguousarray(rng.standard_normal((p, rank)) * 0.1)
    b0 = np.ascontiguousarray(rng.standard_normal((q, rank)) * 0.1)
    return rows, cols, y, a0, b0


def median_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return statistics.median(times), out


def run(p, q, rank, n, iters, repeat):
    rows, cols, y, a0, b0 = make_problem(p, q, rank, n, 0)
    scale = p * q / n
    vals = np.random.default_rng(1).standard_normal(n)
    results = {}
    for name, mod in available_backends().items():
        gd_t, gd_out = median_time(
            lambda: mod.factor_gd(rows, cols, y, a0.copy(), b0.copy(), scale, 0.05, 0.125, iters, 0.0), repeat
        )

        def scatter():
            out = np.zeros((p, q))
            mod.scatter_add(out, rows, cols, vals)
            return out

        sc_t, sc_out = median_time(scatter, repeat)
        results[name] = {"factor_gd_s": gd_t, "scatter_add_s": sc_t, "_gd": gd_out, "_sc": sc_out}
    if "cython" in results:
        c, py = results["cython"], results["python"]
        np.testing.assert_allclose(c["_gd"][0], py["_gd"][0], rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(c["_sc"], py["_sc"], rtol=1e-12, atol=1e-12)
    return {k: {m: v for m, v in r.items() if not m.startswith("_")} for k, r in results.items()}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--p", type=int, default=100)
    ap.add_argument("--q", type=int, default=100)
    ap.add_argument("--rank", type=int, default=3)
    ap.add_argument("--n", type=int, default=2500)
    ap.add_argument("--iters", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", action="store_true")
    args = ap.parse_args(argv)
    res = run(args.p, args.q, args.rank, args.n, args.iters, args.repeat)
    if args.json:
        print(json.dumps(res, indent=2, sort_keys=True))
        return 0
    print(f"p={args.p} q={args.q} rank={args.rank} n={args.n} iters={args.iters} repeat={args.repeat}")
    print(f"{'backend':<8} {'factor_gd [ms]':>15} {'scatter_add [ms]':>17}")
    for name, r in res.items():
        print(f"{name:<8} {1e3 * r['factor_gd_s']:>15.2f} {1e3 * r['scatter_add_s']:>17.3f}")
    if "cython" in res:
        py, c = res["python"], res["cython"]
        print(f"speedup  {py['factor_gd_s'] / c['factor_gd_s']:>15.1f}x {py['scatter_add_s'] / c['scatter_add_s']:>16.1f}x")
    else:
        print("compiled backend not built; only the fallback was timed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
