"""Compare the compiled and numpy kernel backends.

Usage: python3 benchmarks/bench_kernels.py [--n 200000] [--repeat 3] [--engine]

Kernel timings use both backends in one process.  ``--engine`` also times a
short CVA run per backend in a subprocess (the engine picks its backend at
import from DTDCVA_BACKEND).
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np
from scipy.special import ndtr

from dtdcva._kernels import available_backends, get_backend

ENGINE_SNIPPET = """
import time
from dtdcva import BACKEND
from dtdcva.engine import run
from dtdcva.synthetic import table1_config, table1_setup
inputs, deals = table1_setup()
t = time.perf_counter()
r = run(table1_config({n}, "{mode}", seed=1), inputs, deals)
print(BACKEND, time.perf_counter() - t, r.total)
"""


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def kernel_cases(n, rng):
    x = rng.uniform(0.05, 10.0, n)
    s = rng.uniform(0.05, 1.5, n)
    z = rng.standard_normal(n) * 2.0
    q = rng.uniform(0.5, 20.0, n)
    pd = 2.0 * ndtr(-q)
    u = rng.random((3, n))
    h, k = rng.standard_normal((2, n))
    r = np.tanh(rng.standard_normal(n))
    scen = np.arange(n, dtype=np.uint64)
    dates = np.arange(1, 41) * 0.25
    inv_sd = 1.0 / np.sqrt(dates * 0.5)
    df = np.exp(-0.03 * dates)
    acc = np.full(40, 0.25)
    return {
        "uniforms": lambda m: m.uniforms(7, scen, 3, 1, 4),
        "advance": lambda m: m.advance(x, s, z),
        "conditional_pair": lambda m: m.conditional_pair(q, pd, q[::-1], pd[::-1], 0.4, u[0], u[1], u[2]),
        "bvn_lower": lambda m: m.bvn_lower(h, k, r),
        "cds_unit_value": lambda m: m.cds_unit_value(x[: n // 10], inv_sd, df, acc, 0.4, 0.01),
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--n", type=int, default=200_000)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--engine", action="store_true", help="also time a short CVA run per backend")
    p.add_argument("--engine-scenarios", type=int, default=5000)
    args = p.parse_args(argv)

    backends = available_backends()
    mods = {b: get_backend(b) for b in backends}
    cases = kernel_cases(args.n, np.random.default_rng(0))
    print(f"n = {args.n}, best of {args.repeat}")
    print(f"{'kernel':<18}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for name, fn in cases.items():
        t = {b: best_of(lambda: fn(m), args.repeat) for b, m in mods.items()}
        row = f"{name:<18}" + "".join(f"{t[b]:>11.4f}s" for b in backends)
        if len(backends) > 1:
            row += f"{t['python'] / t['cython']:>11.1f}x"
        print(row)

    if args.engine:
        for b in backends:
            for mode in ("conditional", "unconditional"):
                env = dict(os.environ, DTDCVA_BACKEND=b)
                code = ENGINE_SNIPPET.format(n=args.engine_scenarios, mode=mode)
                out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                                     check=True).stdout.split()
                print(f"engine {mode:<13} {out[0]:<7} {float(out[1]):8.2f}s  total {float(out[2]):.6f}")


if __name__ == "__main__":
    main()
