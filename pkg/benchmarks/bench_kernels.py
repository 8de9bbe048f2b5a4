"""Time the numba kernels against the pure numpy fallback.

Usage: python benchmarks/bench_kernels.py [--n 800] [--repeat 5]

Each backend runs in its own interpreter because the backend is fixed at import
(``CUSPUNI_DISABLE_NUMBA=1`` selects numpy).
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np


def measure(n: int, repeat: int) -> dict:
    from cuspuni._accel import HAS_NUMBA
    from cuspuni.dbm.kernels import laplacian_apply, masked_drift, pair_drift
    from cuspuni.density import DysonSolver
    from cuspuni.ensembles import reference_ensemble

    rng = np.random.default_rng(0)
    z = np.sort(rng.standard_normal(n)) + np.arange(n) * 1e-3
    f = rng.standard_normal(n)
    idx = np.arange(n)
    mask = np.abs(idx[:, None] - idx[None, :]) <= n // 8
    far = ~mask
    solver = DysonSolver(reference_ensemble(n, 0.0))
    E = np.linspace(-0.5, 0.5, 201)
    cases = {
        "pair_drift": lambda: pair_drift(z, 1.0 / n),
        "masked_drift": lambda: masked_drift(z, z + 1e-6, mask, far, 1.0 / n),
        "laplacian_apply": lambda: laplacian_apply(z, mask, f, 1.0 / n),
        "dyson_density": lambda: solver.density(E, eta_min=1e-9),
    }
    out = {"backend": "numba" if HAS_NUMBA else "numpy"}
    for name, fn in cases.items():
        fn()  # compile or warm caches
        out[name] = min(timeit.repeat(fn, number=1, repeat=repeat))
    return out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=800)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.child:
        print(json.dumps(measure(args.n, args.repeat)))
        return
    results = []
    for disable in ("0", "1"):
        env = dict(os.environ, CUSPUNI_DISABLE_NUMBA=disable)
        cmd = [sys.executable, __file__, "--child", "--n", str(args.n), "--repeat", str(args.repeat)]
        proc = subprocess.run(cmd, env=env, capture_output=True, text=True, check=True)
        results.append(json.loads(proc.stdout.strip().splitlines()[-1]))
    fast, slow = results
    print(f"{'kernel':<18}{fast['backend']:>12}{slow['backend']:>12}{'speedup':>10}")
    for key in fast:
        if key == "backend":
            continue
        print(f"{key:<18}{fast[key]:>11.4f}s{slow[key]:>11.4f}s{slow[key] / fast[key]:>9.1f}x")


if __name__ == "__main__":
    main()
