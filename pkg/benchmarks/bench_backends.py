"""Benchmark the compiled kernels against the pure-numpy fallback.

The backend is fixed at import time from INTERCAP_BACKEND, so each side
runs in its own interpreter: the script re-executes itself once per
backend and compares the timings.  Compile time is excluded by a small
warmup call before each measurement.

Run from the repository root:

    python3 benchmarks/bench_backends.py
"""

import json
import os
import subprocess
import sys
import time

N_SOUPS = 20_000
N_PAIRS = 4_000
N_WOS = 20_000


def measure():
    import numpy as np

    from intercap._kernels import USING_NUMBA
    from intercap.continuum import wos_capacity
    from intercap.interlace import get_engine
    from intercap.lattice import GridShape, LatticeBox

    out = {"backend": "numba" if USING_NUMBA else "numpy"}
    eng = get_engine(LatticeBox((0, 0, 0), 1))
    w = np.zeros(eng.vol)
    w[eng.flat_index(np.array([[0, 0, 0]]))] = 1.0

    eng.campaign(1, 10, 0.5, w, None)  # warmup / jit compile
    t0 = time.perf_counter()
    eng.campaign(1, N_SOUPS, 0.5, w, None)
    out["campaign"] = time.perf_counter() - t0

    eng.soup_pair(1, 0, 1.0, 0.5)
    t0 = time.perf_counter()
    for k in range(N_PAIRS):
        eng.soup_pair(k + 1, 0, 1.0, 0.5)
    out["soup_pair"] = time.perf_counter() - t0

    box = GridShape.unit_box(1)
    wos_capacity(box, samples=100, seed=1)
    t0 = time.perf_counter()
    cap, _ = wos_capacity(box, samples=N_WOS, seed=1)
    out["wos"] = time.perf_counter() - t0
    out["wos_value"] = cap
    print(json.dumps(out))


def main():
    results = {}
    for backend in ("numba", "numpy"):
        env = dict(os.environ, INTERCAP_BACKEND=backend)
        proc = subprocess.run([sys.executable, __file__, "--worker"],
                              env=env, capture_output=True, text=True)
        if proc.returncode != 0:
            print(proc.stderr)
            raise SystemExit(f"{backend} worker failed")
        results[backend] = json.loads(proc.stdout.strip().splitlines()[-1])

    print("=" * 64)
    print(f"{'workload':<26}{'numba':>10}{'numpy':>10}{'speedup':>10}")
    print("=" * 64)
    rows = [
        (f"campaign ({N_SOUPS} soups)", "campaign"),
        (f"soup_pair ({N_PAIRS} pairs)", "soup_pair"),
        (f"walk-on-spheres ({N_WOS})", "wos"),
    ]
    for label, key in rows:
        tn = results["numba"][key]
        tp = results["numpy"][key]
        print(f"{label:<26}{tn:>9.2f}s{tp:>9.2f}s{tp / tn:>9.1f}x")
    print()
    same = (results["numba"]["wos_value"] == results["numpy"]["wos_value"])
    print(f"wos capacity identical across backends: {same} "
          f"({results['numba']['wos_value']:.6f})")


if __name__ == "__main__":
    if "--worker" in sys.argv:
        measure()
    else:
        main()
