"""Backend comparison for the three hot kernels.

Runs each workload twice in subprocesses -- once on the default backend
(numba, if installed) and once with CHAOSLAB_DISABLE_NUMBA=1 forcing the
pure-numpy fallbacks -- and prints a timing table.  The backend is
chosen at import time, hence the subprocess dance.

Usage:  python3 bench/benchmark.py [--repeat K]
"""

import argparse
import json
import os
import subprocess
import sys
import time


def _time(fn, repeat):
    fn()  # warmup (includes jit compilation on the numba path)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _worker(repeat: int) -> None:
    import numpy as np

    from chaoslab.backend import numba_enabled
    from chaoslab.grid import make_grid
    from chaoslab.inequalities import _pair_sums
    from chaoslab.kernels import biot_savart, mollify
    from chaoslab.particles import pair_forces
    from chaoslab._sector import build_engine

    rng = np.random.default_rng(0)
    results = {"backend": "numba" if numba_enabled() else "numpy"}

    # O(N^2) planar pair forces, one replica of 1024 particles
    grid = make_grid(2, 32)
    spec = mollify(biot_savart(grid), 2.0 / 32)
    kvals = spec.force_values()
    pos = rng.random((1024, 2))
    results["pair_forces_1024"] = _time(
        lambda: pair_forces(pos, kvals, 2.0 / 32, True), repeat)

    # sector transport matvec, 4 particles at band 15 (46k states)
    engine = build_engine(4, 15, 48, {1: 0.5, -1: 0.5})
    state = rng.standard_normal(engine.keys.shape[0]) \
        + 1j * rng.standard_normal(engine.keys.shape[0])
    results["sector_matvec_N4_B15"] = _time(
        lambda: engine.transport(state), repeat)

    # Monte Carlo pair sums: 100k samples of 16-tuples on a 64-node grid
    phi = rng.standard_normal((64, 64)) * 1e-4
    idx = rng.integers(0, 64, size=(100_000, 16)).astype(np.int64)
    results["mc_pair_sums_100k_k16"] = _time(
        lambda: _pair_sums(idx, phi), repeat)

    print(json.dumps(results))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5,
                        help="timed repetitions per workload (best-of)")
    parser.add_argument("--worker", action="store_true",
                        help=argparse.SUPPRESS)
    args = parser.parse_args()
    if args.worker:
        _worker(args.repeat)
        return

    rows = {}
    for disable in (False, True):
        env = dict(os.environ)
        if disable:
            env["CHAOSLAB_DISABLE_NUMBA"] = "1"
        else:
            env.pop("CHAOSLAB_DISABLE_NUMBA", None)
        proc = subprocess.run(
            [sys.executable, os.path.abspath(__file__), "--worker",
             "--repeat", str(args.repeat)],
            env=env, capture_output=True, text=True)
        if proc.returncode != 0:
            sys.stderr.write(proc.stderr)
            raise SystemExit(f"worker failed (disable_numba={disable})")
        rows[disable] = json.loads(proc.stdout.strip().splitlines()[-1])

    fast, slow = rows[False], rows[True]
    if fast["backend"] == slow["backend"]:
        print("numba is not importable; both runs used the numpy fallback")
    keys = [k for k in fast if k != "backend"]
    width = max(len(k) for k in keys)
    print(f"{'workload'.ljust(width)}  {fast['backend']:>10}  "
          f"{slow['backend']:>10}  speedup")
    for key in keys:
        ratio = slow[key] / fast[key]
        print(f"{key.ljust(width)}  {fast[key] * 1e3:9.2f}ms  "
              f"{slow[key] * 1e3:9.2f}ms  {ratio:6.1f}x")


if __name__ == "__main__":
    main()
