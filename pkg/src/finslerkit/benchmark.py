"""Timing comparison: compiled kernels vs the pure-numpy fallback.

The compilation mode is fixed at import time by the environment flag, so
each mode is measured in its own subprocess; the parent merges the two
tables.  Fallback runs use a smaller batch (the same per-call work) to
keep wall time sane; all numbers are reported per call.
"""
from __future__ import annotations

import json
import os
import subprocess
import sys
import time

import numpy as np

from ._njit import ENV_FLAG


def measure(batch: int = 200, seed: int = 0) -> dict:
    """Per-call kernel timings in the current compilation mode."""
    from . import kernels as K
    from ._njit import USING_NUMBA
    from .metrics import hyperbolic_half_plane, randers

    mr = randers(2, beta=(0.5, 0.0), kappa=0.3)
    mh = hyperbolic_half_plane(2)
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.0, 1.0, (batch, 2))
    Y = rng.standard_normal((batch, 2))
    P = np.column_stack(
        [rng.uniform(-1.0, 1.0, batch), rng.uniform(0.8, 1.6, batch)]
    )
    V = 0.25 * rng.standard_normal((batch, 2))
    Q = P + 0.25 * rng.standard_normal((batch, 2))
    Q[:, 1] = np.abs(Q[:, 1]) + 0.3

    outG = np.empty((batch, 2))
    outE = np.empty((batch, 2))
    outS = np.empty((batch, 2))

    def t_spray():
        K.bench_spray(mr.code, mr.params, X, Y, outG)

    def t_exp():
        K.bench_exp(mh.code, mh.params, P, V, 1.0, 1e-9, 1e-9, 20000, outE)

    def t_shoot():
        K.bench_shoot(mh.code, mh.params, P, Q, 1e-9, 25, 1e-9, 1e-9, 20000, outS)

    table = {}
    for name, fn in (("spray", t_spray), ("exp", t_exp), ("shoot", t_shoot)):
        fn()  # warm: triggers compilation under numba
        best = min(_timed(fn) for _ in range(3))
        table[name] = best / batch
    return {
        "mode": "numba" if USING_NUMBA else "numpy",
        "batch": batch,
        "seconds_per_call": table,
    }


def _timed(fn) -> float:
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0


def run_benchmark(batch: int = 200, seed: int = 0) -> dict:
    """Both modes via subprocesses; includes per-kernel speedup factors."""
    results = {}
    for mode, flag in (("numba", "0"), ("numpy", "1")):
        env = os.environ.copy()
        env[ENV_FLAG] = flag
        # the fallback does identical per-call work; a smaller batch keeps
        # the wall time reasonable
        b = batch if mode == "numba" else max(batch // 10, 5)
        proc = subprocess.run(
            [sys.executable, "-m", "finslerkit.benchmark",
             json.dumps({"batch": b, "seed": seed})],
            capture_output=True, text=True, env=env, check=True,
        )
        results[mode] = json.loads(proc.stdout)
    speedup = {}
    for k in results["numba"]["seconds_per_call"]:
        fast = results["numba"]["seconds_per_call"][k]
        slow = results["numpy"]["seconds_per_call"][k]
        speedup[k] = slow / fast if fast > 0 else float("inf")
    return {"modes": results, "speedup": speedup}


def _worker_main() -> None:
    kwargs = json.loads(sys.argv[1]) if len(sys.argv) > 1 else {}
    print(json.dumps(measure(**kwargs), sort_keys=True))


if __name__ == "__main__":
    _worker_main()
