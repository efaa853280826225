"""Benchmark the numba-compiled solver against the plain Python fallback.

Each backend runs in its own interpreter, because the choice between them is
made once at import time (``RSFBAYES_DISABLE_NUMBA``). Both backends integrate
the default sinusoidal scenario over the same window; the script reports the
best wall time of several repeats, the speedup, and the largest state
difference between the two backends.

Run: python benchmarks/bench_kernels.py --t-end 5 --repeats 3
"""
import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from rsfbayes import ForcingConfig, RsfParams, SolverConfig, integrate
from rsfbayes._jit import USING_NUMBA

t_end, repeats = float(sys.argv[1]), int(sys.argv[2])
cfg = SolverConfig(t_end=t_end)
p, f = RsfParams(), ForcingConfig()

t0 = time.perf_counter()
traj = integrate(p, f, cfg=cfg)          # first call includes compilation or cache load
first = time.perf_counter() - t0

times = []
for _ in range(repeats):
    t0 = time.perf_counter()
    traj = integrate(p, f, cfg=cfg)
    times.append(time.perf_counter() - t0)

json.dump({"numba": USING_NUMBA, "first": first, "best": min(times),
           "steps": traj.solver_stats["steps"], "final": traj.states[-1].tolist()}, sys.stdout)
"""


def run_backend(disable_numba, t_end, repeats):
    env = dict(os.environ)
    if disable_numba:
        env["RSFBAYES_DISABLE_NUMBA"] = "1"
    else:
        env.pop("RSFBAYES_DISABLE_NUMBA", None)
    proc = subprocess.run([sys.executable, "-c", WORKER, str(t_end), str(repeats)],
                          env=env, capture_output=True, text=True, check=True)
    return json.loads(proc.stdout)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--t-end", type=float, default=5.0, help="integration window end (s)")
    p.add_argument("--repeats", type=int, default=3, help="timed repeats per backend")
    args = p.parse_args()

    nb = run_backend(False, args.t_end, args.repeats)
    py = run_backend(True, args.t_end, args.repeats)
    if not nb["numba"]:
        print("warning: numba is not importable; both runs used the Python path")

    diff = max(abs(a - b) for a, b in zip(nb["final"], py["final"]))
    print(f"window [0, {args.t_end:g}] s, {nb['steps']} accepted steps, best of {args.repeats}")
    print(f"numba   first call {nb['first']:8.3f} s   best {nb['best']:8.4f} s")
    print(f"python  first call {py['first']:8.3f} s   best {py['best']:8.4f} s")
    print(f"speedup {py['best'] / max(nb['best'], 1e-12):.1f}x")
    print(f"max |final state difference| {diff:.3e}")


if __name__ == "__main__":
    main()
