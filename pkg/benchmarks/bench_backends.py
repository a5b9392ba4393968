"""Compare the numba and numpy simulation backends.

Runs the same replica batch on both paths, checks that the outputs agree
bit for bit, and reports nanoseconds per jump.

    python3 benchmarks/bench_backends.py --replicas 64 --budget 100000
"""
import argparse
import time

import numpy as np

from spiderwalk import rng
from spiderwalk._backend import HAS_NUMBA
from spiderwalk.env import Environment, EnvironmentSpec
from spiderwalk.kernels import simulate
from spiderwalk.spider import validate_L


def run(backend, L, envs, keys, budget, repeats):
    best = np.inf
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = simulate(L, envs, keys, L.anchor[0], 0, budget, backend=backend,
                       regen_shape=L.anchor[0], checkpoints=[budget // 10, budget])
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--replicas", type=int, default=64)
    ap.add_argument("--budget", type=int, default=100_000)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--annealed", action="store_true", help="one environment per replica")
    args = ap.parse_args()

    L = validate_L([(0, 1), (0, 2)])
    spec = EnvironmentSpec.uniform([0.9, 0.45], 0.1)
    if args.annealed:
        envs = [Environment(spec, rng.replica_env_seed(1, r)) for r in range(args.replicas)]
    else:
        envs = Environment(spec, 1)
    keys = [rng.trajectory_key(7, r) for r in range(args.replicas)]
    jumps = args.replicas * args.budget

    results = {}
    backends = ["numpy"] + (["numba"] if HAS_NUMBA else [])
    if HAS_NUMBA:
        warm = envs[:1] if isinstance(envs, list) else envs
        run("numba", L, warm, keys[:1], 10, 1)  # compile outside the timing
    for b in backends:
        secs, out = run(b, L, envs, keys, args.budget, args.repeats)
        results[b] = out
        print(f"{b:>6}: {secs:8.3f} s  {1e9 * secs / jumps:8.1f} ns/jump")
    if len(results) == 2:
        a, b = results["numpy"], results["numba"]
        same = (np.array_equal(a.ist, b.ist) and np.array_equal(a.fst, b.fst, equal_nan=True)
                and np.array_equal(a.ckpt_t, b.ckpt_t, equal_nan=True))
        print(f"outputs identical: {same}")


if __name__ == "__main__":
    main()
