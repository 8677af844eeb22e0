"""Time the Monte Carlo kernels with and without numba.

The backend is fixed at import, so each one runs in its own interpreter:

    python benchmarks/bench_kernels.py [--repeat 3]

The numba column excludes compilation (one warm-up call per kernel).
"""
import argparse
import json
import os
import subprocess
import sys
import textwrap

WORKER = textwrap.dedent("""
    import json, sys, time
    import numpy as np
    from capderiv import _jit
    from capderiv.lattice import FiniteSet
    from capderiv.branching import RadiiParams, builtin_offspring, estimate_bcap, estimate_two_sided_hit
    from capderiv.branching import estimators, kernels
    from capderiv.newtonian import mc_escape_probability

    repeat = int(sys.argv[1])
    off = builtin_offspring("binary")
    o5 = FiniteSet([(0,) * 5])
    o3 = FiniteSet([(0,) * 3])
    # fixed coefficient so the marked run does not trigger a capacity estimate
    estimators.hit_coefficient = lambda S, offspring, N=20_000: 0.14

    cases = {
        "generation sizes (2000 trees)": lambda: kernels.generation_sizes(np.uint64(1), 2000, off.cdf, 8),
        "srw escape (500 walks, R=15)": lambda: mc_escape_probability((0, 0, 0), o3, 15.0, 500, seed=1),
        "past range bcap (500 trees)": lambda: estimate_bcap(o5, off, 500, RadiiParams(prune=4.0), seed=1, workers=1),
        "marked two-sided (100 trees)": lambda: estimate_two_sided_hit(o5, (4, 0, 0, 0, 0), off, 100,
                                                                        RadiiParams(prune=4.0), seed=1, workers=1),
    }
    out = {}
    for name, fn in cases.items():
        if _jit.BACKEND == "numba":
            fn()
        best = float("inf")
        for _ in range(repeat):
            t = time.perf_counter()
            fn()
            best = min(best, time.perf_counter() - t)
        out[name] = best
    print(json.dumps(out))
""")


def run(disable: bool, repeat: int) -> dict:
    env = dict(os.environ, CAPDERIV_DISABLE_NUMBA="1" if disable else "0")
    proc = subprocess.run([sys.executable, "-c", WORKER, str(repeat)], env=env,
                          capture_output=True, text=True, check=True)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    fast = run(False, args.repeat)
    slow = run(True, args.repeat)
    print(f"{'kernel':34s} {'numba [s]':>10s} {'python [s]':>11s} {'speedup':>8s}")
    for name in fast:
        print(f"{name:34s} {fast[name]:10.4f} {slow[name]:11.3f} {slow[name] / fast[name]:8.0f}x")


if __name__ == "__main__":
    main()
