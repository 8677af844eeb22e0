"""The pure Python kernels must reproduce the compiled ones exactly."""
import json
import os
import subprocess
import sys
import textwrap

import pytest

SCRIPT = textwrap.dedent("""
    import json
    import numpy as np
    from capderiv import _jit
    from capderiv.lattice import FiniteSet
    from capderiv.branching import RadiiParams, builtin_offspring, estimate_bcap, estimate_two_sided_hit
    from capderiv.branching import estimators, kernels
    from capderiv.branching.samplers import sample_tree_range
    from capderiv.newtonian import mc_escape_probability

    off = builtin_offspring("binary")
    o = FiniteSet([(0, 0, 0, 0, 0)])
    out = {"backend": _jit.BACKEND}
    # skip the 20000-sample capacity run behind the truncation correction
    estimators.hit_coefficient = lambda S, offspring, N=20_000: 0.14
    b = estimate_bcap(o, off, 300, RadiiParams(prune=3.0), seed=4, workers=1)
    out["bcap"] = [b.estimate.hex(), b.stderr.hex()]
    m = estimate_two_sided_hit(o, (3, 0, 0, 0, 0), off, 40, RadiiParams(prune=3.0), seed=5, workers=1)
    out["marked"] = [float(m.estimate).hex(), float(m.stderr).hex()]
    s = sample_tree_range("critical", (0, 0, 0, 0, 0), off, prune_radius=3.0, seed=6)
    out["range"] = s.visited.points.tolist()
    e = mc_escape_probability((0, 0, 0), FiniteSet([(0, 0, 0)]), 8.0, 200, seed=7)
    out["escape"] = float(e.estimate).hex()
    tot, sq = kernels.generation_sizes(np.uint64(8), 200, off.cdf, 5)
    out["gens"] = tot.tolist()
    print(json.dumps(out))
""")


def run(disable):
    env = dict(os.environ)
    env["CAPDERIV_DISABLE_NUMBA"] = "1" if disable else "0"
    proc = subprocess.run([sys.executable, "-c", SCRIPT], env=env, capture_output=True, text=True, timeout=3000)
    assert proc.returncode == 0, proc.stderr
    return json.loads(proc.stdout.strip().splitlines()[-1])


@pytest.mark.slow
def test_python_fallback_matches_numba():
    fast = run(False)
    slow = run(True)
    assert fast.pop("backend") == "numba"
    assert slow.pop("backend") == "python"
    assert fast == slow
