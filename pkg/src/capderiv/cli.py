"""Command line harness: ``capderiv cap|sweep|selftest``."""
from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__, green, newtonian, riesz
from .errors import BudgetError, CapacityError, ConfigError, DomainError, NumericalError
from .lattice import FiniteSet, make_shape, translate
from .sweep import _fmt, fit_convergence, write_csv

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_BUDGET = 0, 1, 2, 3
KINDS = ("newton", "riesz", "branch")


@dataclass
class ExperimentConfig:
    kind: str
    d: int
    A: dict
    B: dict | None = None
    direction: list[int] | None = None
    radii: list[int] = field(default_factory=list)
    alpha: float | None = None
    offspring: str | None = None
    tol: float = 1e-11
    N: int = 0
    N_bcap: int | None = None
    prune: float = 8.0
    spine: float | None = None
    node_budget: int = 10_000_000
    method: str = "marked"
    eps_slack: float = 0.1
    seed: int = 0
    workers: int | None = None

    def echo(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _need(cond: bool, name: str, why: str) -> None:
    if not cond:
        raise ConfigError(f"field '{name}': {why}")


def _int_list(v, name):
    _need(isinstance(v, list) and all(isinstance(x, int) and not isinstance(x, bool) for x in v),
          name, "must be a list of integers")
    return v


def parse_config(doc: dict, need_sweep: bool = True) -> ExperimentConfig:
    """Validate a decoded JSON document; every error names the offending field."""
    _need(isinstance(doc, dict), "<root>", "config must be a JSON object")
    known = set(ExperimentConfig.__dataclass_fields__)
    extra = sorted(set(doc) - known)
    _need(not extra, extra[0] if extra else "", "unknown field")
    for name in ("kind", "d", "A"):
        _need(name in doc, name, "missing")
    kind = doc["kind"]
    _need(kind in KINDS, "kind", f"must be one of {', '.join(KINDS)}")
    d = doc["d"]
    _need(isinstance(d, int) and not isinstance(d, bool), "d", "must be an integer")
    if kind == "newton":
        _need(d >= 3, "d", "newton needs d >= 3")
    elif kind == "riesz":
        _need(isinstance(doc.get("alpha"), (int, float)), "alpha", "riesz needs a number")
        _need(0 < doc["alpha"] < d, "alpha", f"must lie in (0, {d})")
    else:
        _need(d >= 5, "d", "branch needs d >= 5")
        _need(isinstance(doc.get("offspring"), str), "offspring", "branch needs an offspring name")
        _need(isinstance(doc.get("N"), int) and doc["N"] >= 1, "N", "branch needs a positive integer")
        if doc.get("N_bcap") is not None:
            _need(isinstance(doc["N_bcap"], int) and doc["N_bcap"] >= 1, "N_bcap", "must be a positive integer")
        _need(doc.get("method", "marked") in ("marked", "direct"), "method", "must be marked or direct")
    for name in ("A", "B"):
        if name in doc and doc[name] is not None:
            _need(isinstance(doc[name], dict) and "kind" in doc[name], name, "set spec needs a 'kind'")
    if need_sweep:
        _need(doc.get("B") is not None, "B", "missing")
        _int_list(doc.get("direction"), "direction")
        _need(len(doc["direction"]) == d, "direction", f"must have {d} coordinates")
        _need(any(doc["direction"]), "direction", "must be nonzero")
        radii = _int_list(doc.get("radii"), "radii")
        _need(len(radii) >= 1 and all(r > 0 for r in radii), "radii", "must be positive")
        _need(all(a < b for a, b in zip(radii, radii[1:])), "radii", "must be strictly increasing")
    for name in ("tol", "prune", "eps_slack"):
        if name in doc:
            _need(isinstance(doc[name], (int, float)) and doc[name] > 0, name, "must be a positive number")
    if doc.get("workers") is not None:
        _need(isinstance(doc["workers"], int) and doc["workers"] >= 1, "workers", "must be a positive integer")
    if "seed" in doc:
        _need(isinstance(doc["seed"], int) and doc["seed"] >= 0, "seed", "must be a nonnegative integer")
    return ExperimentConfig(**doc)


def load_config(path: str, need_sweep: bool = True) -> ExperimentConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed JSON at line {e.lineno} column {e.colno}: {e.msg}") from e
    return parse_config(doc, need_sweep)


def _shape(spec: dict, d: int, name: str) -> FiniteSet:
    spec = dict(spec)
    kind = spec.pop("kind")
    seed = spec.pop("seed", None)
    try:
        return make_shape(kind, spec, d, seed)
    except (ConfigError, KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"field '{name}': {e}") from e


def _offspring(cfg: ExperimentConfig):
    from .branching import builtin_offspring

    try:
        return builtin_offspring(cfg.offspring)
    except (ConfigError, KeyError) as e:
        raise ConfigError(f"field 'offspring': {e}") from e


def _radii_params(cfg: ExperimentConfig):
    from .branching import RadiiParams

    return RadiiParams(prune=cfg.prune, spine=cfg.spine, node_budget=cfg.node_budget)


def run_sweep(cfg: ExperimentConfig, workers: int | None = None):
    A = _shape(cfg.A, cfg.d, "A")
    B = _shape(cfg.B, cfg.d, "B")
    w = cfg.workers if workers is None else workers
    if cfg.kind == "newton":
        return newtonian.derivative_sweep_newton(A, B, cfg.direction, cfg.radii, cfg.tol)
    if cfg.kind == "riesz":
        return riesz.derivative_sweep_riesz(A, B, cfg.direction, cfg.radii, cfg.alpha, cfg.tol)
    from .branching import derivative_sweep_branching

    return derivative_sweep_branching(A, B, cfg.direction, cfg.radii, _offspring(cfg), cfg.N, cfg.seed,
                                      _radii_params(cfg), w, method=cfg.method, N_bcap=cfg.N_bcap)


def run_cap(cfg: ExperimentConfig, workers: int | None = None) -> tuple[float, float, int]:
    """(capacity, error, n): error is 0 (newton), the bracket half-width
    (riesz) or the standard error (branch)."""
    A = _shape(cfg.A, cfg.d, "A")
    if cfg.kind == "newton":
        return newtonian.capacity(A, cfg.tol), 0.0, 0
    if cfg.kind == "riesz":
        r = riesz.capacity_alpha(A, cfg.alpha, cfg.tol)
        return r.capacity, r.half_width, 0
    from .branching import estimate_bcap

    w = cfg.workers if workers is None else workers
    est = estimate_bcap(A, _offspring(cfg), cfg.N_bcap or cfg.N, _radii_params(cfg), cfg.seed, w)
    return est.estimate, est.stderr, est.n


def _header(cfg: ExperimentConfig) -> list[str]:
    return [f"capderiv {__version__}", f"config {cfg.echo()}"]


def _open_out(path):
    return open(path, "w") if path else sys.stdout


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    t0 = time.time()
    recs = run_sweep(cfg, args.workers)
    header = _header(cfg)
    usable = [r for r in recs if r.usable]
    if len(usable) >= 3:
        fit = fit_convergence(recs)
        header.append(f"fit limit={_fmt(fit.limit_estimate)} slope={_fmt(fit.slope)} "
                      f"r_squared={_fmt(fit.r_squared)} degenerate={fit.degenerate}")
    header.append(f"elapsed_seconds {time.time() - t0:.1f}")
    out = _open_out(args.out)
    try:
        write_csv(recs, cfg.d, out, header)
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_cap(args) -> int:
    cfg = load_config(args.config, need_sweep=False)
    cap, err, n = run_cap(cfg, args.workers)
    out = _open_out(args.out)
    try:
        for line in _header(cfg):
            out.write(f"# {line}\n")
        out.write("kind,capacity,capacity_err,n\n")
        out.write(f"{cfg.kind},{_fmt(cap)},{_fmt(err)},{n}\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


# ---------------------------------------------------------------------------
# selftest


def _check_newton():
    for d in (3, 5):
        g0 = green.srw_green((0,) * d)
        p = FiniteSet([(0,) * d])
        for rec in newtonian.derivative_sweep_newton(p, p, (1,) + (0,) * (d - 1), [4, 16]):
            want = 2.0 / (g0 * (g0 + rec.kernel))
            assert abs(rec.ratio - want) <= 1e-8 * want, (d, rec.r, rec.ratio, want)
    A = make_shape("ball", {"r": 1}, 3)
    B = make_shape("box", {"s": 1}, 3)
    lhs, rhs, res = newtonian.union_capacity_identity_check(A, translate(B, (6, 1, 0)))
    assert res <= 1e-6 * lhs, res


def _check_riesz():
    p = FiniteSet([(0, 0, 0, 0, 0)])
    r = riesz.capacity_alpha(p, 2.0)
    assert r.capacity_lower <= 1.0 <= r.capacity_upper
    for rec in riesz.derivative_sweep_riesz(p, p, (1, 0, 0, 0, 0), [4, 8], 2.0):
        want = 2.0 / (1.0 + rec.kernel)
        assert abs(rec.ratio - want) <= 1e-6 * want + 2 * rec.ratio_err
    A = make_shape("ball", {"r": 1}, 5)
    z = (32, 0, 0, 0, 0)
    ub = riesz.union_bounds(A, A, z, 2.0)
    cu = riesz.capacity_alpha(A.union(translate(A, z)), 2.0)
    assert ub.lower <= cu.capacity_upper
    assert ub.upper is None or ub.upper >= cu.capacity_lower


def _check_numerics():
    from .numerics import min_energy_simplex, solve_spd

    rng = np.random.default_rng(1)
    X = rng.normal(size=(20, 20))
    M = X @ X.T + 20 * np.eye(20)
    b = rng.normal(size=20)
    v = solve_spd(M, b)
    assert np.abs(M @ v - b).max() <= 1e-10 * np.abs(b).max()
    mu, cert = min_energy_simplex(np.array([[1.0, 0.25], [0.25, 1.0]]))
    assert np.allclose(mu.weights, 0.5) and abs(cert.energy - 0.625) < 1e-12


def _check_branching_laws():
    from .branching import builtin_offspring

    for name in ("binary", "geometric_half"):
        off = builtin_offspring(name)
        assert abs(off.mean - 1.0) < 1e-12
        assert abs(off.tilde_cdf[-1] - 1.0) < 1e-12 and abs(off.size_biased_cdf[-1] - 1.0) < 1e-12


def _check_determinism():
    from .branching.rng import stream_seed

    assert stream_seed(3, 1, 2, 4) == stream_seed(3, 1, 2, 4)
    assert stream_seed(3, 1, 2, 4) != stream_seed(3, 1, 2, 5)


def _check_mc_escape():
    p = FiniteSet([(0, 0, 0)])
    est = newtonian.mc_escape_probability((0, 0, 0), p, 60.0, 20_000, seed=1)
    want = 1.0 / green.srw_green((0, 0, 0))
    assert abs(est.estimate - want) <= 4 * est.stderr + est.bias_bound, (est, want)


def _check_bcap():
    from .branching import builtin_offspring, estimate_bcap

    est = estimate_bcap(FiniteSet([(0,) * 5]), builtin_offspring("binary"), 4000, seed=3)
    # BCap({0}) ~ 0.698 for binary offspring in d = 5
    assert abs(est.estimate - 0.698) <= 4 * est.stderr + est.bias_bound, est


QUICK_CHECKS = [("numerics", _check_numerics), ("newton", _check_newton), ("riesz", _check_riesz),
                ("offspring laws", _check_branching_laws), ("rng streams", _check_determinism)]
SLOW_CHECKS = [("srw escape Monte Carlo", _check_mc_escape), ("branching capacity", _check_bcap)]


def cmd_selftest(args) -> int:
    checks = QUICK_CHECKS + ([] if args.quick else SLOW_CHECKS)
    failed = 0
    for name, fn in checks:
        try:
            fn()
            print(f"PASS {name}")
        except AssertionError as e:
            failed += 1
            print(f"FAIL {name}: {e}")
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return EXIT_OK if not failed else EXIT_NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="capderiv", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name, helptext in (("cap", "capacity of the set A"), ("sweep", "derivative-formula sweep")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--out", help="CSV output file (default stdout)")
        p.add_argument("--workers", type=int, help="override worker count (env CAPDERIV_WORKERS)")
    p = sub.add_parser("selftest", help="run the built-in invariant checks")
    p.add_argument("--quick", action="store_true", help="skip the Monte Carlo checks")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"cap": cmd_cap, "sweep": cmd_sweep, "selftest": cmd_selftest}[args.command]
    try:
        return handler(args)
    except (ConfigError, DomainError) as e:
        print(f"capderiv: invalid config: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetError as e:
        print(f"capderiv: budget exceeded: {e}", file=sys.stderr)
        return EXIT_BUDGET
    except (NumericalError, CapacityError, ArithmeticError) as e:
        print(f"capderiv: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
