"""Sweep records, their CSV form, and convergence-rate fitting."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import ConfigError

FLOAT_FMT = "{:.17g}"


@dataclass
class SweepRecord:
    r: int
    z: tuple[int, ...]
    cap_a: float
    cap_a_err: float
    cap_b: float
    cap_b_err: float
    cap_union: float
    cap_union_err: float
    kernel: float
    ratio: float
    ratio_err: float
    target: float
    target_err: float
    n: int = 0
    flags: tuple[str, ...] = field(default_factory=tuple)

    @property
    def usable(self) -> bool:
        return "overlap" not in self.flags and math.isfinite(self.ratio)

    @property
    def relative_gap(self) -> float:
        return abs(self.ratio / self.target - 1.0)


_SCALARS = ["cap_a", "cap_a_err", "cap_b", "cap_b_err", "cap_union", "cap_union_err",
            "kernel", "ratio", "ratio_err", "target", "target_err"]


def csv_columns(d: int) -> list[str]:
    names = ["zx", "zy", "zz"] + [f"z{i}" for i in range(3, d)]
    return ["r"] + names[:d] + _SCALARS + ["n", "flags"]


def _fmt(v: float) -> str:
    return FLOAT_FMT.format(v) if math.isfinite(v) else ("nan" if math.isnan(v) else ("inf" if v > 0 else "-inf"))


def write_csv(records, d: int, out, header: list[str] | None = None) -> None:
    for line in header or []:
        out.write(f"# {line}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(csv_columns(d))
    for rec in records:
        w.writerow([rec.r, *rec.z, *(_fmt(getattr(rec, k)) for k in _SCALARS), rec.n, ";".join(rec.flags)])


def records_to_csv(records, d: int, header: list[str] | None = None) -> str:
    buf = io.StringIO()
    write_csv(records, d, buf, header)
    return buf.getvalue()


def read_csv(text: str) -> list[SweepRecord]:
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    rows = list(csv.reader(lines))
    head, body = rows[0], rows[1:]
    d = len(head) - 3 - len(_SCALARS)
    out = []
    for row in body:
        z = tuple(int(v) for v in row[1:1 + d])
        vals = [float(v) for v in row[1 + d:1 + d + len(_SCALARS)]]
        flags = tuple(f for f in row[-1].split(";") if f)
        out.append(SweepRecord(int(row[0]), z, *vals, n=int(row[-2]), flags=flags))
    return out


@dataclass(frozen=True)
class ConvergenceFit:
    limit_estimate: float
    slope: float
    r_squared: float
    degenerate: bool = False


def fit_convergence(records) -> ConvergenceFit:
    """Fit log|ratio - target| against log r, then extrapolate the ratio.

    The limit comes from least squares of ratio = L + c r^slope over the
    unflagged records. A sequence already at its target is reported as a
    degenerate fit with slope -inf.
    """
    recs = [r for r in records if r.usable]
    if len(recs) < 3:
        raise ConfigError(f"need at least 3 unflagged records, got {len(recs)}")
    r = np.array([x.r for x in recs], dtype=float)
    ratio = np.array([x.ratio for x in recs])
    target = np.array([x.target for x in recs])
    dev = np.abs(ratio - target)
    scale = np.abs(target).max()
    if np.all(dev <= 1e-14 * max(scale, 1e-300)):
        return ConvergenceFit(float(target[-1]), -math.inf, 1.0, degenerate=True)
    keep = dev > 0
    lx, ly = np.log(r[keep]), np.log(dev[keep])
    slope, icpt = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + icpt)
    ss_tot = ((ly - ly.mean()) ** 2).sum()
    r2 = 1.0 - (resid ** 2).sum() / ss_tot if ss_tot > 0 else 1.0
    X = np.vstack([np.ones_like(r), r ** slope]).T
    coef, *_ = np.linalg.lstsq(X, ratio, rcond=None)
    return ConvergenceFit(float(coef[0]), float(slope), float(r2))
