"""Seeded experiments and convergence studies, with their report files.

Every experiment is a pure function of its :class:`ExperimentSpec`; wall time
and version strings go to a ``.meta.json`` sidecar so the report body itself
is byte-identical across reruns with the same seed.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import platform
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Union

import numpy as np

from . import __version__
from .derivatives import FDConfig, jet_consistency_check
from .errors import DomainError
from .functionals import resolve
from .ito import JET_SOURCES, QV_MODES, ito_reconstruct
from .paths import GridPath, read_csv, step_approximate
from .representation import integration_by_parts_mc, lifting_check, representation_residual, resolve_martingale
from .simulation import SimulationConfig, simulate

KINDS = ("ito-check", "hedge", "ibp", "lifting", "approx", "jet-check")
FORMATS = ("csv", "json")
SLOPE_RANGE = (-0.65, -0.35)
FLOOR = 1e-12
IBP_SIGMAS = 4.0


@dataclass
class ExperimentSpec:
    """Everything that determines an experiment's output."""

    kind: str
    functional_id: str = "quadratic_martingale"
    sim: SimulationConfig = field(default_factory=SimulationConfig)
    fd: FDConfig = field(default_factory=FDConfig)
    qv_mode: str = "instantaneous"
    jet_source: str = "analytic"
    partner_id: Optional[str] = None
    checkpoints: Union[int, list] = 8
    levels: tuple = tuple(range(1, 9))
    path: str = "single_jump"
    tolerances: dict = field(default_factory=dict)
    output: Optional[str] = None
    format: str = "csv"
    experimental: bool = False
    workers: int = 1
    chunk: int = 1000

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown experiment kind {self.kind!r}")
        if self.format not in FORMATS:
            raise DomainError(f"unknown format {self.format!r}")
        if self.qv_mode not in QV_MODES:
            raise DomainError(f"unknown qv mode {self.qv_mode!r}")
        if self.jet_source not in JET_SOURCES:
            raise DomainError(f"unknown jet source {self.jet_source!r}")
        if self.kind in ("hedge", "ibp", "lifting"):
            if self.sim.model != "brownian":
                raise DomainError(f"{self.kind} needs model='brownian'")
            resolve_martingale(self.functional_id, self.sim.horizon, experimental=self.experimental)
            if self.partner_id is not None:
                resolve_martingale(self.partner_id, self.sim.horizon, experimental=self.experimental)
        elif self.kind in ("ito-check", "jet-check"):
            resolve(self.functional_id)
        if np.ndim(self.checkpoints) == 0:
            if int(self.checkpoints) < 1:
                raise DomainError("need at least one checkpoint")
        elif any(not 0.0 <= float(t) <= self.sim.horizon for t in self.checkpoints):
            raise DomainError("checkpoints must lie in [0, T]")
        if not self.levels or any(int(n) < 1 for n in self.levels):
            raise DomainError("approximation levels must be positive integers")

    def echo(self) -> dict:
        """Plain-data description of the spec (callables replaced by names)."""
        sim = asdict(self.sim)
        if callable(self.sim.sigma):
            sim["sigma"] = getattr(self.sim.sigma, "__name__", repr(self.sim.sigma))
        out = {k: v for k, v in asdict(self).items() if k not in ("sim", "fd", "output", "workers")}
        out["sim"] = sim
        out["fd"] = asdict(self.fd)
        out["levels"] = list(self.levels)
        return out


@dataclass
class Metric:
    name: str
    value: float
    tolerance: Union[float, tuple]
    passed: bool

    @classmethod
    def at_most(cls, name, value, tol) -> "Metric":
        return cls(name, float(value), float(tol), bool(value <= tol))

    @classmethod
    def within(cls, name, value, lo, hi) -> "Metric":
        return cls(name, float(value), (float(lo), float(hi)), bool(lo <= value <= hi))


@dataclass
class ExperimentReport:
    spec: dict
    metrics: list
    header: list
    rows: list
    wall_time: float = 0.0
    versions: dict = field(default_factory=dict)
    seed: int = 0

    @property
    def passed(self) -> bool:
        return all(m.passed for m in self.metrics)

    def csv_body(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        for row in self.rows:
            w.writerow([_cell(c) for c in row])
        return buf.getvalue()

    def json_body(self) -> str:
        doc = {
            "spec": self.spec,
            "passed": self.passed,
            "metrics": [asdict(m) for m in self.metrics],
            "header": self.header,
            "rows": [[_cell(c) for c in r] for r in self.rows],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def meta(self) -> dict:
        return {
            "wall_time": self.wall_time,
            "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            "versions": self.versions,
            "seed": self.seed,
            "passed": self.passed,
            "metrics": [asdict(m) for m in self.metrics],
        }

    def summary_lines(self) -> list[str]:
        lines = []
        for m in self.metrics:
            tol = f"[{m.tolerance[0]:g}, {m.tolerance[1]:g}]" if isinstance(m.tolerance, tuple) else f"<= {m.tolerance:g}"
            lines.append(f"{'PASS' if m.passed else 'FAIL'} {m.name} = {m.value:.6g} (tol {tol})")
        return lines


def _cell(c):
    if isinstance(c, (bool, np.bool_)):
        return int(c)
    if isinstance(c, (float, np.floating)):
        return repr(float(c))
    if isinstance(c, np.integer):
        return int(c)
    return c


def versions() -> dict:
    return {"funcito": __version__, "numpy": np.__version__, "python": platform.python_version()}


def worker_count(requested: Optional[int] = None) -> int:
    """Worker threads: ``requested`` (default all CPUs) capped by ``FUNCITO_THREADS``."""
    n = requested or os.cpu_count() or 1
    cap = os.environ.get("FUNCITO_THREADS")
    if cap:
        try:
            n = min(n, int(cap))
        except ValueError:
            raise DomainError(f"FUNCITO_THREADS must be an integer, got {cap!r}") from None
    return max(1, n)


def map_chunks(spec: ExperimentSpec, fn) -> list:
    """Apply ``fn`` to consecutive path chunks; results come back in path order."""
    parts = [np.arange(s, min(spec.sim.path_count, s + spec.chunk)) for s in range(0, spec.sim.path_count, spec.chunk)]

    def work(idx):
        return fn(simulate(spec.sim, idx))

    if spec.workers > 1 and len(parts) > 1:
        with ThreadPoolExecutor(max_workers=spec.workers) as ex:
            return list(ex.map(work, parts))
    return [work(p) for p in parts]


def _tol(spec, name, default):
    return float(spec.tolerances.get(name, default))


def rms(a) -> float:
    a = np.asarray(a, dtype=float)
    return float(np.sqrt(np.mean(a * a)))


def _mc_row(experiment, quantity, values):
    values = np.asarray(values, dtype=float)
    se = float(np.std(values, ddof=1) / math.sqrt(values.size)) if values.size > 1 else math.nan
    return [experiment, quantity, float(np.mean(values)), se, int(values.size)]


MC_HEADER = ["experiment", "quantity", "mean", "stderr", "n"]


# ---------------------------------------------------------------------------
# experiment kinds


def ito_residuals(spec: ExperimentSpec):
    F = resolve(spec.functional_id)
    parts = map_chunks(spec, lambda b: ito_reconstruct(F, b, spec.jet_source, spec.fd, spec.qv_mode))
    cols = {}
    for name in ("lhs", "drift_term", "martingale_term", "trace_term", "residual", "nondiff_flags"):
        cols[name] = np.concatenate([getattr(p, name) for p in parts])
    return cols


def _ito_check(spec):
    c = ito_residuals(spec)
    n = spec.sim.steps
    rows = [
        [k, c["lhs"][k], c["drift_term"][k], c["martingale_term"][k], c["trace_term"][k], c["residual"][k], c["nondiff_flags"][k]]
        for k in range(c["lhs"].size)
    ]
    if spec.qv_mode == "realized":
        rel = np.abs(c["residual"]) / (1.0 + np.abs(c["lhs"]))
        metric = Metric.at_most("max_relative_residual", float(np.max(rel)), _tol(spec, "residual", 1e-12))
    else:
        metric = Metric.at_most("rms_residual", rms(c["residual"]), _tol(spec, "residual", 3.0 / math.sqrt(n)))
    return ["path_id", "lhs", "drift", "mart", "trace", "residual", "flags"], rows, [metric]


def hedge_residuals(spec: ExperimentSpec) -> np.ndarray:
    Y = resolve_martingale(spec.functional_id, spec.sim.horizon, experimental=spec.experimental)
    return np.concatenate(map_chunks(spec, lambda b: representation_residual(Y, b, spec.fd, spec.jet_source)))


def _hedge(spec):
    r = hedge_residuals(spec)
    rows = [_mc_row("hedge", "residual", r), _mc_row("hedge", "squared_residual", r * r)]
    metric = Metric.at_most("rms_residual", rms(r), _tol(spec, "residual", 3.0 / math.sqrt(spec.sim.steps)))
    return MC_HEADER, rows, [metric]


def _ibp(spec):
    h = spec.sim.horizon
    Y = resolve_martingale(spec.functional_id, h, experimental=spec.experimental)
    Z = Y if spec.partner_id in (None, spec.functional_id) else resolve_martingale(spec.partner_id, h, experimental=spec.experimental)
    ex = ThreadPoolExecutor(max_workers=spec.workers) if spec.workers > 1 else None
    try:
        res = integration_by_parts_mc(Y, Z, spec.sim, spec.fd, spec.jet_source, spec.chunk, ex)
    finally:
        if ex is not None:
            ex.shutdown()
    rows = [
        ["ibp", "lhs", res.lhs.mean, res.lhs.stderr, res.lhs.samples],
        ["ibp", "rhs", res.rhs.mean, res.rhs.stderr, res.rhs.samples],
    ]
    return MC_HEADER, rows, [Metric.at_most("z_score", res.z_score, _tol(spec, "z_score", IBP_SIGMAS))]


def _lifting(spec):
    Y = resolve_martingale(spec.functional_id, spec.sim.horizon, experimental=spec.experimental)
    rep = lifting_check(Y, spec.sim, spec.fd, spec.checkpoints)
    rows = [["lifting", f"discrepancy@{t!r}", e, math.nan, spec.sim.path_count] for t, e in zip(rep.checkpoints.tolist(), rep.per_checkpoint)]
    return MC_HEADER, rows, [Metric.at_most("max_discrepancy", rep.max_discrepancy, _tol(spec, "discrepancy", 1e-4))]


def builtin_path(name: str, steps: int = 256) -> GridPath:
    """Test paths on ``[0, 1]``; jump times are added to a uniform grid.

    ``constant``, ``linear`` (x = u), ``single_jump`` (size 1 at 1/3),
    ``three_jumps`` (piecewise constant, sizes 1, 0.4, 0.05 at 1/3, 0.6, 0.8)
    and ``ramp_three_jumps`` (the same jumps on top of x = u).
    """
    table = {
        "constant": ((), (), 0.0),
        "linear": ((), (), 1.0),
        "single_jump": ((1 / 3,), (1.0,), 0.0),
        "three_jumps": ((1 / 3, 0.6, 0.8), (1.0, 0.4, 0.05), 0.0),
        "ramp_three_jumps": ((1 / 3, 0.6, 0.8), (1.0, 0.4, 0.05), 1.0),
    }
    if name not in table:
        raise DomainError(f"unknown builtin path {name!r}; expected one of {sorted(table)}")
    jt, js, slope = (np.asarray(a, dtype=float) for a in table[name])
    t = np.union1d(np.linspace(0.0, 1.0, steps + 1), jt)
    x = slope * t + np.sum(js[None, :] * (t[:, None] >= jt[None, :]), axis=1)
    ji = np.searchsorted(t, jt)
    # built from the earlier jumps rather than x - jump, which is off by round-off
    left = slope * jt + np.sum(js[None, :] * (jt[:, None] > jt[None, :]), axis=1)
    return GridPath(t, x[:, None], ji, left[:, None])


def _load_path(spec) -> GridPath:
    if os.path.exists(spec.path):
        return read_csv(spec.path).x
    return builtin_path(spec.path, spec.sim.steps)


def _approx(spec):
    p = _load_path(spec)
    levels = sorted(int(n) for n in spec.levels)
    approx = [step_approximate(p, n) for n in levels]
    errs = np.array([a.sup_error for a in approx])
    rows = [[n, a.partition.size, a.sup_error] for n, a in zip(levels, approx)]
    rise = float(np.max(np.diff(errs))) if errs.size > 1 else 0.0
    metrics = [Metric.at_most("max_increase", max(rise, 0.0), _tol(spec, "increase", 0.0))]
    sizes = np.abs(p.values[p.jump_index] - p.jump_left)
    if _piecewise_constant(p) and np.all(sizes > 1.0 / levels[-1]):
        metrics.append(Metric.at_most("sup_error", errs[-1], _tol(spec, "sup_error", 0.0)))
    return ["N", "partition_size", "sup_error"], rows, metrics


def _piecewise_constant(p: GridPath) -> bool:
    moves = np.any(np.diff(p.values, axis=0) != 0, axis=tuple(range(1, p.values.ndim)))
    at_jump = np.zeros(p.times.size - 1, dtype=bool)
    at_jump[p.jump_index[p.jump_index > 0] - 1] = True
    return not np.any(moves & ~at_jump)


def _jet_check(spec):
    F = resolve(spec.functional_id)
    b = simulate(spec.sim)
    tol = {"horizontal": 1e-2, "gradient": 1e-6, "hessian": 1e-4}
    tol.update({k: float(v) for k, v in spec.tolerances.items() if k in tol})
    rep = jet_consistency_check(F, (b.times, b.x, b.v), spec.fd, tol)
    rows = [[k, rep.max_error[k], rep.tolerance[k]] for k in ("horizontal", "gradient", "hessian")]
    metrics = [Metric.at_most(f"{k}_error", rep.max_error[k], rep.tolerance[k]) for k in ("horizontal", "gradient", "hessian")]
    return ["component", "max_error", "tolerance"], rows, metrics


_DISPATCH = {
    "ito-check": _ito_check,
    "hedge": _hedge,
    "ibp": _ibp,
    "lifting": _lifting,
    "approx": _approx,
    "jet-check": _jet_check,
}


def run(spec: ExperimentSpec) -> ExperimentReport:
    """Run one experiment and, if ``spec.output`` is set, write its report."""
    start = time.perf_counter()
    header, rows, metrics = _DISPATCH[spec.kind](spec)
    rep = ExperimentReport(spec.echo(), metrics, header, rows, time.perf_counter() - start, versions(), spec.sim.seed)
    if spec.output:
        write_report(rep, spec.output, spec.format)
    return rep


# ---------------------------------------------------------------------------
# convergence studies


@dataclass
class StudyTable:
    grid_sizes: list
    rms: list
    slope: Optional[float]
    floored: bool

    def metric(self, lo=SLOPE_RANGE[0], hi=SLOPE_RANGE[1]) -> Metric:
        if self.floored:
            return Metric.at_most("rms_floor", max(self.rms), FLOOR)
        return Metric.within("slope", self.slope, lo, hi)


def loglog_slope(ns, values) -> float:
    return float(np.polyfit(np.log(np.asarray(ns, dtype=float)), np.log(np.asarray(values, dtype=float)), 1)[0])


def convergence_study(spec: ExperimentSpec, grid_sizes) -> StudyTable:
    """RMS residual of an ``ito-check`` or ``hedge`` spec at each grid size.

    The slope fit is skipped when every residual is below the round-off floor.
    """
    ns = [int(n) for n in grid_sizes]
    if len(ns) < 3:
        raise DomainError("a convergence study needs at least three grid sizes")
    ratios = np.array(ns[1:]) / np.array(ns[:-1])
    if np.any(ratios <= 1) or not np.allclose(ratios, ratios[0]):
        raise DomainError("grid sizes must increase geometrically")
    if spec.kind not in ("ito-check", "hedge"):
        raise DomainError("convergence studies run ito-check or hedge specs")
    values = []
    for n in ns:
        s = _with_steps(spec, n)
        r = ito_residuals(s)["residual"] if spec.kind == "ito-check" else hedge_residuals(s)
        values.append(rms(r))
    if max(values) < FLOOR:
        return StudyTable(ns, values, None, True)
    return StudyTable(ns, values, loglog_slope(ns, values), False)


def _with_steps(spec: ExperimentSpec, n: int) -> ExperimentSpec:
    sim = SimulationConfig(**{**{f: getattr(spec.sim, f) for f in spec.sim.__dataclass_fields__}, "steps": n})
    return ExperimentSpec(**{**{f: getattr(spec, f) for f in spec.__dataclass_fields__}, "sim": sim})


def study_report(spec: ExperimentSpec, grid_sizes, slope_range=SLOPE_RANGE) -> ExperimentReport:
    start = time.perf_counter()
    table = convergence_study(spec, grid_sizes)
    rows = [[n, v] for n, v in zip(table.grid_sizes, table.rms)]
    echo = spec.echo()
    echo["grid_sizes"] = list(table.grid_sizes)
    rep = ExperimentReport(echo, [table.metric(*slope_range)], ["n", "rms_residual"], rows, time.perf_counter() - start, versions(), spec.sim.seed)
    if spec.output:
        write_report(rep, spec.output, spec.format)
    return rep


# ---------------------------------------------------------------------------
# report files


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_report(rep: ExperimentReport, path: str, fmt: str = "csv") -> None:
    """Write the deterministic body to ``path`` and timing/versions to ``path.meta.json``."""
    body = rep.csv_body() if fmt == "csv" else rep.json_body()
    _atomic_write(path, body)
    _atomic_write(path + ".meta.json", json.dumps(rep.meta(), indent=2, sort_keys=True) + "\n")
