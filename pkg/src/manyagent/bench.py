"""Experiment orchestration: timed solves over a sweep of population sizes."""
from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import GuardExceeded, ValidationError
from .planner import naive_solve, solve_exact, solve_sampled
from .protest import ProtestParams, build_domain

HEADER = ("n", "h", "mode", "seconds", "value", "nodes", "trie_peak")
MODES = ("structured", "naive", "both")
DELTA_TOL = 1e-9


@dataclass
class ExperimentSpec:
    """What to run.  ``domain`` is a path to a domain file; without it the
    protest benchmark is generated for every entry of ``sweep``."""

    domain: str | None = None
    protest: ProtestParams = field(default_factory=ProtestParams)
    mode: str = "structured"
    horizon: int = 2
    gamma: float = 0.9
    samples: int = 0
    seed: int = 0
    sweep: tuple = (2,)
    out: str | None = None
    parallel: int = 0
    warmup: bool = True

    def check(self):
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.horizon < 0:
            raise ValidationError("horizon must be >= 0")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValidationError("gamma must lie in [0, 1]")
        if self.samples < 0:
            raise ValidationError("samples must be >= 0 (0 means exact)")
        if self.domain is None and not self.sweep:
            raise ValidationError("empty N sweep")
        return self


@dataclass
class ResultRow:
    n: int
    h: int
    mode: str
    seconds: float
    value: float
    nodes: int
    trie_peak: int
    delta: float | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def _domains(spec: ExperimentSpec):
    if spec.domain is not None:
        from .io import load_domain

        d = load_domain(spec.domain)
        yield d.N, d
    else:
        for n in spec.sweep:
            yield n, build_domain(spec.protest.with_n(int(n)))


def _solve(domain, spec: ExperimentSpec, mode: str):
    if mode == "naive":
        return naive_solve(None, spec.horizon, spec.gamma, domain)
    if spec.samples > 0:
        return solve_sampled(None, spec.horizon, spec.gamma, spec.samples, spec.seed, domain)
    return solve_exact(None, spec.horizon, spec.gamma, domain)


def _timed(n, domain, spec, mode) -> ResultRow:
    try:
        t0 = time.perf_counter()
        res = _solve(domain, spec, mode)
        dt = time.perf_counter() - t0
    except GuardExceeded as exc:
        return ResultRow(n, spec.horizon, mode, 0.0, math.nan, 0, 0, error=f"guard: {exc}")
    return ResultRow(n, spec.horizon, mode, dt, res.value, res.nodes, res.trie_peak)


def _point(args) -> list[ResultRow]:
    n, domain, spec = args
    if domain is None:
        domain = build_domain(spec.protest.with_n(int(n)))
    modes = ("structured", "naive") if spec.mode == "both" else (spec.mode,)
    rows = [_timed(n, domain, spec, m) for m in modes]
    if spec.mode == "both" and all(r.ok for r in rows):
        delta = abs(rows[0].value - rows[1].value)
        for r in rows:
            r.delta = delta
    return rows


def _warmup(spec: ExperimentSpec):
    """Compile the numba kernels on a tiny instance so the first timed point
    does not pay for it."""
    small = ExperimentSpec(protest=spec.protest, mode=spec.mode, horizon=min(spec.horizon, 2),
                           gamma=spec.gamma, samples=spec.samples, seed=spec.seed)
    _point((2, build_domain(spec.protest.with_n(2)), small))


def run(spec: ExperimentSpec) -> list[ResultRow]:
    """One row per (N, solver); guard refusals are recorded and the sweep continues."""
    spec.check()
    if spec.warmup:
        _warmup(spec)
    if spec.parallel > 1 and spec.domain is None and len(spec.sweep) > 1:
        # each worker builds its own domain and planner
        jobs = [(n, None, spec) for n in spec.sweep]
        with ProcessPoolExecutor(spec.parallel) as pool:
            chunks = list(pool.map(_point, jobs))
    else:
        chunks = [_point((n, d, spec)) for n, d in _domains(spec)]
    rows = [r for c in chunks for r in c]
    if spec.out:
        write_csv(rows, spec.out, with_delta=spec.mode == "both")
        write_plot_data(rows, Path(spec.out).with_suffix(".plot.tsv"))
    return rows


def write_csv(rows, path, with_delta: bool = False) -> Path:
    path = Path(path)
    cols = HEADER + (("delta",) if with_delta else ())
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            rec = asdict(r)
            w.writerow(["" if rec[c] is None else rec[c] for c in cols])
    return path


def write_plot_data(rows, path) -> Path:
    """x=N, y=seconds, one block per mode."""
    path = Path(path)
    with path.open("w") as fh:
        for mode in dict.fromkeys(r.mode for r in rows):
            fh.write(f"# {mode}\n")
            for r in rows:
                if r.mode == mode and r.ok:
                    fh.write(f"{r.n}\t{r.seconds:.6f}\n")
            fh.write("\n")
    return path


def loglog_slope(ns, seconds) -> float:
    """Least-squares slope of log(seconds) against log(N)."""
    x, y = np.log(np.asarray(ns, float)), np.log(np.asarray(seconds, float))
    return float(np.polyfit(x, y, 1)[0])
