"""Comparison studies over process coefficients, shifts and reference values.

Limits depend on the scheme, its reference value and the process, never on
the out-of-control shift, so each (scheme, delta_star, phi) is calibrated
once and reused across the shift grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .calibrate import CalibrationTarget, calibrate_limit
from .charts import REFERENCE_SCHEMES, SCHEMES, ChartConfig
from .errors import ConfigError
from .process import ChangeSpec, ProcessSpec
from .runlength import estimate_arl, estimate_delay

__all__ = [
    "DEFAULT_PHIS",
    "DEFAULT_DELTAS",
    "DEFAULT_DELTA_STARS",
    "ExperimentGrid",
    "TableCell",
    "CurvePoint",
    "DelayRow",
    "run_arl_table",
    "run_sensitivity",
    "run_delay_table",
    "mark_within_best",
]

DEFAULT_PHIS = tuple(round(0.1 * k, 1) for k in range(10))
DEFAULT_DELTAS = (1.1, 1.2, 1.3, 1.4, 1.5, 1.75, 2.0, 2.25, 2.5, 2.75, 3.0)
DEFAULT_DELTA_STARS = DEFAULT_DELTAS
WITHIN_BEST = 1.02


@dataclass(frozen=True)
class ExperimentGrid:
    """Grid of a comparison study.

    ``reps`` replications are used for calibration and for every estimate;
    ``glr_reps`` replaces it for the (much slower) glr scheme.  Estimates
    draw from ``seed``, calibration from the target's own seed.
    """

    phis: tuple = DEFAULT_PHIS
    deltas: tuple = DEFAULT_DELTAS
    delta_stars: tuple = DEFAULT_DELTA_STARS
    schemes: tuple = SCHEMES
    reps: int = 100_000
    glr_reps: int = 10_000
    seed: int = 1
    cap: int | None = None

    def __post_init__(self):
        for name in ("phis", "deltas", "delta_stars", "schemes"):
            vals = tuple(getattr(self, name))
            if not vals:
                raise ConfigError(f"grid {name} must not be empty")
            object.__setattr__(self, name, vals)
        if any(not (float(d) > 1.0) for d in self.delta_stars):
            raise ConfigError("every delta_star must be > 1")
        if any(not (float(d) >= 1.0) for d in self.deltas):
            raise ConfigError("every delta must be >= 1")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad:
            raise ConfigError(f"unknown schemes: {', '.join(bad)}")
        if int(self.reps) < 2 or int(self.glr_reps) < 2:
            raise ConfigError("reps must be >= 2")

    def reps_for(self, scheme):
        return int(self.glr_reps if scheme == "glr" else self.reps)


@dataclass(frozen=True)
class TableCell:
    scheme: str
    phi: float
    delta: float
    best_delta_star: float | None
    arl: float
    std_err: float
    within_2pct_of_best: bool = False
    c: float = math.nan
    reps: int = 0
    censored: int = 0
    evaluations: tuple = field(default_factory=tuple)  # (delta_star, arl, std_err) per grid point


@dataclass(frozen=True)
class CurvePoint:
    """One point of a sensitivity curve; generalized schemes have no delta_star."""

    scheme: str
    delta_star: float | None
    arl: float
    std_err: float
    c: float = math.nan


@dataclass(frozen=True)
class DelayRow:
    scheme: str
    phi: float
    delta: float
    delta_star: float | None
    kind: str  # "arl", "worst_delay" or "delay"
    value: float
    std_err: float
    tau: int


class _Limits:
    """Calibrated limits, resolved once per (scheme, delta_star, phi)."""

    def __init__(self, target, cache, engine, workers, on_limit=None):
        self.target = target
        self.cache = cache
        self.engine = engine
        self.workers = workers
        self.on_limit = on_limit
        self.seen = {}

    def config(self, scheme, delta_star, process, reps, gsr_paper_half=False):
        key = (scheme, delta_star, process, reps, gsr_paper_half)
        if key not in self.seen:
            cfg = ChartConfig(scheme, delta_star, gsr_paper_half=gsr_paper_half and scheme == "gsr")
            target = replace(self.target, reps=reps)
            res = calibrate_limit(cfg, process, target, self.engine, self.workers, self.cache)
            if self.on_limit is not None:
                self.on_limit(cfg, process, res)
            self.seen[key] = cfg.with_limit(res.c)
        return self.seen[key]


def _process(phi):
    if isinstance(phi, ProcessSpec):
        return phi
    return ProcessSpec.ar1(float(phi))


def _phi_value(process):
    return process.phi1 if process.kind == "AR1" else process.phi


def mark_within_best(cells):
    """Flag cells within 2% (inclusive) of the smallest ARL in their (phi, delta) column."""
    best = {}
    for cell in cells:
        col = (cell.phi, cell.delta)
        best[col] = min(best.get(col, math.inf), cell.arl)
    return [replace(cell, within_2pct_of_best=cell.arl <= WITHIN_BEST * best[(cell.phi, cell.delta)])
            for cell in cells]


def run_arl_table(grid: ExperimentGrid, target: CalibrationTarget = None, cache=None,
                  engine="auto", workers=None, gsr_paper_half=False, on_cell=None, on_limit=None):
    """Out-of-control ARL (change at tau = 1) for every (scheme, phi, delta).

    Reference-value schemes report the minimum over the delta_star grid;
    ties go to the smaller delta_star.
    """
    target = target if target is not None else CalibrationTarget()
    cap = grid.cap if grid.cap is not None else target.cap
    limits = _Limits(target, cache, engine, workers, on_limit)
    cells = []
    for phi in grid.phis:
        process = _process(phi)
        for scheme in grid.schemes:
            reps = grid.reps_for(scheme)
            stars = sorted(set(float(d) for d in grid.delta_stars)) if scheme in REFERENCE_SCHEMES else [None]
            for delta in grid.deltas:
                change = ChangeSpec(tau=1, delta=delta)
                evals = []
                best = None
                for ds in stars:
                    cfg = limits.config(scheme, ds, process, reps, gsr_paper_half)
                    est = estimate_arl(cfg, process, change, reps, grid.seed, cap, engine, workers)
                    evals.append((ds, est.mean, est.std_err))
                    if best is None or est.mean < best[1].mean:
                        best = (ds, est, cfg.limit)
                ds, est, c = best
                cell = TableCell(scheme, _phi_value(process), float(delta), ds, est.mean, est.std_err,
                                 False, c, est.reps, est.censored,
                                 tuple(evals) if ds is not None else ())
                cells.append(cell)
                if on_cell is not None:
                    on_cell(cell)
    return mark_within_best(cells)


def run_sensitivity(schemes, phi, delta, delta_stars, target: CalibrationTarget = None, reps=100_000,
                    glr_reps=10_000, seed=1, cap=None, cache=None, engine="auto", workers=None,
                    gsr_paper_half=False):
    """ARL against delta_star for reference schemes; one flat level per generalized scheme."""
    target = target if target is not None else CalibrationTarget()
    grid = ExperimentGrid(phis=(phi,), deltas=(delta,), delta_stars=tuple(delta_stars),
                          schemes=tuple(schemes), reps=reps, glr_reps=glr_reps, seed=seed, cap=cap)
    cap = grid.cap if grid.cap is not None else target.cap
    process = _process(phi)
    change = ChangeSpec(tau=1, delta=delta)
    limits = _Limits(target, cache, engine, workers)
    points = []
    for scheme in grid.schemes:
        n = grid.reps_for(scheme)
        stars = sorted(set(float(d) for d in grid.delta_stars)) if scheme in REFERENCE_SCHEMES else [None]
        for ds in stars:
            cfg = limits.config(scheme, ds, process, n, gsr_paper_half)
            est = estimate_arl(cfg, process, change, n, seed, cap, engine, workers)
            points.append(CurvePoint(scheme, ds, est.mean, est.std_err, cfg.limit))
    return points


def run_delay_table(schemes, phi, deltas, tau_max, target: CalibrationTarget = None, delta_stars=None,
                    reps=100_000, glr_reps=10_000, seed=1, cap=None, cache=None, engine="auto",
                    workers=None, best_delta_stars=None, gsr_paper_half=False):
    """Three rows per (scheme, delta): ARL, worst delay over tau <= tau_max, delay at tau_max.

    Reference schemes use the delta_star minimizing the out-of-control ARL,
    taken from ``best_delta_stars[(scheme, delta)]`` when given and found
    with :func:`run_arl_table` otherwise.
    """
    target = target if target is not None else CalibrationTarget()
    tau_max = int(tau_max)
    if tau_max < 1:
        raise ConfigError("tau_max must be >= 1")
    grid = ExperimentGrid(phis=(phi,), deltas=tuple(deltas),
                          delta_stars=tuple(delta_stars) if delta_stars else DEFAULT_DELTA_STARS,
                          schemes=tuple(schemes), reps=reps, glr_reps=glr_reps, seed=seed, cap=cap)
    cap = grid.cap if grid.cap is not None else target.cap
    process = _process(phi)
    chosen = dict(best_delta_stars or {})
    missing = [s for s in grid.schemes if s in REFERENCE_SCHEMES
               and any((s, float(d)) not in chosen for d in grid.deltas)]
    if missing:
        sub = replace(grid, schemes=tuple(missing))
        for cell in run_arl_table(sub, target, cache, engine, workers, gsr_paper_half):
            chosen.setdefault((cell.scheme, cell.delta), cell.best_delta_star)
    limits = _Limits(target, cache, engine, workers)
    rows = []
    phi_val = _phi_value(process)
    for scheme in grid.schemes:
        n = grid.reps_for(scheme)
        for delta in grid.deltas:
            delta = float(delta)
            ds = chosen[(scheme, delta)] if scheme in REFERENCE_SCHEMES else None
            cfg = limits.config(scheme, ds, process, n, gsr_paper_half)
            delays = [estimate_delay(cfg, process, delta, tau, n, seed, cap, engine, workers)
                      for tau in range(1, tau_max + 1)]
            arl, last = delays[0], delays[-1]
            worst = delays[0]
            for est in delays[1:]:
                if est.mean_delay > worst.mean_delay:
                    worst = est
            worst_tau = worst.tau
            rows.append(DelayRow(scheme, phi_val, delta, ds, "arl", arl.mean_delay, arl.std_err, 1))
            rows.append(DelayRow(scheme, phi_val, delta, ds, "worst_delay", worst.mean_delay,
                                 worst.std_err, worst_tau))
            rows.append(DelayRow(scheme, phi_val, delta, ds, "delay", last.mean_delay, last.std_err, tau_max))
    return rows

