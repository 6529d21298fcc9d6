"""Control limits that give a target in-control average run length.

All evaluations at a given replication count reuse the same random streams,
so the estimated ARL is a non-decreasing step function of the limit c and
bisection behaves deterministically.  The simulations record each
replication's running-maximum ladder, which lets the whole bisection run on
one set of paths.

Search proceeds in three stages:

1. a pilot with few replications brackets the limit; upward probes use a
   short cap, since a capped ARL can only understate the full one;
2. the full replication count is simulated over a bracket chosen from the
   pilot, widened if the full sample disagrees;
3. bisection on the recorded ladders.

Shiryaev-Roberts limits are handled on the log scale throughout.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

from .charts import ChartConfig
from .errors import CalibrationError, ConfigError
from .process import ChangeSpec, ProcessSpec
from .runlength import ArlEstimate, CensoringWarning, default_cap, simulate_records

__all__ = [
    "CalibrationTarget",
    "CalibrationResult",
    "bracket_limit",
    "calibrate_limit",
    "limit_cache_key",
]

MAX_EXPANSIONS = 60
MAX_BISECTIONS = 60


@dataclass(frozen=True)
class CalibrationTarget:
    """Target in-control ARL ``xi`` and the simulation budget used to hit it."""

    xi: float = 500.0
    rel_tol: float = 0.005
    reps: int = 100_000
    seed: int = 0
    cap: int | None = None
    pilot_reps: int = 1000

    def __post_init__(self):
        object.__setattr__(self, "xi", float(self.xi))
        object.__setattr__(self, "rel_tol", float(self.rel_tol))
        if not self.xi > 1.0:
            raise ConfigError(f"target ARL must be > 1, got {self.xi}")
        if not 0.0 < self.rel_tol < 0.1:
            raise ConfigError(f"rel_tol must lie in (0, 0.1), got {self.rel_tol}")
        if int(self.reps) < 2:
            raise ConfigError("calibration needs at least 2 replications")
        object.__setattr__(self, "reps", int(self.reps))
        object.__setattr__(self, "pilot_reps", max(2, int(self.pilot_reps)))
        cap = default_cap(self.xi) if self.cap is None else int(self.cap)
        if cap < 1:
            raise ConfigError("cap must be >= 1")
        object.__setattr__(self, "cap", cap)


@dataclass(frozen=True)
class CalibrationResult:
    c: float
    achieved_arl: ArlEstimate
    iterations: int
    history: tuple = field(default_factory=tuple)
    xi: float = 500.0
    rel_tol: float = 0.005

    @property
    def within_tolerance(self):
        a = self.achieved_arl
        return abs(a.mean - self.xi) / self.xi <= max(self.rel_tol, 3.0 * a.std_err / self.xi)


def limit_cache_key(config: ChartConfig, process: ProcessSpec, target: CalibrationTarget):
    ds = "-" if config.delta_star is None else repr(config.delta_star)
    extra = ""
    if config.window is not None:
        extra += f"|window={config.window}"
    if config.gsr_paper_half:
        extra += "|paper_half"
    return (f"{config.scheme}|{ds}|{process.fingerprint()}|{target.xi!r}|{target.reps}"
            f"|{target.seed}|{target.cap}{extra}")


class _Scale:
    """Moves on the natural scale of a scheme's limit."""

    def __init__(self, log_scale, xi):
        self.log_scale = log_scale
        self.start = math.log(xi) if log_scale else 1.0
        self.floor = -math.inf if log_scale else 0.0

    def up(self, c, k):
        return c + 2.0 ** k if self.log_scale else c * 2.0

    def down(self, c, k):
        return c - 2.0 ** k if self.log_scale else c / 2.0

    def mid(self, lo, hi):
        return 0.5 * (lo + hi)


def _simulate(config, process, seed, reps, cap, floor, top, engine, workers, width=32):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CensoringWarning)
        return simulate_records(config, process, ChangeSpec(), seed, reps, cap, floor, top,
                                max_records=width, engine=engine, workers=workers)


def _arl(records, c):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CensoringWarning)
        return records.arl(c)


def _crossing(records, lo, hi, level, steps=40):
    """Smallest c in [lo, hi] (to bisection precision) with ARL(c) >= level."""
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        if _arl(records, mid).mean >= level:
            hi = mid
        else:
            lo = mid
    return lo, hi


def _pilot(config, process, target, engine, workers):
    scale = _Scale(config.log_scale, target.xi)
    xi = target.xi
    reps = min(target.reps, target.pilot_reps)
    probe_cap = min(target.cap, max(int(4 * xi), 50))
    history = []
    c = scale.start
    c_hi = None
    for k in range(MAX_EXPANSIONS):
        recs = _simulate(config, process, target.seed, reps, probe_cap, scale.floor, c, engine, workers, 64)
        a = _arl(recs, c).mean
        history.append((c, a))
        if a >= 1.3 * xi or (a >= xi and probe_cap == target.cap):
            c_hi = c
            break
        c = scale.up(c, k)
    if c_hi is None:
        raise CalibrationError(f"no upper bracket for {config.scheme} within {MAX_EXPANSIONS} expansions", history)
    recs = _simulate(config, process, target.seed, reps, target.cap, scale.floor, c_hi, engine, workers, 64)
    c_lo = None
    fallback = None
    c = c_hi
    for k in range(MAX_EXPANSIONS):
        c = scale.down(c, k)
        a = _arl(recs, c).mean
        history.append((c, a))
        if a < xi and fallback is None:
            fallback = c
        if a < 0.8 * xi:
            c_lo = c
            break
    if c_lo is None:
        c_lo = fallback
    if c_lo is None and math.isfinite(scale.floor):
        # let the full sample decide whether the floor itself is low enough
        c_lo = scale.floor
    if c_lo is None:
        raise CalibrationError(f"no lower bracket for {config.scheme} within {MAX_EXPANSIONS} expansions", history)
    # aim the full run at a bracket around the pilot's crossing
    top = c_hi
    if _arl(recs, c_hi).mean >= 1.25 * xi:
        top = _crossing(recs, c_lo, c_hi, 1.25 * xi)[1]
    bottom = c_lo
    if _arl(recs, top).mean >= 0.8 * xi:
        cand = _crossing(recs, c_lo, top, 0.8 * xi)[0]
        if cand > c_lo:
            bottom = cand
    return bottom, top, history


def bracket_limit(config: ChartConfig, process: ProcessSpec, target: CalibrationTarget,
                  engine="auto", workers=None, _records=False):
    """Limits (c_lo, c_hi) whose estimated in-control ARLs straddle the target.

    Estimates use the full replication count of ``target``.
    """
    scale = _Scale(config.log_scale, target.xi)
    lo, hi, history = _pilot(config, process, target, engine, workers)
    history = list(history)
    for k in range(MAX_EXPANSIONS):
        recs = _simulate(config, process, target.seed, target.reps, target.cap, lo, hi, engine, workers)
        a_lo, a_hi = _arl(recs, lo), _arl(recs, hi)
        history += [(lo, a_lo.mean), (hi, a_hi.mean)]
        if a_lo.mean >= target.xi:
            if lo <= scale.floor:
                raise CalibrationError(
                    f"{config.scheme}: in-control ARL is {a_lo.mean:.6g} even at c = {lo:g} (cap {target.cap}); "
                    f"no limit attains {target.xi:g}", history)
            lo, hi = scale.down(lo, k), lo
        elif a_hi.mean < target.xi:
            lo, hi = hi, scale.up(hi, k)
        else:
            return (lo, hi, recs, history) if _records else (lo, hi)
    raise CalibrationError(f"bracket for {config.scheme} did not settle within {MAX_EXPANSIONS} expansions", history)


def calibrate_limit(config: ChartConfig, process: ProcessSpec, target: CalibrationTarget = None,
                    engine="auto", workers=None, cache=None) -> CalibrationResult:
    """Bisection for the limit whose in-control ARL is within ``rel_tol`` of ``xi``.

    ``cache`` may be any object with ``get(key)`` and ``put(key, result)``.
    """
    target = target if target is not None else CalibrationTarget()
    key = limit_cache_key(config, process, target)
    if cache is not None:
        hit = cache.get(key)
        if hit is not None:
            return hit
    lo, hi, recs, history = bracket_limit(config, process, target, engine, workers, _records=True)
    xi, tol = target.xi, target.rel_tol * target.xi
    best = None
    for it in range(1, MAX_BISECTIONS + 1):
        mid = 0.5 * (lo + hi)
        est = _arl(recs, mid)
        history.append((mid, est.mean))
        if best is None or abs(est.mean - xi) < abs(best[1].mean - xi):
            best = (mid, est, it)
        if abs(est.mean - xi) <= tol:
            break
        if est.mean < xi:
            lo = mid
        else:
            hi = mid
    c, est, it = best
    result = CalibrationResult(c, est, it, tuple(history), xi, target.rel_tol)
    if not result.within_tolerance:
        raise CalibrationError(
            f"{config.scheme}: closest ARL {est.mean:.6g} at c={c:.6g} misses {xi:g}", history)
    if est.warning:
        warnings.warn(est.warning, CensoringWarning, stacklevel=2)
    if cache is not None:
        cache.put(key, result)
    return result
