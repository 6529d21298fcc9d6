"""Run lengths, average run lengths and average delays by simulation.

Replication r of a study with master seed s always sees the same random
stream, whatever the number of replications, the engine or the worker
count.  Estimates are therefore fully determined by their arguments.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .charts import ChartConfig, make_chart
from .errors import ConfigError, EstimationError
from .process import ChangeSpec, PathGenerator, ProcessSpec, rep_seeds, stationary_variance

__all__ = [
    "CensoringWarning",
    "RunLengthSample",
    "ArlEstimate",
    "DelayEstimate",
    "RecordSet",
    "simulate_records",
    "first_passage",
    "first_passage_on_path",
    "run_lengths",
    "estimate_arl",
    "estimate_delay",
    "worst_delay",
    "default_cap",
    "set_workers",
]

CENSOR_WARN_FRACTION = 0.01


class CensoringWarning(UserWarning):
    """More than 1% of the runs reached the run-length cap."""


def default_cap(xi=500.0):
    return int(round(100 * xi))


@dataclass(frozen=True)
class RunLengthSample:
    """First alarm time; when ``censored`` the chart never alarmed and ``n`` is the cap."""

    n: int
    censored: bool = False


@dataclass(frozen=True)
class ArlEstimate:
    mean: float
    std_err: float
    reps: int
    censored: int = 0
    cap: int = 0
    warning: str | None = None

    @property
    def censored_fraction(self):
        return self.censored / self.reps if self.reps else 0.0

    @property
    def is_lower_bound(self):
        """Censored runs enter at the cap, so the mean then understates the ARL."""
        return self.censored > 0


@dataclass(frozen=True)
class DelayEstimate:
    tau: int
    mean_delay: float
    std_err: float
    accepted: int
    rejected: int
    censored: int = 0
    reps: int = 0
    warning: str | None = None


def set_workers(workers):
    """Limit the number of threads used by the compiled kernels."""
    if workers is None:
        return
    import numba

    workers = int(workers)
    if workers < 1:
        raise ConfigError("workers must be >= 1")
    numba.set_num_threads(min(workers, numba.config.NUMBA_NUM_THREADS))


@dataclass
class RecordSet:
    """Running-maximum records of the statistic, per replication.

    Row r lists the times and values at which replication r set a new
    running maximum above ``floor``; simulation stopped once the statistic
    exceeded ``top`` or after ``cap`` steps.  Any limit c in [floor, top] has
    its first passage time determined by these records.
    """

    rec_n: np.ndarray
    rec_m: np.ndarray
    steps: np.ndarray
    floor: float
    top: float
    cap: int
    extra: dict = field(default_factory=dict)

    @property
    def reps(self):
        return len(self.steps)

    def run_lengths(self, c):
        """(n, censored) arrays for limit ``c``."""
        if not (self.floor <= c <= self.top):
            raise ValueError(f"limit {c} outside the recorded range [{self.floor}, {self.top}]")
        above = self.rec_m > c
        idx = np.argmax(above, axis=1)
        rows = np.arange(self.reps)
        hit = above[rows, idx]
        n = np.where(hit, self.rec_n[rows, idx], self.cap).astype(np.int64)
        for r, (rn, rm) in self.extra.items():
            pos = np.nonzero(rm > c)[0]
            hit[r] = len(pos) > 0
            n[r] = rn[pos[0]] if len(pos) else self.cap
        return n, ~hit

    def arl(self, c):
        n, cens = self.run_lengths(c)
        return summarize_arl(n, cens, self.cap)


def _kernel_records(config, process, change, seeds, cap, floor, top, max_records):
    from . import kernels

    g0 = stationary_variance(process)
    return kernels.simulate_records(
        kernels.SCHEME_CODES[config.scheme],
        kernels.scheme_params(config),
        seeds,
        int(cap),
        int(change.tau_int),
        float(change.delta),
        float(process.phi1),
        math.sqrt(process.sigma2),
        math.sqrt(g0),
        float(process.sigma2),
        float(g0),
        float(floor),
        float(top),
        int(max_records),
    )


def _python_records(config, process, change, seed, start, reps, cap, floor, top, max_records):
    rec_n = np.zeros((reps, max_records), dtype=np.int64)
    rec_m = np.full((reps, max_records), -np.inf)
    counts = np.zeros(reps, dtype=np.int64)
    steps = np.zeros(reps, dtype=np.int64)
    overflow = np.zeros(reps, dtype=bool)
    for r in range(reps):
        gen = PathGenerator(process, change, seed=seed, rep=start + r)
        chart = make_chart(config, process)
        best = floor
        n = 0
        while n < cap:
            n += 1
            stat = chart.update(gen.next_observation())
            if stat > best:
                if counts[r] == max_records:
                    overflow[r] = True
                    break
                rec_n[r, counts[r]] = n
                rec_m[r, counts[r]] = stat
                counts[r] += 1
                best = stat
                if stat > top:
                    break
        steps[r] = n
    return rec_n, rec_m, counts, steps, overflow


def _use_kernel(process, engine):
    if engine == "python":
        return False
    fast = process.kind == "AR1"
    if engine == "numba" and not fast:
        raise ConfigError("the compiled engine supports AR(1) processes only")
    return fast


def simulate_records(config: ChartConfig, process: ProcessSpec, change: ChangeSpec, seed, reps, cap,
                     floor, top, max_records=32, start=0, engine="auto", workers=None) -> RecordSet:
    """Simulate replications ``start..start+reps-1`` and keep their records."""
    if reps < 1:
        raise ConfigError("reps must be >= 1")
    if cap < 1:
        raise ConfigError("cap must be >= 1")
    set_workers(workers)
    kernel = _use_kernel(process, engine)

    def run(first, count, width, subset=None):
        if kernel:
            seeds = rep_seeds(seed, count, start=first) if subset is None else rep_seeds(seed, reps, start)[subset]
            return _kernel_records(config, process, change, seeds, cap, floor, top, width)
        if subset is None:
            return _python_records(config, process, change, seed, first, count, cap, floor, top, width)
        parts = [_python_records(config, process, change, seed, start + int(r), 1, cap, floor, top, width)
                 for r in subset]
        return tuple(np.concatenate([p[k] for p in parts]) for k in range(5))

    rec_n, rec_m, _, steps, overflow = run(start, reps, max_records)
    extra = {}
    pending = np.nonzero(overflow)[0]
    width = max_records
    while len(pending):
        width *= 8
        rn, rm, cnt, st, ov = run(None, None, width, subset=pending)
        for j, r in enumerate(pending):
            if not ov[j]:
                extra[int(r)] = (rn[j, :cnt[j]].copy(), rm[j, :cnt[j]].copy())
                steps[r] = st[j]
        pending = pending[ov]
    return RecordSet(rec_n, rec_m, steps, float(floor), float(top), int(cap), extra)


def _require_limit(config):
    if config.limit is None:
        raise ConfigError(f"scheme {config.scheme} has no control limit; calibrate it first")
    return config.limit


def first_passage(config, process, change=None, seed=0, cap=50_000, rep=0, engine="auto") -> RunLengthSample:
    """First n <= cap whose statistic strictly exceeds the limit."""
    c = _require_limit(config)
    change = change if change is not None else ChangeSpec()
    rs = simulate_records(config, process, change, seed, 1, cap, c, c, max_records=1, start=rep, engine=engine)
    n, cens = rs.run_lengths(c)
    return RunLengthSample(int(n[0]), bool(cens[0]))


def first_passage_on_path(config, process, path) -> RunLengthSample:
    """First alarm of a fresh chart fed ``path``; censored at ``len(path)``."""
    c = _require_limit(config)
    chart = make_chart(config, process)
    n = 0
    for x in path:
        n += 1
        if chart.update(x) > c:
            return RunLengthSample(n, False)
    return RunLengthSample(n, True)


def run_lengths(config, process, change=None, reps=1000, seed=0, cap=50_000, engine="auto", workers=None):
    """Run lengths and censoring flags of ``reps`` replications."""
    c = _require_limit(config)
    change = change if change is not None else ChangeSpec()
    rs = simulate_records(config, process, change, seed, reps, cap, c, c, max_records=1,
                          engine=engine, workers=workers)
    return rs.run_lengths(c)


def _mean_se(values):
    """Mean and standard error from exact integer sums."""
    k = len(values)
    s1 = int(np.sum(values, dtype=np.int64))
    s2 = int(np.sum(values.astype(np.int64) ** 2, dtype=np.int64))
    mean = s1 / k
    if k < 2:
        return mean, 0.0
    var = (s2 - s1 * s1 / k) / (k - 1)
    return mean, math.sqrt(max(var, 0.0) / k)


def _censor_note(censored, total):
    if total and censored / total > CENSOR_WARN_FRACTION:
        msg = f"{censored} of {total} runs reached the cap; the estimate is a lower bound"
        warnings.warn(msg, CensoringWarning, stacklevel=3)
        return msg
    return None


def summarize_arl(n, censored, cap):
    mean, se = _mean_se(n)
    n_cens = int(np.count_nonzero(censored))
    return ArlEstimate(mean, se, len(n), n_cens, int(cap), _censor_note(n_cens, len(n)))


def estimate_arl(config, process, change=None, reps=100_000, seed=0, cap=50_000,
                 engine="auto", workers=None) -> ArlEstimate:
    """Average run length over ``reps`` replications (change at tau=1 unless given)."""
    n, cens = run_lengths(config, process, change, reps, seed, cap, engine, workers)
    return summarize_arl(n, cens, cap)


def summarize_delay(n, censored, tau, cap):
    keep = n >= tau
    accepted = int(np.count_nonzero(keep))
    rejected = len(n) - accepted
    if accepted == 0:
        raise EstimationError(f"every run alarmed before tau={tau}")
    mean, se = _mean_se(n[keep] - tau + 1)
    n_cens = int(np.count_nonzero(censored & keep))
    return DelayEstimate(int(tau), mean, se, accepted, rejected, n_cens, len(n),
                         _censor_note(n_cens, accepted))


def estimate_delay(config, process, delta, tau, reps=100_000, seed=0, cap=50_000,
                   engine="auto", workers=None) -> DelayEstimate:
    """Mean of N - tau + 1 over runs that did not alarm before tau."""
    tau = int(tau)
    if tau < 1:
        raise ConfigError("tau must be >= 1")
    if tau > cap:
        raise ConfigError("tau must not exceed the cap")
    n, cens = run_lengths(config, process, ChangeSpec(tau=tau, delta=delta), reps, seed, cap, engine, workers)
    return summarize_delay(n, cens, tau, cap)


def worst_delay(config, process, delta, tau_max, reps=100_000, seed=0, cap=50_000,
                engine="auto", workers=None):
    """Largest average delay over tau = 1..tau_max; ties go to the smaller tau."""
    if int(tau_max) < 1:
        raise ConfigError("tau_max must be >= 1")
    best = None
    for tau in range(1, int(tau_max) + 1):
        est = estimate_delay(config, process, delta, tau, reps, seed, cap, engine, workers)
        if best is None or est.mean_delay > best.mean_delay:
            best = est
    return best.tau, best
