"""Command-line interface: ``varchart {calibrate,arl,delay,table,sensitivity}``.

Settings come from an optional flat ``key = value`` file (``--config``)
overridden by flags.  Every command validates the whole configuration
before simulating anything and appends its rows to CSV files in the results
directory (``--results-dir``, then ``output.dir``, then ``$VARCHART_RESULTS``,
then ``./varchart-results``).
"""

from __future__ import annotations

import argparse
import math
import sys
import warnings
from dataclasses import dataclass, field

from . import __version__
from .calibrate import CalibrationTarget, calibrate_limit, limit_cache_key
from .charts import REFERENCE_SCHEMES, SCHEMES, ChartConfig
from .errors import CalibrationError, ConfigError, EstimationError, VarChartError
from .experiments import (
    DEFAULT_DELTA_STARS,
    DEFAULT_DELTAS,
    DEFAULT_PHIS,
    ExperimentGrid,
    run_arl_table,
    run_delay_table,
    run_sensitivity,
)
from .process import ChangeSpec, ProcessSpec, causality_check
from .runlength import CensoringWarning, estimate_arl, estimate_delay
from .store import ResultsStore, config_hash

EXIT_OK, EXIT_CONFIG, EXIT_CALIBRATION, EXIT_ESTIMATION = 0, 2, 3, 4

HEADERS = {
    "calibrate": ["scheme", "phi", "delta_star", "c", "arl", "std_err", "reps", "censored", "iterations",
                  "target_arl", "seed", "c_full", "arl_full", "std_err_full", "config_hash", "version"],
    "arl": ["scheme", "phi", "delta", "delta_star", "c", "arl", "std_err", "reps", "censored", "seed",
            "c_full", "arl_full", "std_err_full", "config_hash", "version"],
    "delay": ["scheme", "phi", "delta", "delta_star", "c", "delay", "std_err", "reps", "censored", "tau",
              "seed", "c_full", "delay_full", "std_err_full", "config_hash", "version"],
    "table": ["scheme", "phi", "delta", "best_delta_star", "arl", "se", "within_2pct",
              "arl_full", "se_full", "c_full", "reps", "censored", "seed", "config_hash", "version"],
    "curve": ["scheme", "delta_star", "arl", "se", "phi", "delta",
              "arl_full", "se_full", "c_full", "reps", "seed", "config_hash", "version"],
    "delay_table": ["scheme", "phi", "delta", "delta_star", "row", "value", "se", "tau",
                    "value_full", "se_full", "reps", "seed", "config_hash", "version"],
}


class ConfigErrors(VarChartError):
    def __init__(self, problems):
        super().__init__("; ".join(problems))
        self.problems = list(problems)


# keys of the config file, with the parser of each value
def _float_list(text):
    return tuple(float(t) for t in str(text).replace(";", ",").split(",") if t.strip())


def _str_list(text):
    return tuple(t.strip() for t in str(text).split(",") if t.strip())


def _bool(text):
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text):
    low = str(text).strip().lower()
    return None if low in ("", "none", "inf") else float(text)


def _tau(text):
    low = str(text).strip().lower()
    if low in ("", "none", "inf"):
        return math.inf
    val = float(text)
    if val != int(val):
        raise ValueError(f"not an integer: {text!r}")
    return int(val)


def _int(text):
    val = float(text)
    if val != int(val):
        raise ValueError(f"not an integer: {text!r}")
    return int(val)


KEYS = {
    "process.kind": str,
    "process.phi": _float_list,
    "process.theta": _float_list,
    "process.sigma2": float,
    "process.mu": float,
    "change.tau": _tau,
    "change.delta": float,
    "chart.scheme": str,
    "chart.delta_star": _opt_float,
    "chart.limit": _opt_float,
    "chart.window": _int,
    "chart.gsr_paper_half": _bool,
    "sim.reps": _int,
    "sim.cap": _int,
    "sim.seed": _int,
    "sim.workers": _int,
    "sim.engine": str,
    "calibrate.target_arl": float,
    "calibrate.rel_tol": float,
    "calibrate.reps": _int,
    "calibrate.seed": _int,
    "calibrate.auto": _bool,
    "output.dir": str,
    "output.format": str,
    "grid.phis": _float_list,
    "grid.deltas": _float_list,
    "grid.delta_stars": _float_list,
    "grid.schemes": _str_list,
    "grid.glr_reps": _int,
    "grid.tau_max": _int,
    "grid.kind": str,
}


def read_config_file(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigErrors([f"{path}:{lineno}: expected 'key = value'"])
            key, val = (s.strip() for s in line.split("=", 1))
            values[key] = val.strip("\"'")
    return values


@dataclass
class RunConfig:
    """Fully validated settings of one command."""

    process: ProcessSpec
    change: ChangeSpec
    chart: ChartConfig
    target: CalibrationTarget
    reps: int
    cap: int
    seed: int
    workers: int | None
    engine: str
    auto_calibrate: bool
    out_dir: str | None
    grid: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def digest(self):
        return config_hash(self.raw)


def _parse_values(values):
    parsed, problems = {}, []
    for key, val in values.items():
        if val is None:
            continue
        if key not in KEYS:
            problems.append(f"{key}: unknown setting")
            continue
        try:
            parsed[key] = KEYS[key](val)
        except (TypeError, ValueError) as exc:
            problems.append(f"{key}: {exc}")
    return parsed, problems


def build_run_config(values, command):
    """Validate every field, collecting all problems before raising."""
    v, problems = _parse_values(values)

    def need(key, default):
        return v.get(key, default)

    def check(key, build):
        try:
            return build()
        except (VarChartError, ValueError, TypeError) as exc:
            problems.append(f"{key}: {exc}")
            return None

    process = check("process", lambda: ProcessSpec(phi=need("process.phi", (0.0,)),
                                                     theta=need("process.theta", ()),
                                                     sigma2=need("process.sigma2", 1.0),
                                                     mu=need("process.mu", 0.0)))
    if process is not None:
        kind = v.get("process.kind")
        if kind is not None and kind.upper().replace(" ", "") != process.kind.upper():
            problems.append(f"process.kind: {kind!r} does not match the coefficients ({process.kind})")
        if not causality_check(process):
            problems.append("process.phi: the AR polynomial has a root on or inside the unit circle")

    delta = need("change.delta", 1.0)
    tau = need("change.tau", 1 if command == "arl" else math.inf)
    change = check("change", lambda: ChangeSpec(tau=tau, delta=delta))
    if command == "delay" and (change is None or change.tau == math.inf):
        problems.append("change.tau: delay needs a finite --tau")

    scheme = v.get("chart.scheme")
    chart = None
    if command in ("calibrate", "arl", "delay"):
        if scheme is None:
            problems.append("chart.scheme: required")
        else:
            chart = check("chart", lambda: ChartConfig(scheme, v.get("chart.delta_star"), v.get("chart.limit"),
                                                       v.get("chart.window"),
                                                       need("chart.gsr_paper_half", False)))

    reps = need("sim.reps", 100_000)
    if reps < 2:
        problems.append("sim.reps: must be >= 2")
    # --seed drives the calibrate command itself; estimates look limits up under seed 0 by default
    calib_seed = need("sim.seed", 0) if command == "calibrate" else 0
    target = check("calibrate", lambda: CalibrationTarget(
        xi=need("calibrate.target_arl", 500.0), rel_tol=need("calibrate.rel_tol", 0.005),
        reps=need("calibrate.reps", reps), seed=need("calibrate.seed", calib_seed),
        cap=v.get("sim.cap")))
    cap = target.cap if target is not None else 0
    if change is not None and change.tau != math.inf and cap and change.tau > cap:
        problems.append("change.tau: must not exceed the cap")
    workers = v.get("sim.workers")
    if workers is not None and workers < 1:
        problems.append("sim.workers: must be >= 1")
    engine = need("sim.engine", "auto")
    if engine not in ("auto", "numba", "python"):
        problems.append("sim.engine: choose auto, numba or python")
    elif engine == "numba" and process is not None and process.kind != "AR1":
        problems.append("sim.engine: the compiled engine supports AR(1) processes only")
    fmt = need("output.format", "csv")
    if fmt != "csv":
        problems.append("output.format: only csv is supported")

    grid = {}
    if command in ("table", "sensitivity"):
        grid["schemes"] = need("grid.schemes", SCHEMES if command == "table" else
                               ("lr", "sprt", "sr", "glr", "gsprt", "gsr"))
        grid["phis"] = need("grid.phis", DEFAULT_PHIS)
        grid["deltas"] = need("grid.deltas", DEFAULT_DELTAS)
        grid["delta_stars"] = need("grid.delta_stars", DEFAULT_DELTA_STARS)
        grid["glr_reps"] = need("grid.glr_reps", 10_000)
        grid["tau_max"] = need("grid.tau_max", 50)
        grid["kind"] = need("grid.kind", "arl")
        check("grid", lambda: ExperimentGrid(grid["phis"], grid["deltas"], grid["delta_stars"],
                                             grid["schemes"], reps, grid["glr_reps"]))
        for phi in grid["phis"]:
            if not abs(phi) < 1.0:
                problems.append(f"grid.phis: {phi} is not a causal AR(1) coefficient")
        if grid["kind"] not in ("arl", "delay"):
            problems.append("grid.kind: choose arl or delay")
        if grid["tau_max"] < 1:
            problems.append("grid.tau_max: must be >= 1")
        if command == "sensitivity" and (len(grid["phis"]) != 1 or len(grid["deltas"]) != 1):
            problems.append("sensitivity: give exactly one --phi and one --delta")
        if command == "table" and grid["kind"] == "delay" and len(grid["phis"]) != 1:
            problems.append("grid.phis: the delay table takes a single phi")
        if v.get("chart.gsr_paper_half") and "gsr" not in grid["schemes"]:
            problems.append("chart.gsr_paper_half: applies to gsr only")

    if problems:
        raise ConfigErrors(problems)
    raw = {k: (list(val) if isinstance(val, tuple) else val) for k, val in sorted(v.items())
           if k not in ("output.dir", "sim.workers")}
    raw["command"] = command
    return RunConfig(process, change, chart, target, reps, cap, need("sim.seed", 0), workers, engine,
                     need("calibrate.auto", False), v.get("output.dir"), grid, raw)


# formatting
def _g(x):
    if x is None:
        return ""
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return f"{x:.6g}"


def _full(x):
    return "" if x is None else repr(float(x))


def _phi_text(phi):
    if isinstance(phi, tuple):
        return ";".join(_g(p) for p in phi)
    return _g(phi)


def _process_phi(process):
    return process.phi1 if process.kind == "AR1" else process.phi


def _emit(store, name, rows, out):
    header = HEADERS[name]
    path = store.append(name, header, rows)
    w = out.write
    w(",".join(header) + "\n")
    for row in rows:
        w(",".join(str(x) for x in row) + "\n")
    return path


# commands
def _limit_for(cfg, store, calibrate_missing):
    if cfg.chart.limit is not None:
        return cfg.chart, None
    hit = store.get(limit_cache_key(cfg.chart, cfg.process, cfg.target))
    if hit is None and calibrate_missing:
        hit = calibrate_limit(cfg.chart, cfg.process, cfg.target, cfg.engine, cfg.workers, store)
    if hit is None:
        raise MissingLimit(_calibrate_hint(cfg))
    return cfg.chart.with_limit(hit.c), hit


class MissingLimit(VarChartError):
    pass


def _calibrate_hint(cfg):
    ch = cfg.chart
    parts = [f"varchart calibrate --scheme {ch.scheme}", f"--phi {','.join(repr(p) for p in cfg.process.phi)}"]
    if ch.delta_star is not None:
        parts.append(f"--delta-star {ch.delta_star!r}")
    parts += [f"--target-arl {cfg.target.xi:g}", f"--calib-reps {cfg.target.reps}",
              f"--calib-seed {cfg.target.seed}", f"--cap {cfg.target.cap}"]
    return ("no calibrated limit for this configuration; pass --limit, use --auto-calibrate, or run:\n  "
            + " ".join(parts))


def cmd_calibrate(cfg: RunConfig, store, out=sys.stdout):
    res = calibrate_limit(cfg.chart, cfg.process, cfg.target, cfg.engine, cfg.workers, store)
    a = res.achieved_arl
    row = [cfg.chart.scheme, _phi_text(_process_phi(cfg.process)), _g(cfg.chart.delta_star), _g(res.c),
           _g(a.mean), _g(a.std_err), a.reps, a.censored, res.iterations, _g(cfg.target.xi), cfg.target.seed,
           _full(res.c), _full(a.mean), _full(a.std_err), cfg.digest(), __version__]
    _emit(store, "calibrate", [row], out)
    return res


def cmd_arl(cfg: RunConfig, store, out=sys.stdout):
    chart, _ = _limit_for(cfg, store, cfg.auto_calibrate)
    est = estimate_arl(chart, cfg.process, cfg.change, cfg.reps, cfg.seed, cfg.cap, cfg.engine, cfg.workers)
    row = [chart.scheme, _phi_text(_process_phi(cfg.process)), _g(cfg.change.delta), _g(chart.delta_star),
           _g(chart.limit), _g(est.mean), _g(est.std_err), est.reps, est.censored, cfg.seed,
           _full(chart.limit), _full(est.mean), _full(est.std_err), cfg.digest(), __version__]
    _emit(store, "arl", [row], out)
    return est


def cmd_delay(cfg: RunConfig, store, out=sys.stdout):
    chart, _ = _limit_for(cfg, store, cfg.auto_calibrate)
    est = estimate_delay(chart, cfg.process, cfg.change.delta, cfg.change.tau, cfg.reps, cfg.seed, cfg.cap,
                         cfg.engine, cfg.workers)
    row = [chart.scheme, _phi_text(_process_phi(cfg.process)), _g(cfg.change.delta), _g(chart.delta_star),
           _g(chart.limit), _g(est.mean_delay), _g(est.std_err), est.reps, est.censored, est.tau, cfg.seed,
           _full(chart.limit), _full(est.mean_delay), _full(est.std_err), cfg.digest(), __version__]
    _emit(store, "delay", [row], out)
    return est


def cmd_table(cfg: RunConfig, store, out=sys.stdout):
    g = cfg.grid
    half = bool(cfg.raw.get("chart.gsr_paper_half", False))
    if g["kind"] == "delay":
        rows = run_delay_table(g["schemes"], g["phis"][0], g["deltas"], g["tau_max"], cfg.target,
                               g["delta_stars"], cfg.reps, g["glr_reps"], cfg.seed, cfg.cap, store,
                               cfg.engine, cfg.workers, gsr_paper_half=half)
        out_rows = [[r.scheme, _phi_text(r.phi), _g(r.delta), _g(r.delta_star), r.kind, _g(r.value),
                     _g(r.std_err), r.tau, _full(r.value), _full(r.std_err),
                     g["glr_reps"] if r.scheme == "glr" else cfg.reps, cfg.seed, cfg.digest(), __version__]
                    for r in rows]
        _emit(store, "delay_table", out_rows, out)
        return rows
    grid = ExperimentGrid(g["phis"], g["deltas"], g["delta_stars"], g["schemes"], cfg.reps, g["glr_reps"],
                          cfg.seed, cfg.cap)
    cells = run_arl_table(grid, cfg.target, store, cfg.engine, cfg.workers, gsr_paper_half=half)
    rows = [[c.scheme, _phi_text(c.phi), _g(c.delta), _g(c.best_delta_star), _g(c.arl), _g(c.std_err),
             "true" if c.within_2pct_of_best else "false", _full(c.arl), _full(c.std_err), _full(c.c),
             c.reps, c.censored, cfg.seed, cfg.digest(), __version__] for c in cells]
    _emit(store, "table", rows, out)
    return cells


def cmd_sensitivity(cfg: RunConfig, store, out=sys.stdout):
    g = cfg.grid
    half = bool(cfg.raw.get("chart.gsr_paper_half", False))
    phi, delta = g["phis"][0], g["deltas"][0]
    points = run_sensitivity(g["schemes"], phi, delta, g["delta_stars"], cfg.target, cfg.reps, g["glr_reps"],
                             cfg.seed, cfg.cap, store, cfg.engine, cfg.workers, gsr_paper_half=half)
    rows = [[p.scheme, _g(p.delta_star), _g(p.arl), _g(p.std_err), _g(phi), _g(delta), _full(p.arl),
             _full(p.std_err), _full(p.c), g["glr_reps"] if p.scheme == "glr" else cfg.reps, cfg.seed,
             cfg.digest(), __version__] for p in points]
    _emit(store, "curve", rows, out)
    return points


COMMANDS = {
    "calibrate": cmd_calibrate,
    "arl": cmd_arl,
    "delay": cmd_delay,
    "table": cmd_table,
    "sensitivity": cmd_sensitivity,
}

# flag -> config key
FLAGS = {
    "kind": "process.kind",
    "phi": "process.phi",
    "theta": "process.theta",
    "sigma2": "process.sigma2",
    "mu": "process.mu",
    "tau": "change.tau",
    "delta": "change.delta",
    "scheme": "chart.scheme",
    "delta_star": "chart.delta_star",
    "limit": "chart.limit",
    "window": "chart.window",
    "gsr_paper_half": "chart.gsr_paper_half",
    "reps": "sim.reps",
    "cap": "sim.cap",
    "seed": "sim.seed",
    "workers": "sim.workers",
    "engine": "sim.engine",
    "target_arl": "calibrate.target_arl",
    "rel_tol": "calibrate.rel_tol",
    "calib_reps": "calibrate.reps",
    "calib_seed": "calibrate.seed",
    "auto_calibrate": "calibrate.auto",
    "results_dir": "output.dir",
    "format": "output.format",
    "phis": "grid.phis",
    "deltas": "grid.deltas",
    "delta_stars": "grid.delta_stars",
    "schemes": "grid.schemes",
    "glr_reps": "grid.glr_reps",
    "tau_max": "grid.tau_max",
    "table_kind": "grid.kind",
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    a = common.add_argument
    a("--config", help="flat key = value settings file; flags override it")
    a("--results-dir", help="directory for CSV results and the limit cache")
    a("--kind", help="process kind (AR1, AR2, ARMA(p,q)); checked against the coefficients")
    a("--phi", help="AR coefficient(s), comma separated")
    a("--theta", help="MA coefficient(s), comma separated")
    a("--sigma2", help="white-noise variance")
    a("--mu", help="process mean")
    a("--scheme", choices=SCHEMES)
    a("--delta-star", help=f"reference value (required for {', '.join(REFERENCE_SCHEMES)})")
    a("--window", help="glr: search only the last WINDOW candidate change points")
    a("--gsr-paper-half", action="store_const", const="true",
      help="gsr: halve the quadratic term of the statistic")
    a("--reps", help="replications (default 100000)")
    a("--cap", help="run-length cap (default 100 x target ARL)")
    a("--seed", help="master seed of the estimates (default 0)")
    a("--workers", help="threads for the compiled kernels")
    a("--engine", choices=("auto", "numba", "python"))
    a("--target-arl", help="in-control ARL to calibrate to (default 500)")
    a("--rel-tol", help="relative calibration tolerance (default 0.005)")
    a("--calib-reps", help="calibration replications (default: --reps)")
    a("--calib-seed", help="seed of the calibration whose limit is used (default 0)")
    a("--format", help="output format (csv)")

    parser = argparse.ArgumentParser(prog="varchart", description="Control charts for a variance increase "
                                     "in Gaussian time series.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("calibrate", parents=[common], help="find the limit giving the target in-control ARL")
    for name, helptext in (("arl", "average run length with the change at --tau (default 1)"),
                           ("delay", "average delay for a change at --tau")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--delta", help="scale multiplier after the change (default 1)")
        p.add_argument("--tau", help="change point")
        p.add_argument("--limit", help="control limit (log scale for sr, sr_iid); skips the cache")
        p.add_argument("--auto-calibrate", action="store_const", const="true",
                       help="calibrate when no cached limit exists")
    t = sub.add_parser("table", parents=[common], help="ARL table (or delay table) over a grid")
    t.add_argument("--phis", help="comma-separated AR(1) coefficients")
    t.add_argument("--deltas", help="comma-separated shifts")
    t.add_argument("--delta-stars", help="comma-separated reference values")
    t.add_argument("--schemes", help="comma-separated schemes (default: all)")
    t.add_argument("--glr-reps", help="replications for glr (default 10000)")
    t.add_argument("--table-kind", choices=("arl", "delay"), help="arl (default) or delay rows")
    t.add_argument("--tau-max", help="delay table: largest change point (default 50)")
    s = sub.add_parser("sensitivity", parents=[common], help="ARL as a function of the reference value")
    s.add_argument("--phis", "--phi-grid", dest="phis", help="single AR(1) coefficient")
    s.add_argument("--deltas", "--delta", dest="deltas", help="single shift")
    s.add_argument("--delta-stars", help="comma-separated reference values")
    s.add_argument("--schemes", help="comma-separated schemes")
    s.add_argument("--glr-reps", help="replications for glr (default 10000)")
    return parser


def _output_name(command, cfg):
    if command == "table":
        return "delay_table" if cfg.grid["kind"] == "delay" else "table"
    return "curve" if command == "sensitivity" else command


def collect_values(args):
    values = read_config_file(args.config) if getattr(args, "config", None) else {}
    ns = vars(args)
    for flag, key in FLAGS.items():
        if ns.get(flag) is not None:
            values[key] = ns[flag]
    if args.command == "sensitivity" and ns.get("phi") is not None and ns.get("phis") is None:
        values["grid.phis"] = ns["phi"]
    if args.command in ("table", "sensitivity") and "process.phi" in values:
        values.setdefault("grid.phis", values["process.phi"])
    return values


def main(argv=None, out=None):
    out = out if out is not None else sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        values = collect_values(args)
        cfg = build_run_config(values, args.command)
    except ConfigErrors as exc:
        for p in exc.problems:
            print(f"config error: {p}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    store = ResultsStore(ResultsStore.default_dir(cfg.out_dir))
    try:
        store.check_header(_output_name(args.command, cfg), HEADERS[_output_name(args.command, cfg)])
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    store.record_config(cfg.digest(), cfg.raw)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always", CensoringWarning)
            warnings.showwarning = lambda msg, *a, **k: print(f"warning: {msg}", file=sys.stderr)
            COMMANDS[args.command](cfg, store, out)
    except CalibrationError as exc:
        print(f"calibration failed: {exc}", file=sys.stderr)
        for c, arl in exc.history:
            print(f"  c={c:.6g} arl={arl:.6g}", file=sys.stderr)
        return EXIT_CALIBRATION
    except (EstimationError, MissingLimit) as exc:
        print(f"estimation failed: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    except VarChartError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
