"""Command-line front end.

Subcommands::

    spectrum      scan the probe response, locate peaks and windows
    oracle-check  compare the harmonic solver with the time-domain oracle
    fit           fit the line-averaged model to a measured trace
    sweep         repeat the spectrum scan over values of one parameter

Exit codes: 0 success, 1 invalid configuration or arguments, 2 solver
failure (or oracle disagreement), 3 file I/O or trace format error.

The configuration schema is described in ``configs/README.md``.  Bundled
configurations can be named directly, e.g. ``--config fig2a``.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import warnings
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .fitting import (Bound, FitParameters, FitSettings, TraceFormatError, fit, load_trace,
                      model_signal, write_trace, ExperimentalTrace)
from .model import (AtomicLevelScheme, BichromaticDrive, ConfigError, Configuration,
                    ProbeField, SolverSettings, WEAK_PROBE_LIMIT, WeakProbeWarning, validate)
from .oracle import IntegrationSettings, oracle_a0
from .response import SolverError, a0_grid
from .spectroscopy import (PeakSet, ZeemanModel, _evaluate, asymmetry, find_peaks,
                           transmission, transparency_minima, zeeman_average)

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3
ORACLE_TOLERANCE = 1e-3
ORACLE_MAX_POINTS = 32
SWEEP_PARAMETERS = ("omega_c", "delta", "delta_c2", "gamma21")
METHOD_ALIASES = {"banded": "banded", "cf": "continued_fraction",
                  "continued_fraction": "continued_fraction"}
TOP_LEVEL_KEYS = {"name", "description", "units", "gamma_mhz", "scheme", "drive", "probe",
                  "solver", "scan", "peaks", "zeeman", "optical_depth", "oracle", "fit",
                  "seed"}


@dataclass
class RunConfig:
    """A parsed run configuration.

    ``config`` holds the validated physics in units of gamma.  Scan range,
    Zeeman width and oracle range are also stored in gamma; ``units`` is
    the unit the file was written in.
    """

    name: str
    units: str
    config: Configuration
    scan: tuple
    zeeman: ZeemanModel
    prominence: float = 0.05
    optical_depth: float | None = None
    oracle: dict = field(default_factory=dict)
    fit: dict = field(default_factory=dict)
    seed: int = 0
    workers: int = 1

    @property
    def gamma_mhz(self):
        return self.config.gamma_mhz


def _section(data, key, allowed, problems):
    sec = data.get(key, {})
    if not isinstance(sec, dict):
        problems.append(f"{key} must be an object")
        return {}
    extra = set(sec) - set(allowed)
    if extra:
        problems.append(f"{key}: unknown keys {sorted(extra)}")
    return {k: v for k, v in sec.items() if k in allowed}


def parse_config(data: dict, name: str = "config") -> RunConfig:
    """Build a :class:`RunConfig` from a decoded JSON object."""
    problems = []
    if not isinstance(data, dict):
        raise ConfigError(["configuration must be a JSON object"])
    extra = set(data) - TOP_LEVEL_KEYS
    if extra:
        problems.append(f"unknown top-level keys {sorted(extra)}")
    units = data.get("units")
    if units not in ("MHz", "Gamma"):
        problems.append(f"units must be 'MHz' or 'Gamma' (got {units!r})")

    scheme = _section(data, "scheme", ("gamma", "branch_31", "branch_32", "gamma21"), problems)
    drive = _section(data, "drive", ("omega_c1", "omega_c2", "delta", "delta_c2"), problems)
    probe = _section(data, "probe", ("omega_p", "delta_p"), problems)
    solver = _section(data, "solver", ("method", "n_max", "rel_tol", "adaptive"), problems)
    scan = _section(data, "scan", ("min", "max", "points", "workers"), problems)
    peaks = _section(data, "peaks", ("prominence",), problems)
    zeeman = _section(data, "zeeman", ("sigma", "points", "step"), problems)
    oracle = _section(data, "oracle", ("min", "max", "points"), problems)
    fit_sec = _section(data, "fit", ("kind", "parameters", "settings"), problems)
    for key in ("omega_c1", "omega_c2", "delta", "delta_c2"):
        if key not in drive:
            problems.append(f"drive.{key} is required")
    if "omega_p" not in probe:
        problems.append("probe.omega_p is required")
    for key in ("min", "max", "points"):
        if key not in scan:
            problems.append(f"scan.{key} is required")
    if problems:
        raise ConfigError(problems)

    if "method" in solver:
        if solver["method"] not in METHOD_ALIASES:
            raise ConfigError([f"solver.method must be banded or cf (got {solver['method']!r})"])
        solver["method"] = METHOD_ALIASES[solver["method"]]

    if units == "Gamma":
        scheme.setdefault("gamma", 1.0)
    elif "gamma" not in scheme:
        scheme["gamma"] = data.get("gamma_mhz", 6.0)
    gamma_mhz = data.get("gamma_mhz")
    if units == "MHz" and gamma_mhz is not None and gamma_mhz != scheme["gamma"]:
        raise ConfigError([f"gamma_mhz ({gamma_mhz}) disagrees with scheme.gamma "
                           f"({scheme['gamma']}) in MHz units"])
    try:
        parts = (AtomicLevelScheme(**scheme), BichromaticDrive(**drive), ProbeField(**probe),
                 SolverSettings(**solver))
    except TypeError as exc:
        raise ConfigError([str(exc)]) from None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", WeakProbeWarning)
        config = validate(*parts, units=units, gamma_mhz=gamma_mhz)

    g = float(scheme["gamma"])
    lo, hi, n = scan["min"], scan["max"], scan["points"]
    if not (isinstance(n, int) and n >= 3):
        problems.append(f"scan.points must be an integer >= 3 (got {n!r})")
    if not lo < hi:
        problems.append("scan.min must be below scan.max")
    prominence = peaks.get("prominence", 0.05)
    if not 0 < prominence <= 1:
        problems.append(f"peaks.prominence must lie in (0, 1] (got {prominence!r})")
    od = data.get("optical_depth")
    if od is not None and not od >= 0:
        problems.append(f"optical_depth must be non-negative (got {od!r})")
    seed = data.get("seed", 0)
    if not (isinstance(seed, int) and 0 <= seed < 2**64):
        problems.append(f"seed must be an unsigned 64-bit integer (got {seed!r})")
    try:
        step = zeeman.get("step")
        zm = ZeemanModel(zeeman.get("sigma", 0.0) / g, zeeman.get("points", 7),
                         None if step is None else step / g)
    except ValueError as exc:
        problems.append(f"zeeman: {exc}")
    if problems:
        raise ConfigError(problems)

    oracle_g = {k: (v / g if k in ("min", "max") else v) for k, v in oracle.items()}
    return RunConfig(
        name=data.get("name", name),
        units=units,
        config=config,
        scan=(lo / g, hi / g, n),
        zeeman=zm,
        prominence=prominence,
        optical_depth=od,
        oracle=oracle_g,
        fit=fit_sec,
        seed=seed,
        workers=int(scan.get("workers", 1)),
    )


def bundled_configs():
    root = resources.files(__package__) / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_config(path) -> RunConfig:
    """Read a configuration file, or a bundled configuration by name."""
    p = Path(path)
    if not p.is_file() and str(path) in bundled_configs():
        text = (resources.files(__package__) / "configs" / f"{path}.json").read_text()
    else:
        text = p.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: invalid JSON ({exc})"]) from None
    return parse_config(data, name=p.stem)


def _with_method(run: RunConfig, method):
    if method is None:
        return run.config
    return replace(run.config, settings=replace(run.config.settings,
                                                method=METHOD_ALIASES[method]))


def _out_scale(run: RunConfig, units):
    return run.gamma_mhz if units == "MHz" else 1.0


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")


def _floats(xs):
    return [float(x) for x in xs]


def _averaged(config, zeeman, grid, workers=1):
    def generator(x):
        x = np.asarray(x, float)
        return _evaluate(config, x, workers=workers)
    return zeeman_average(generator, grid, zeeman, unit="Gamma")


def analyze(run: RunConfig, config: Configuration, units: str):
    """Scan, peaks, windows and slopes, reported in ``units``."""
    lo, hi, n = run.scan
    grid = np.linspace(lo, hi, n)
    trace = _averaged(config, run.zeeman, grid, run.workers)
    peaks = find_peaks(trace, run.prominence)
    minima = transparency_minima(trace, peaks) if len(peaks) >= 2 else np.zeros(0)
    h = config.scheme.gamma / 1000
    slopes = []
    for m in minima:
        d = _averaged(config, run.zeeman, np.array([m - h, m + h])).dispersion
        slopes.append((d[1] - d[0]) / (2 * h))
    scale = _out_scale(run, units)
    summary = {
        "name": run.name,
        "units": units,
        "points": int(n),
        "delta": config.drive.delta * scale,
        "peaks": {
            "count": len(peaks),
            "positions": _floats(peaks.positions * scale),
            "heights": _floats(peaks.heights),
            "prominences": _floats(peaks.prominences),
        },
        "separations": _floats(np.diff(peaks.positions) * scale),
        "minima": _floats(minima * scale),
        # slope of the normalized dispersion per output detuning unit
        "dispersion_slopes": _floats(np.array(slopes) / scale),
        "asymmetry": asymmetry(trace),
        "max_absorption": float(trace.absorption.max()),
        "warnings": list(config.warnings),
    }
    return trace, peaks, minima, summary


def cmd_spectrum(args, run: RunConfig):
    units = args.units or run.units
    config = _with_method(run, args.method)
    trace, peaks, minima, summary = analyze(run, config, units)
    scale = _out_scale(run, units)
    out = _prepare(args.out)
    out_trace = trace.rescaled(scale, units)
    out_trace.to_csv(out / "spectrum.csv")

    # the same spectrum as a fit-ready measured trace (MHz grid)
    kind = "transmission" if run.optical_depth is not None else "absorption"
    sig = transmission(trace, run.optical_depth) if kind == "transmission" else trace.absorption
    if args.noise:
        rng = np.random.default_rng(args.seed if args.seed is not None else run.seed)
        sig = sig + rng.normal(0, args.noise, sig.size)
    write_trace(ExperimentalTrace(trace.grid * run.gamma_mhz, sig, kind), out / "signal.csv")
    summary["files"] = ["spectrum.csv", "signal.csv", "summary.json"]
    if args.plot:
        from .plotting import plot_spectrum
        shown = PeakSet(peaks.positions * scale, peaks.heights, peaks.prominences, peaks.indices)
        plot_spectrum(out_trace, out / "spectrum.svg", shown, minima * scale, title=run.name)
        summary["files"].append("spectrum.svg")
    _write_json(out / "summary.json", summary)
    print(json.dumps({k: summary[k] for k in ("name", "units", "separations", "minima")}))
    return EXIT_OK


def oracle_points(run: RunConfig, n=None):
    """Detunings (gamma units) for the oracle comparison."""
    d = run.config.drive.delta
    lo = run.oracle.get("min", -2 * d if d > 0 else run.scan[0])
    hi = run.oracle.get("max", 2 * d if d > 0 else run.scan[1])
    n = n if n is not None else run.oracle.get("points", 5)
    if not (isinstance(n, int) and 1 <= n <= ORACLE_MAX_POINTS):
        raise ConfigError([f"oracle points must be between 1 and {ORACLE_MAX_POINTS} (got {n!r})"])
    return np.linspace(lo, hi, n) if n > 1 else np.array([0.5 * (lo + hi)])


def cmd_oracle_check(args, run: RunConfig):
    units = args.units or run.units
    config = _with_method(run, args.method)
    grid = oracle_points(run, args.points)
    floquet, _ = a0_grid(config, grid)
    rows = []
    for dp, af in zip(grid, floquet):
        ao, traj = oracle_a0(config.with_detuning(dp), IntegrationSettings())
        dev = abs(af - ao) / abs(ao) if ao != 0 else (0.0 if af == 0 else math.inf)
        rows.append({
            "delta_p": float(dp * _out_scale(run, units)),
            "floquet": [af.real, af.imag],
            "oracle": [ao.real, ao.imag],
            "relative_deviation": dev,
            "periods": traj.periods,
            "max_trace_error": traj.max_trace_error,
            "max_hermiticity_error": traj.max_hermiticity_error,
            "min_eigenvalue": traj.min_eigenvalue,
        })
    worst = max(r["relative_deviation"] for r in rows)
    # at and above the weak-probe limit the comparison is informational only
    nonlinear = bool(config.probe.omega_p >= WEAK_PROBE_LIMIT)
    report = {
        "name": run.name,
        "units": units,
        "omega_p": config.probe.omega_p,
        "tolerance": ORACLE_TOLERANCE,
        "max_relative_deviation": worst,
        "passed": bool(worst < ORACLE_TOLERANCE),
        "nonlinear_probe": bool(nonlinear),
        "points": rows,
    }
    if nonlinear:
        report["note"] = (f"omega_p = {config.probe.omega_p:g} gamma is at or above the weak-probe "
                          f"limit {WEAK_PROBE_LIMIT}; deviations include probe saturation")
    out = _prepare(args.out)
    _write_json(out / "oracle.json", report)
    print(json.dumps({"max_relative_deviation": worst, "passed": report["passed"],
                      "nonlinear_probe": nonlinear}))
    if not report["passed"]:
        print(f"oracle deviation {worst:.3e} exceeds {ORACLE_TOLERANCE:g}", file=sys.stderr)
        if not nonlinear:
            return EXIT_SOLVER
    return EXIT_OK


def default_fit_parameters(run: RunConfig) -> FitParameters:
    """Initial point taken from the configuration's own drive and line width."""
    c, g = run.config, run.gamma_mhz
    oc = c.drive.omega_c1
    dc2 = c.drive.delta_c2 * g
    sigma = run.zeeman.sigma * g
    span = max(abs(dc2), c.drive.delta * g, g)
    return FitParameters(
        omega_c=Bound(oc, 0.5 * oc, 2.0 * oc) if oc > 0 else Bound(0.0, 0.0, 0.0, True),
        delta_c2=Bound(dc2, dc2 - span, dc2 + span),
        gamma21=Bound(c.scheme.gamma21, 0.0, max(0.1, c.scheme.gamma21), True),
        zeeman_sigma=Bound(sigma, 0.0, max(3.0 * sigma, g)),
        amplitude=Bound(1.0, 0.0, 10.0),
        baseline=Bound(0.0, -1.0, 1.0),
    )


def cmd_fit(args, run: RunConfig):
    trace = load_trace(args.trace)
    spec = run.fit or {}
    try:
        initial = (FitParameters.from_dict(spec["parameters"]) if "parameters" in spec
                   else default_fit_parameters(run))
        opts = dict(spec.get("settings", {}))
        opts.setdefault("zeeman_points", run.zeeman.n_points)
        if run.zeeman.step is not None:
            opts.setdefault("zeeman_step", run.zeeman.step * run.gamma_mhz)
        opts["seed"] = args.seed if args.seed is not None else opts.get("seed", run.seed)
        settings = FitSettings(**opts)
    except (TypeError, ValueError) as exc:
        raise ConfigError([f"fit: {exc}"]) from None
    if spec.get("kind", trace.kind) != trace.kind:
        raise ConfigError([f"fit.kind {spec['kind']!r} does not match the trace ({trace.kind!r})"])

    config = _with_method(run, args.method)
    result = fit(initial, trace, config, settings)
    model = model_signal(result.parameters, trace.grid, config, trace.kind, settings)
    out = _prepare(args.out)
    report = {"name": run.name, "trace": str(args.trace), "kind": trace.kind,
              "initial": initial.to_dict(), **json.loads(result.to_json())}
    _write_json(out / "fit.json", report)
    with open(out / "overlay.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["delta_p_mhz", "data", "model"])
        for row in zip(trace.grid, trace.signal, model):
            w.writerow([repr(float(v)) for v in row])
    if args.plot:
        from .plotting import plot_overlay
        plot_overlay(trace.grid, trace.signal, model, out / "fit.svg", trace.kind, run.name)
    print(json.dumps({"parameters": result.parameters, "residual": result.residual,
                      "converged": result.converged}))
    return EXIT_OK


def sweep_config(config: Configuration, parameter: str, value_gamma: float) -> Configuration:
    """Copy of ``config`` with one parameter replaced (value in gamma units)."""
    d, scheme = config.drive, config.scheme
    if parameter == "omega_c":
        drive = replace(d, omega_c1=value_gamma, omega_c2=value_gamma if d.delta > 0 else 0.0)
    elif parameter == "delta":
        # keep the average coupling detuning fixed
        drive = replace(d, delta=value_gamma, delta_c2=d.delta_c2 - d.delta + value_gamma)
    elif parameter == "delta_c2":
        drive = replace(d, delta_c2=value_gamma)
    elif parameter == "gamma21":
        drive, scheme = d, replace(scheme, gamma21=value_gamma)
    else:
        raise ConfigError([f"parameter must be one of {SWEEP_PARAMETERS} (got {parameter!r})"])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", WeakProbeWarning)
        return validate(scheme, drive, config.probe, config.settings,
                        gamma_mhz=config.gamma_mhz)


def cmd_sweep(args, run: RunConfig):
    if args.parameter not in SWEEP_PARAMETERS:
        raise ConfigError([f"parameter must be one of {SWEEP_PARAMETERS} (got {args.parameter!r})"])
    if not args.values:
        raise ConfigError(["sweep needs at least one value"])
    units = args.units or run.units
    scale = _out_scale(run, units)
    g_in = run.gamma_mhz if run.units == "MHz" else 1.0
    base = _with_method(run, args.method)
    configs = [sweep_config(base, args.parameter, v / g_in) for v in args.values]
    out = _prepare(args.out)
    entries, traces = [], []
    index = {"name": run.name, "parameter": args.parameter, "units": units,
             "values": list(args.values), "entries": entries, "complete": False}
    for i, (value, config) in enumerate(zip(args.values, configs)):
        try:
            trace, peaks, minima, summary = analyze(run, config, units)
        except SolverError as exc:
            index["error"] = f"value {value}: {exc}"
            _write_json(out / "index.json", index)
            raise
        fname = f"trace_{i:03d}.csv"
        trace.rescaled(scale, units).to_csv(out / fname)
        traces.append(trace.rescaled(scale, units))
        entries.append({
            "value": value,
            "file": fname,
            "peak_count": summary["peaks"]["count"],
            "positions": summary["peaks"]["positions"],
            "separations": summary["separations"],
            "minima": summary["minima"],
            "asymmetry": summary["asymmetry"],
        })
    index["complete"] = True
    if args.plot:
        from .plotting import plot_sweep
        plot_sweep(traces, [f"{args.parameter} = {v:g}" for v in args.values],
                   out / "sweep.svg", title=run.name)
    _write_json(out / "index.json", index)
    print(json.dumps({"parameter": args.parameter,
                      "peak_counts": [e["peak_count"] for e in entries]}))
    return EXIT_OK


def _prepare(out):
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True,
                        help="config JSON path or bundled name (" + ", ".join(bundled_configs()) + ")")
    common.add_argument("--out", default=".", help="output directory (created if missing)")
    common.add_argument("--units", choices=("MHz", "Gamma"), default=None,
                        help="detuning unit of written traces and reports (default: the config's)")
    common.add_argument("--method", choices=("banded", "cf"), default=None,
                        help="harmonic solver (default: the config's)")
    common.add_argument("--plot", action="store_true", help="also write SVG figures")
    common.add_argument("--seed", type=int, default=None, help="random seed (unsigned 64-bit)")

    parser = argparse.ArgumentParser(
        prog="bichromatic-eit",
        description="Probe response of a bichromatically driven Lambda atom.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", parents=[common], help="scan the probe response")
    p.add_argument("--noise", type=float, default=0.0,
                   help="Gaussian noise added to signal.csv (signal units)")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("oracle-check", parents=[common],
                       help="compare against the time-domain master equation")
    p.add_argument("--points", type=int, default=None,
                   help=f"number of detunings (at most {ORACLE_MAX_POINTS})")
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("fit", parents=[common], help="fit a measured trace")
    p.add_argument("--trace", required=True, help="CSV with '# kind:' line and delta_p_mhz,signal")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sweep", parents=[common], help="scan over values of one parameter")
    p.add_argument("--parameter", required=True, help="one of " + ", ".join(SWEEP_PARAMETERS))
    p.add_argument("--values", type=float, nargs="*", default=[],
                   help="parameter values in the config's units")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError([f"--seed must be an unsigned 64-bit integer (got {args.seed})"])
        run = load_config(args.config)
        for note in run.config.warnings:
            print(f"warning: {note}", file=sys.stderr)
        return args.func(args, run)
    except (OSError, TraceFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ConfigError, ValueError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
