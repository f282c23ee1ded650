"""Least-squares fits of the line-averaged model to measured probe traces.

The fitted quantities are the common coupling Rabi frequency, the red
component's detuning, the ground-coherence decay, the Gaussian line-average
width and a vertical scale and offset.  The component separation is taken
as known and never fitted.  Detunings of measured traces are in MHz.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from scipy import optimize

from .model import BichromaticDrive, Configuration
from .response import SolverError, response_grid
from .spectroscopy import PEAK_ABSORPTION_DEPTH, ZeemanModel, zeeman_average

__all__ = [
    "Bound",
    "FitParameters",
    "FitSettings",
    "FitResult",
    "ExperimentalTrace",
    "TraceFormatError",
    "load_trace",
    "write_trace",
    "model_shape",
    "model_signal",
    "residual",
    "fit",
]

KINDS = ("absorption", "transmission")


class TraceFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Bound:
    value: float
    lower: float = -math.inf
    upper: float = math.inf
    fixed: bool = False

    @property
    def free(self):
        return not self.fixed


@dataclass(frozen=True)
class FitParameters:
    """Model parameters with bounds.

    Units: ``omega_c`` and ``gamma21`` in gamma, ``delta_c2`` and
    ``zeeman_sigma`` in MHz; ``amplitude`` and ``baseline`` are in signal
    units.
    """

    omega_c: Bound
    delta_c2: Bound
    gamma21: Bound
    zeeman_sigma: Bound
    amplitude: Bound
    baseline: Bound

    def __post_init__(self):
        for f in fields(self):
            b = getattr(self, f.name)
            if not isinstance(b, Bound):
                b = Bound(*b) if isinstance(b, (tuple, list)) else Bound(**b)
                object.__setattr__(self, f.name, b)
            if not b.lower <= b.value <= b.upper:
                raise ValueError(
                    f"{f.name}: initial value {b.value!r} outside [{b.lower!r}, {b.upper!r}]")

    @property
    def names(self):
        return [f.name for f in fields(self)]

    @property
    def free_names(self):
        return [n for n in self.names if getattr(self, n).free]

    def values(self):
        return {n: getattr(self, n).value for n in self.names}

    def with_values(self, **values):
        return replace(self, **{k: replace(getattr(self, k), value=float(v))
                                for k, v in values.items()})

    def to_dict(self):
        return {n: asdict(getattr(self, n)) for n in self.names}

    @classmethod
    def from_dict(cls, data):
        return cls(**{k: Bound(**v) for k, v in data.items()})


@dataclass(frozen=True)
class FitSettings:
    seed: int = 0
    restarts: int = 3
    max_evaluations: int = 2000
    spread_tol: float = 1e-8
    simplex_scale: float = 0.2
    restart_scale: float = 0.1
    zeeman_points: int = 7
    zeeman_step: float | None = None
    optical_depth: float = PEAK_ABSORPTION_DEPTH
    weights: tuple | None = None


@dataclass
class FitResult:
    parameters: dict
    residual: float
    n_evaluations: int
    converged: bool
    initial_residual: float = math.nan
    message: str = ""
    settings: dict = field(default_factory=dict)

    def to_json(self, path=None):
        text = json.dumps(asdict(self), indent=2, default=float)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text


@dataclass(frozen=True)
class ExperimentalTrace:
    grid: np.ndarray
    signal: np.ndarray
    kind: str = "absorption"

    def __post_init__(self):
        grid = np.asarray(self.grid, float)
        sig = np.asarray(self.signal, float)
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS} (got {self.kind!r})")
        if grid.shape != sig.shape or grid.ndim != 1:
            raise ValueError("grid and signal must be 1-D arrays of equal length")
        if grid.size < 10:
            raise ValueError(f"trace needs at least 10 points (got {grid.size})")
        if not (np.all(np.isfinite(grid)) and np.all(np.isfinite(sig))):
            raise ValueError("trace contains non-finite values")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("trace grid must be strictly ascending")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "signal", sig)


def load_trace(source) -> ExperimentalTrace:
    """Read a ``delta_p_mhz,signal`` CSV with a ``# kind: ...`` comment line."""
    kind = None
    grid, sig = [], []
    header_seen = False
    with open(source, newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            if text.startswith("#"):
                key, _, val = text[1:].partition(":")
                if key.strip().lower() == "kind":
                    kind = val.strip()
                continue
            if not header_seen:
                cols = [c.strip() for c in text.split(",")]
                if cols != ["delta_p_mhz", "signal"]:
                    raise TraceFormatError(
                        f"{source}:{lineno}: expected header 'delta_p_mhz,signal', got {text!r}")
                header_seen = True
                continue
            parts = next(csv.reader([text]))
            try:
                if len(parts) != 2:
                    raise ValueError
                x, y = float(parts[0]), float(parts[1])
            except ValueError:
                raise TraceFormatError(f"{source}:{lineno}: malformed row {text!r}") from None
            if not (math.isfinite(x) and math.isfinite(y)):
                raise TraceFormatError(f"{source}:{lineno}: non-finite value in {text!r}")
            grid.append(x)
            sig.append(y)
    if kind is None:
        raise TraceFormatError(f"{source}: missing '# kind:' line")
    if not header_seen:
        raise TraceFormatError(f"{source}: missing header")
    grid = np.array(grid)
    bad = np.nonzero(np.diff(grid) <= 0)[0]
    if bad.size:
        raise TraceFormatError(f"{source}: grid not ascending at data row {bad[0] + 2}")
    try:
        return ExperimentalTrace(grid, np.array(sig), kind)
    except ValueError as exc:
        raise TraceFormatError(f"{source}: {exc}") from exc


def write_trace(trace: ExperimentalTrace, path):
    with open(path, "w", newline="") as fh:
        fh.write(f"# kind: {trace.kind}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["delta_p_mhz", "signal"])
        for x, y in zip(trace.grid, trace.signal):
            w.writerow([repr(float(x)), repr(float(y))])


def _config_for(theta: dict, base: Configuration) -> Configuration:
    g = base.gamma_mhz
    drive = BichromaticDrive(theta["omega_c"], theta["omega_c"], base.drive.delta,
                             theta["delta_c2"] / g)
    scheme = replace(base.scheme, gamma21=theta["gamma21"])
    return replace(base, scheme=scheme, drive=drive)


def model_shape(theta: dict, grid_mhz, base: Configuration, kind="absorption",
                settings: FitSettings | None = None):
    """Line-averaged absorption (or transmission) before scale and offset."""
    settings = settings or FitSettings()
    config = _config_for(theta, base)
    g = base.gamma_mhz

    def generator(x_mhz):
        return response_grid(config, np.asarray(x_mhz) / g)

    line = ZeemanModel(theta["zeeman_sigma"], settings.zeeman_points, settings.zeeman_step)
    trace = zeeman_average(generator, grid_mhz, line, unit="MHz")
    if kind == "absorption":
        return trace.absorption
    return np.exp(-settings.optical_depth * trace.absorption)


def model_signal(theta: dict, grid_mhz, base: Configuration, kind="absorption",
                 settings: FitSettings | None = None):
    """Model signal ``baseline + amplitude * shape`` on a MHz grid."""
    shape = model_shape(theta, grid_mhz, base, kind, settings)
    return theta["baseline"] + theta["amplitude"] * shape


def _sse(model, trace, settings):
    diff = model - trace.signal
    w = 1.0 if settings.weights is None else np.asarray(settings.weights, float)
    return float(np.sum(w * diff * diff))


def residual(theta: FitParameters, trace: ExperimentalTrace, base: Configuration,
             settings: FitSettings | None = None) -> float:
    """Sum of squared deviations between model and measured signal."""
    settings = settings or FitSettings()
    if isinstance(theta, FitParameters):
        for n in theta.names:
            b = getattr(theta, n)
            if not b.lower <= b.value <= b.upper:
                raise ValueError(f"{n} = {b.value!r} outside its bounds")
        values = theta.values()
    else:
        values = dict(theta)
    try:
        model = model_signal(values, trace.grid, base, trace.kind, settings)
    except SolverError as exc:
        raise SolverError(f"model evaluation failed for {values}: {exc}") from exc
    return _sse(model, trace, settings)


def _linear_part(shape, trace, values, linear, bounds, settings):
    """Best ``amplitude``/``baseline`` for a fixed shape, clipped to bounds."""
    y = trace.signal
    w = np.ones_like(y) if settings.weights is None else np.asarray(settings.weights, float)
    sw = np.sqrt(w)
    out = dict(values)
    if set(linear) == {"amplitude", "baseline"}:
        design = np.column_stack([shape, np.ones_like(shape)]) * sw[:, None]
        (amp, off), *_ = np.linalg.lstsq(design, y * sw, rcond=None)
        amp = float(np.clip(amp, *bounds["amplitude"]))
        # re-solve the offset against the clipped scale
        off = float(np.sum(w * (y - amp * shape)) / np.sum(w))
        out["amplitude"], out["baseline"] = amp, float(np.clip(off, *bounds["baseline"]))
    elif linear == ["amplitude"]:
        r = y - values["baseline"]
        denom = float(np.sum(w * shape * shape))
        amp = float(np.sum(w * shape * r)) / denom if denom > 0 else values["amplitude"]
        out["amplitude"] = float(np.clip(amp, *bounds["amplitude"]))
    elif linear == ["baseline"]:
        off = float(np.sum(w * (y - values["amplitude"] * shape)) / np.sum(w))
        out["baseline"] = float(np.clip(off, *bounds["baseline"]))
    return out


def fit(initial: FitParameters, trace: ExperimentalTrace, base: Configuration,
        settings: FitSettings | None = None) -> FitResult:
    """Bounded Nelder-Mead fit with restarts.

    ``amplitude`` and ``baseline`` enter linearly; when free they are solved
    exactly by least squares at every simplex vertex, and the simplex runs
    over the remaining free parameters mapped to the unit interval of their
    bounds (so the stopping spread is relative to each range).  After the
    first descent, ``settings.restarts`` further descents start from
    randomly perturbed copies of the best point.  The best of all runs is
    returned and is never worse than the initial point.
    """
    settings = settings or FitSettings()
    echo = asdict(settings)
    free = initial.free_names
    start = initial.values()
    bounds = {n: (getattr(initial, n).lower, getattr(initial, n).upper) for n in initial.names}
    linear = [n for n in ("amplitude", "baseline") if n in free]
    nonlinear = [n for n in free if n not in linear]
    evaluations = 0

    def evaluate(values):
        nonlocal evaluations
        evaluations += 1
        try:
            shape = model_shape(values, trace.grid, base, trace.kind, settings)
        except SolverError as exc:
            raise SolverError(f"model evaluation failed for {values}: {exc}") from exc
        values = _linear_part(shape, trace, values, linear, bounds, settings)
        return _sse(values["baseline"] + values["amplitude"] * shape, trace, settings), values

    f0 = residual(initial, trace, base, settings)
    evaluations += 1
    if not free:
        return FitResult(start, f0, evaluations, True, f0, "all parameters fixed", echo)

    best_f, best_values = f0, dict(start)
    if not nonlinear:
        f, values = evaluate(start)
        if f < best_f:
            best_f, best_values = f, values
        return FitResult(best_values, best_f, evaluations, True, f0,
                         "linear parameters solved directly", echo)

    lo = np.array([bounds[n][0] for n in nonlinear])
    hi = np.array([bounds[n][1] for n in nonlinear])
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValueError("free parameters need finite bounds")
    span = np.where(hi > lo, hi - lo, 1.0)

    def objective(u):
        nonlocal best_f, best_values
        values = dict(start)
        values.update(zip(nonlinear, lo + np.clip(u, 0, 1) * span))
        f, values = evaluate(values)
        if f < best_f:
            best_f, best_values = f, values
        return f

    def simplex_at(u):
        pts = [u]
        for k in range(u.size):
            step = np.zeros(u.size)
            h = settings.simplex_scale
            step[k] = h if u[k] + h <= 1 else -h
            pts.append(u + step)
        return np.array(pts)

    def best_u():
        return (np.array([best_values[n] for n in nonlinear]) - lo) / span

    rng = np.random.default_rng(settings.seed)
    messages = []
    any_success = False
    u = best_u()
    for run in range(settings.restarts + 1):
        if run:
            u = np.clip(best_u() + rng.normal(0, settings.restart_scale, u.size), 0, 1)
        f_start = objective(u)
        res = optimize.minimize(
            objective, u, method="Nelder-Mead", bounds=[(0, 1)] * u.size,
            options={
                "initial_simplex": simplex_at(u),
                "maxfev": settings.max_evaluations,
                "xatol": settings.spread_tol,
                "fatol": settings.spread_tol * max(f_start, 1e-300),
                "adaptive": False,
            },
        )
        messages.append(f"run {run}: f={res.fun:.6g} nfev={res.nfev} ({res.message})")
        any_success |= bool(res.success)

    improved = best_f < f0
    converged = any_success and (improved or f0 == 0)
    if not improved:
        messages.append("no run improved on the initial point")
    params = {k: float(v) for k, v in best_values.items()}
    return FitResult(params, best_f, evaluations, converged, f0, "; ".join(messages), echo)
