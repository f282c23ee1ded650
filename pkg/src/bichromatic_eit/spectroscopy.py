"""Spectra, peak and window location, dispersion slopes, line averaging."""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy import signal

from .model import Configuration
from .response import SolverError, response_grid

__all__ = [
    "SpectrumTrace",
    "PeakSet",
    "ZeemanModel",
    "PEAK_ABSORPTION_DEPTH",
    "DEFAULT_PROMINENCE",
    "scan",
    "find_peaks",
    "peak_separations",
    "transparency_minima",
    "dispersion_slope",
    "zeeman_average",
    "transmission",
    "asymmetry",
]

#: Optical depth giving 30 % absorption at the bare resonance (absorption = 1).
PEAK_ABSORPTION_DEPTH = math.log(1 / 0.7)
DEFAULT_PROMINENCE = 0.05
CSV_HEADER = ("delta_p", "absorption", "dispersion")


@dataclass(frozen=True)
class SpectrumTrace:
    """Absorption and dispersion sampled on an ascending detuning grid."""

    grid: np.ndarray
    absorption: np.ndarray
    dispersion: np.ndarray
    unit: str = "Gamma"

    def __post_init__(self):
        grid = np.asarray(self.grid, float)
        a = np.asarray(self.absorption, float)
        d = np.asarray(self.dispersion, float)
        if grid.ndim != 1 or grid.size < 2:
            raise ValueError("trace needs at least two grid points")
        if a.shape != grid.shape or d.shape != grid.shape:
            raise ValueError("absorption and dispersion must match the grid length")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("trace grid must be strictly ascending")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "absorption", a)
        object.__setattr__(self, "dispersion", d)

    def rescaled(self, factor: float, unit: str) -> "SpectrumTrace":
        """Same trace with the detuning axis multiplied by ``factor``."""
        return SpectrumTrace(self.grid * factor, self.absorption, self.dispersion, unit)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in zip(self.grid, self.absorption, self.dispersion):
            w.writerow([repr(float(v)) for v in row])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path, unit="Gamma") -> "SpectrumTrace":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or tuple(rows[0]) != CSV_HEADER:
            raise ValueError(f"{path}: expected header {','.join(CSV_HEADER)}")
        data = np.array([[float(v) for v in r] for r in rows[1:]], float)
        return cls(data[:, 0], data[:, 1], data[:, 2], unit)


@dataclass(frozen=True)
class PeakSet:
    positions: np.ndarray
    heights: np.ndarray
    prominences: np.ndarray
    indices: np.ndarray = field(default_factory=lambda: np.zeros(0, int))

    def __len__(self):
        return len(self.positions)

    def to_dict(self):
        return {
            "positions": [float(x) for x in self.positions],
            "heights": [float(x) for x in self.heights],
            "prominences": [float(x) for x in self.prominences],
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text


@dataclass(frozen=True)
class ZeemanModel:
    """Gaussian spread of probe detuning shifts.

    ``sigma`` and ``step`` are in the unit of the grid the model is applied
    to (MHz for measured traces).  With ``step=None`` the average uses an
    ``n_points`` Gauss-Hermite rule, which is cheap but aliases features
    narrower than ``sigma`` into spurious side peaks.  With a ``step`` the
    shifts form a uniform lattice of that spacing (or finer) out to
    ``+/- TAIL * sigma``, which resolves narrow features.
    """

    sigma: float = 0.0
    n_points: int = 7
    step: float | None = None

    TAIL = 6.0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be non-negative (got {self.sigma!r})")
        if self.n_points < 1 or self.n_points % 2 == 0:
            raise ValueError(f"n_points must be odd and >= 1 (got {self.n_points!r})")
        if self.step is not None and not self.step > 0:
            raise ValueError(f"step must be positive (got {self.step!r})")

    def nodes(self, step: float | None = None):
        """Shifts and weights (summing to 1) of the averaging rule.

        ``step`` overrides the lattice spacing of the uniform rule.
        """
        step = self.step if step is None else step
        if step is None or self.sigma == 0:
            x, w = hermegauss(self.n_points)
            return self.sigma * x, w / w.sum()
        half = int(math.ceil(self.TAIL * self.sigma / step))
        x = np.arange(-half, half + 1) * step
        w = np.exp(-0.5 * (x / self.sigma) ** 2)
        return x, w / w.sum()


def scan(config: Configuration, lo: float, hi: float, n_points: int,
         method: str | None = None, workers: int = 1) -> SpectrumTrace:
    """Probe response on a uniform grid of ``n_points`` detunings in ``[lo, hi]``.

    Points are independent; ``workers > 1`` splits the grid across threads
    without changing any value.
    """
    if not lo < hi:
        raise ValueError("scan range must satisfy min < max")
    if n_points < 2:
        raise ValueError("scan needs at least two points")
    grid = np.linspace(lo, hi, n_points)
    return SpectrumTrace(grid, *_evaluate(config, grid, method, workers))


def _evaluate(config, grid, method=None, workers=1):
    grid = np.asarray(grid, float)
    try:
        if workers <= 1:
            return response_grid(config, grid, method)
        chunks = np.array_split(grid, workers)
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda g: response_grid(config, g, method), chunks))
        return (np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]))
    except SolverError as exc:
        raise SolverError(f"{exc} (scan over [{grid[0]:g}, {grid[-1]:g}])") from exc


def _vertex(x, y, i):
    """Vertex of the parabola through samples ``i-1, i, i+1``."""
    x0, x1, x2 = x[i - 1], x[i], x[i + 1]
    y0, y1, y2 = y[i - 1], y[i], y[i + 1]
    s01 = (y1 - y0) / (x1 - x0)
    a = ((y2 - y1) / (x2 - x1) - s01) / (x2 - x0)
    if a == 0:
        return x1, y1
    b = s01 - a * (x0 + x1)
    xv = -b / (2 * a)
    if not x0 <= xv <= x2:
        return x1, y1
    return xv, y1 + (xv - x1) * (b + a * (xv + x1))


def find_peaks(trace: SpectrumTrace, prominence_threshold: float = DEFAULT_PROMINENCE) -> PeakSet:
    """Interior absorption maxima with prominence above a fraction of the maximum."""
    if trace.grid.size < 3:
        raise ValueError("peak finding needs at least three grid points")
    if not 0 < prominence_threshold <= 1:
        raise ValueError("prominence_threshold must lie in (0, 1]")
    y = trace.absorption
    top = float(np.max(y))
    if top <= 0:
        return PeakSet(np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0, int))
    idx, props = signal.find_peaks(y, prominence=prominence_threshold * top)
    refined = [_vertex(trace.grid, y, i) for i in idx]
    pos = np.array([r[0] for r in refined], float)
    hts = np.array([r[1] for r in refined], float)
    return PeakSet(pos, hts, np.asarray(props["prominences"], float), np.asarray(idx, int))


def peak_separations(peaks: PeakSet) -> np.ndarray:
    if len(peaks) < 2:
        raise ValueError(f"need at least two peaks, found {len(peaks)}")
    return np.diff(peaks.positions)


def transparency_minima(trace: SpectrumTrace, peaks: PeakSet) -> np.ndarray:
    """Refined absorption minimum between each pair of adjacent peaks."""
    if trace.grid.size < 3:
        raise ValueError("need at least three grid points")
    if len(peaks) < 2:
        raise ValueError(f"need at least two peaks, found {len(peaks)}")
    y = trace.absorption
    out = []
    for lo, hi in zip(peaks.indices[:-1], peaks.indices[1:]):
        i = lo + int(np.argmin(y[lo:hi + 1]))
        if lo < i < hi:
            out.append(_vertex(trace.grid, -y, i)[0])
        else:
            out.append(trace.grid[i])
    return np.array(out, float)


def dispersion_slope(config: Configuration, at_detuning: float, h: float | None = None,
                     method: str | None = None) -> float:
    """Centered-difference slope of the normalized dispersion.

    Positive values mark normal dispersion, the slow-light side.  ``h``
    defaults to ``gamma / 1000``.
    """
    h = config.scheme.gamma / 1000 if h is None else h
    if not h > 0:
        raise ValueError("h must be positive")
    _, d = response_grid(config, [at_detuning - h, at_detuning + h], method)
    return float((d[1] - d[0]) / (2 * h))


def zeeman_average(generator, grid, model: ZeemanModel, unit: str = "Gamma") -> SpectrumTrace:
    """Average ``generator(grid + s)`` over Gaussian detuning shifts ``s``.

    ``generator`` maps a detuning array to ``(absorption, dispersion)``.
    """
    grid = np.asarray(grid, float)
    if model.sigma == 0:
        a, d = generator(grid)
        return SpectrumTrace(grid, a, d, unit)
    if model.step is not None and grid.size > 1:
        spacing = np.diff(grid)
        if np.allclose(spacing, spacing[0], rtol=1e-9, atol=0):
            return _lattice_average(generator, grid, spacing[0], model, unit)
    shifts, weights = model.nodes()
    # one call over all shifted copies keeps the solver batched
    a, d = generator((grid[None, :] + shifts[:, None]).ravel())
    a = np.asarray(a).reshape(shifts.size, grid.size)
    d = np.asarray(d).reshape(shifts.size, grid.size)
    return SpectrumTrace(grid, weights @ a, weights @ d, unit)


def _lattice_average(generator, grid, spacing, model, unit):
    # shifts on a lattice that divides the grid spacing, so every shifted
    # copy lands on one shared fine grid evaluated once
    k = max(1, math.ceil(spacing / model.step - 1e-9))
    shifts, weights = model.nodes(spacing / k)
    half = shifts.size // 2
    fine = grid[0] + np.arange(-half, (grid.size - 1) * k + half + 1) * (spacing / k)
    a, d = generator(fine)
    idx = (np.arange(grid.size) * k)[:, None] + np.arange(shifts.size)[None, :]
    return SpectrumTrace(grid, np.asarray(a)[idx] @ weights, np.asarray(d)[idx] @ weights, unit)


def transmission(trace: SpectrumTrace, optical_depth: float) -> np.ndarray:
    """Beer-Lambert transmission ``exp(-optical_depth * absorption)``."""
    if optical_depth < 0:
        raise ValueError("optical_depth must be non-negative")
    return np.exp(-optical_depth * trace.absorption)


def asymmetry(trace: SpectrumTrace) -> float:
    """``max |A(x) - A(-x)|`` over the grid, relative to ``max A``.

    Mirror values come from linear interpolation; on a grid symmetric about
    zero they are exact samples.
    """
    x, y = trace.grid, trace.absorption
    inside = (-x >= x[0]) & (-x <= x[-1])
    mirror = np.interp(-x[inside], x, y)
    return float(np.max(np.abs(y[inside] - mirror)) / np.max(y))
