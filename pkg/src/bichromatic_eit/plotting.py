"""Static SVG figures for spectra, fit overlays and sweeps.

Figures are drawn on an explicit SVG canvas (no pyplot state) with the
creation date suppressed and a fixed hash salt, so rerunning a command
writes byte-identical files.
"""
from __future__ import annotations

import matplotlib
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.figure import Figure

__all__ = ["plot_spectrum", "plot_overlay", "plot_sweep"]

_STYLE = {
    "svg.hashsalt": "bichromatic-eit",
    "svg.fonttype": "path",
    "font.size": 9,
    "axes.linewidth": 0.8,
    "lines.linewidth": 1.2,
}


def _save(fig, path):
    FigureCanvasSVG(fig)
    fig.savefig(path, format="svg", metadata={"Date": None})


def _axis_label(unit):
    return r"probe detuning $\Delta_p$ (" + ("MHz" if unit == "MHz" else r"$\Gamma$") + ")"


def plot_spectrum(trace, path, peaks=None, minima=None, title=None):
    """Absorption (solid) and dispersion (dashed) against probe detuning."""
    with matplotlib.rc_context(_STYLE):
        fig = Figure(figsize=(5.0, 3.4))
        ax = fig.add_subplot()
        ax.plot(trace.grid, trace.absorption, "k-", label="absorption")
        ax.plot(trace.grid, trace.dispersion, "k--", label="dispersion")
        if peaks is not None and len(peaks):
            ax.plot(peaks.positions, peaks.heights, "rv", ms=4, label="peaks")
        if minima is not None and len(minima):
            for x in minima:
                ax.axvline(x, color="0.6", lw=0.6, ls=":")
        ax.axhline(0, color="0.8", lw=0.5)
        ax.set_xlabel(_axis_label(trace.unit))
        ax.set_ylabel(r"response ($\Gamma/\Omega_p$)")
        ax.set_xlim(trace.grid[0], trace.grid[-1])
        if title:
            ax.set_title(title)
        ax.legend(frameon=False, loc="upper right")
        fig.tight_layout()
        _save(fig, path)


def plot_overlay(grid, data, model, path, kind="absorption", title=None):
    """Measured signal (solid) with the fitted model (dashed)."""
    with matplotlib.rc_context(_STYLE):
        fig = Figure(figsize=(5.0, 3.4))
        ax = fig.add_subplot()
        ax.plot(grid, data, "k-", lw=0.9, label="data")
        ax.plot(grid, model, "r--", label="fit")
        ax.set_xlabel(_axis_label("MHz"))
        ax.set_ylabel(kind)
        ax.set_xlim(grid[0], grid[-1])
        if title:
            ax.set_title(title)
        ax.legend(frameon=False)
        fig.tight_layout()
        _save(fig, path)


def plot_sweep(traces, labels, path, title=None):
    """Absorption traces of a parameter sweep, offset vertically."""
    with matplotlib.rc_context(_STYLE):
        fig = Figure(figsize=(5.0, 1.2 + 0.9 * len(traces)))
        ax = fig.add_subplot()
        offset = 0.0
        for tr, lab in zip(traces, labels):
            ax.plot(tr.grid, tr.absorption + offset, "k-")
            ax.text(tr.grid[-1], offset + 0.05, lab, ha="right", va="bottom", fontsize=8)
            offset += 1.1 * max(float(tr.absorption.max()), 1e-12)
        ax.set_xlabel(_axis_label(traces[0].unit if traces else "Gamma"))
        ax.set_ylabel("absorption (offset)")
        ax.set_yticks([])
        if title:
            ax.set_title(title)
        fig.tight_layout()
        _save(fig, path)
