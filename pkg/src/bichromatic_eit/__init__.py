"""Weak-probe response of a three-level Lambda atom under a bichromatic coupling field.

The coupling field has two equal-amplitude components at ``w_c +/- delta``.
The steady state is periodic at the beat frequency, and its Fourier
harmonics obey a three-term recurrence solved by a banded linear system
or a continued fraction.  A time-domain master-equation integrator serves
as an independent check.  Spectra, peak finding, line averaging and fits
to measured traces are built on top.
"""
from .model import (AtomicLevelScheme, BichromaticDrive, ConfigError, Configuration,
                    ProbeField, SolverSettings, WeakProbeWarning, average_coupling_detuning,
                    dressed_ladder, validate)
from .response import (HarmonicSpectrum, ProbeResponse, SolverError, a0_grid, build_recurrence,
                       probe_response, response_grid, solve_banded, solve_continued_fraction)
from .oracle import (IntegrationSettings, OracleConvergenceError, Trajectory, extract_harmonic,
                     integrate_to_periodic_steady_state, oracle_a0)
from .spectroscopy import (PeakSet, SpectrumTrace, ZeemanModel, asymmetry, dispersion_slope,
                           find_peaks, peak_separations, scan, transmission,
                           transparency_minima, zeeman_average)
from .fitting import (Bound, ExperimentalTrace, FitParameters, FitResult, FitSettings, fit,
                      load_trace, residual)

__version__ = "0.1.0"
