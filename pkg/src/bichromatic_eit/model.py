"""Parameterization of the bichromatically driven three-level Lambda system.

Level labels follow the usual Lambda convention: ``|1>`` and ``|2>`` are the
ground states, ``|3>`` the excited state.  The weak probe drives 1-3 and the
two-component coupling field drives 2-3 at ``w_c +/- delta``.

All rates are stored internally in units of the excited-state decay rate
``gamma``.  :func:`validate` performs the conversion from either MHz or
``Gamma`` units and is the single entry point used by the solvers.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import List, Tuple

import numpy as np

__all__ = [
    "AtomicLevelScheme",
    "BichromaticDrive",
    "ProbeField",
    "SolverSettings",
    "Configuration",
    "ConfigError",
    "WeakProbeWarning",
    "DEFAULT_GAMMA_MHZ",
    "WEAK_PROBE_LIMIT",
    "average_coupling_detuning",
    "dressed_ladder",
    "validate",
]

#: Natural linewidth of the Rb D2 line used for MHz <-> Gamma conversion.
DEFAULT_GAMMA_MHZ = 6.0
#: Probe Rabi frequencies above this (in units of gamma) leave the weak-probe regime.
WEAK_PROBE_LIMIT = 0.2

METHODS = ("banded", "continued_fraction")
UNITS = ("MHz", "Gamma")


class ConfigError(ValueError):
    """Raised when a configuration violates one or more invariants.

    ``problems`` holds one message per violated field.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class WeakProbeWarning(UserWarning):
    pass


@dataclass(frozen=True)
class AtomicLevelScheme:
    """Decay rates of the Lambda system.

    Parameters
    ----------
    gamma : float
        Excited-state decay rate.
    branch_31, branch_32 : float
        Fractions of the decay of ``|3>`` that end in ``|1>`` and ``|2>``.
    gamma21 : float
        Decay rate of the ground-state coherence ``rho_21``.
    """

    gamma: float = 1.0
    branch_31: float = 0.5
    branch_32: float = 0.5
    gamma21: float = 0.01


@dataclass(frozen=True)
class BichromaticDrive:
    """Two-component coupling field.

    ``delta`` is half the separation of the two components and
    ``delta_c2 = w_0 - w_c2`` the detuning of the red component.  A
    monochromatic field is written with ``delta = 0`` and ``omega_c2 = 0``.
    """

    omega_c1: float
    omega_c2: float
    delta: float
    delta_c2: float

    @classmethod
    def symmetric(cls, omega_c, delta, average_detuning=0.0):
        """Equal-amplitude drive with the given average detuning."""
        return cls(omega_c, omega_c, delta, average_detuning + delta)

    @classmethod
    def monochromatic(cls, omega_c, detuning=0.0):
        return cls(omega_c, 0.0, 0.0, detuning)


@dataclass(frozen=True)
class ProbeField:
    omega_p: float = 0.1
    delta_p: float = 0.0


@dataclass(frozen=True)
class SolverSettings:
    method: str = "banded"
    n_max: int = 8
    rel_tol: float = 1e-10
    adaptive: bool = True


@dataclass(frozen=True)
class Configuration:
    """A validated configuration with every rate in units of gamma."""

    scheme: AtomicLevelScheme
    drive: BichromaticDrive
    probe: ProbeField
    settings: SolverSettings
    gamma_mhz: float = DEFAULT_GAMMA_MHZ
    warnings: Tuple[str, ...] = field(default=(), compare=False)

    def with_detuning(self, delta_p):
        return replace(self, probe=replace(self.probe, delta_p=float(delta_p)))

    def to_mhz(self, value):
        return value * self.gamma_mhz

    def from_mhz(self, value):
        return value / self.gamma_mhz


def average_coupling_detuning(drive: BichromaticDrive) -> float:
    """Detuning of the mean coupling frequency, ``delta_c2 - delta``.

    Zero when the average of the two components sits on the 2-3 resonance.
    """
    return drive.delta_c2 - drive.delta


def dressed_ladder(delta: float, m_max: int) -> np.ndarray:
    """Positions ``m * delta`` of the dressed-state transitions, ``|m| <= m_max``."""
    if m_max < 0:
        raise ValueError("m_max must be non-negative")
    return np.arange(-m_max, m_max + 1) * float(delta)


def _finite(name, value, problems):
    if not math.isfinite(value):
        problems.append(f"{name} must be finite (got {value!r})")
        return False
    return True


def _check(scheme, drive, probe, settings):
    problems: List[str] = []
    for obj in (scheme, drive, probe):
        for key, value in vars(obj).items():
            try:
                value = float(value)
            except (TypeError, ValueError):
                problems.append(f"{key} must be a number (got {value!r})")
                continue
            _finite(key, value, problems)
    if problems:
        return problems

    if not scheme.gamma > 0:
        problems.append(f"gamma must be positive (got {scheme.gamma!r})")
    if scheme.branch_31 < 0:
        problems.append(f"branch_31 must be non-negative (got {scheme.branch_31!r})")
    if scheme.branch_32 < 0:
        problems.append(f"branch_32 must be non-negative (got {scheme.branch_32!r})")
    if scheme.branch_31 + scheme.branch_32 > 1 + 1e-12:
        problems.append(
            "branch_31 + branch_32 must not exceed 1 "
            f"(got {scheme.branch_31 + scheme.branch_32!r})"
        )
    if scheme.gamma21 < 0:
        problems.append(f"gamma21 must be non-negative (got {scheme.gamma21!r})")

    if drive.omega_c1 < 0:
        problems.append(f"omega_c1 must be non-negative (got {drive.omega_c1!r})")
    if drive.omega_c2 < 0:
        problems.append(f"omega_c2 must be non-negative (got {drive.omega_c2!r})")
    if drive.delta < 0:
        problems.append(f"delta must be non-negative (got {drive.delta!r})")
    elif drive.delta == 0 and drive.omega_c2 != 0:
        problems.append(
            "delta = 0 requires omega_c2 = 0 (fold the monochromatic field into omega_c1)"
        )

    if not probe.omega_p > 0:
        problems.append(f"omega_p must be positive (got {probe.omega_p!r})")

    if settings.method not in METHODS:
        problems.append(f"method must be one of {METHODS} (got {settings.method!r})")
    if not isinstance(settings.n_max, (int, np.integer)) or settings.n_max < 2:
        problems.append(f"n_max must be an integer >= 2 (got {settings.n_max!r})")
    if not 0 < settings.rel_tol < 1e-2:
        problems.append(f"rel_tol must lie in (0, 1e-2) (got {settings.rel_tol!r})")
    return problems


def validate(
    scheme: AtomicLevelScheme,
    drive: BichromaticDrive,
    probe: ProbeField,
    settings: SolverSettings | None = None,
    units: str = "Gamma",
    gamma_mhz: float | None = None,
) -> Configuration:
    """Check every invariant and normalize all rates to units of gamma.

    With ``units="MHz"`` the scheme's ``gamma`` is the linewidth in MHz and
    becomes the conversion factor.  With ``units="Gamma"`` the values are
    divided by ``scheme.gamma`` (normally 1) and ``gamma_mhz`` (default
    6 MHz) is kept for I/O.  Every violated invariant is reported at once
    through :class:`ConfigError`.
    """
    settings = settings or SolverSettings()
    if units not in UNITS:
        raise ConfigError([f"units must be one of {UNITS} (got {units!r})"])
    problems = _check(scheme, drive, probe, settings)
    if problems:
        raise ConfigError(problems)

    g = float(scheme.gamma)
    if units == "MHz":
        gamma_mhz = g
    elif gamma_mhz is None:
        gamma_mhz = DEFAULT_GAMMA_MHZ
    if not gamma_mhz > 0:
        raise ConfigError([f"gamma_mhz must be positive (got {gamma_mhz!r})"])

    scheme_n = AtomicLevelScheme(1.0, float(scheme.branch_31), float(scheme.branch_32),
                                 scheme.gamma21 / g)
    drive_n = BichromaticDrive(drive.omega_c1 / g, drive.omega_c2 / g,
                               drive.delta / g, drive.delta_c2 / g)
    probe_n = ProbeField(probe.omega_p / g, probe.delta_p / g)
    settings_n = SolverSettings(settings.method, int(settings.n_max),
                                float(settings.rel_tol), bool(settings.adaptive))

    notes = []
    if probe_n.omega_p > WEAK_PROBE_LIMIT:
        notes.append(
            f"omega_p = {probe_n.omega_p:g} gamma exceeds the weak-probe limit "
            f"{WEAK_PROBE_LIMIT} gamma; the linear response may be inaccurate"
        )
        warnings.warn(notes[-1], WeakProbeWarning, stacklevel=2)
    return Configuration(scheme_n, drive_n, probe_n, settings_n, float(gamma_mhz), tuple(notes))
