"""Time-domain master-equation integration for the driven Lambda atom.

Provides ground truth for the harmonic solvers: the full three-level
density matrix (no weak-probe linearization) is integrated with fixed-step
classical RK4 until the stroboscopic map over one beat period
``T = 2 pi / delta`` stops changing, and Fourier components of the final
period are compared against ``a_n``.

Basis order is ``|1>, |2>, |3>`` (indices 0, 1, 2).  In the doubled rotating
frame::

    H(t) = -dp |3><3| - (dp - dc) |2><2|
           - (Wp/2) |3><1| - (Wc(t)/2) |3><2| + h.c.
    Wc(t) = W1 e^{-i d t} + W2 e^{+i d t}

Decay ``|3> -> |1>`` and ``|3> -> |2>`` follows the branching fractions;
any remainder leaves the system.  ``rho_21`` dephases at ``gamma21``.

The generator is linear in ``rho`` and periodic in ``t``, so every RK4 step
is a fixed 9x9 matrix.  These step matrices are composed once into the
one-period map; iterating that map is the same RK4 trajectory, sampled
stroboscopically.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Configuration, average_coupling_detuning
from .response import SolverError

__all__ = [
    "IntegrationSettings",
    "Trajectory",
    "OracleConvergenceError",
    "hamiltonian",
    "rho_derivative",
    "rk4_step",
    "max_step",
    "integrate_to_periodic_steady_state",
    "extract_harmonic",
    "oracle_a0",
    "state_diagnostics",
]

GROUND_1, GROUND_2, EXCITED = 0, 1, 2


class OracleConvergenceError(SolverError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (stroboscopic residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class IntegrationSettings:
    """``dt=None`` selects the largest step allowed by :func:`max_step`."""

    dt: float | None = None
    settle_periods: int = 5
    steady_tol: float = 1e-12
    samples_per_period: int = 64
    max_periods: int = 10_000


@dataclass(frozen=True)
class Trajectory:
    """Density matrices sampled uniformly over the final drive period."""

    times: np.ndarray
    states: np.ndarray
    period: float
    dt: float
    periods: int
    residual: float
    max_trace_error: float
    max_hermiticity_error: float
    min_eigenvalue: float

    @property
    def frequency(self) -> float:
        return 2 * np.pi / self.period


def _ket(i):
    v = np.zeros(3, complex)
    v[i] = 1
    return v


def _op(i, j):
    return np.outer(_ket(i), _ket(j))


def _hamiltonian_parts(config: Configuration):
    d, p = config.drive, config.probe
    dc = average_coupling_detuning(d)
    h0 = -p.delta_p * _op(EXCITED, EXCITED) - (p.delta_p - dc) * _op(GROUND_2, GROUND_2)
    h0 = h0 - 0.5 * p.omega_p * (_op(EXCITED, GROUND_1) + _op(GROUND_1, EXCITED))
    # coefficient of e^{-i d t} and of e^{+i d t}
    h_minus = -0.5 * (d.omega_c1 * _op(EXCITED, GROUND_2) + d.omega_c2 * _op(GROUND_2, EXCITED))
    h_plus = -0.5 * (d.omega_c2 * _op(EXCITED, GROUND_2) + d.omega_c1 * _op(GROUND_2, EXCITED))
    return h0, h_minus, h_plus


def hamiltonian(t: float, config: Configuration) -> np.ndarray:
    h0, hm, hp = _hamiltonian_parts(config)
    w = config.drive.delta
    return h0 + hm * np.exp(-1j * w * t) + hp * np.exp(1j * w * t)


def _dissipator(rho, config: Configuration):
    s = config.scheme
    out = np.zeros_like(rho)
    p33 = rho[EXCITED, EXCITED]
    out[GROUND_1, GROUND_1] += s.branch_31 * s.gamma * p33
    out[GROUND_2, GROUND_2] += s.branch_32 * s.gamma * p33
    # total loss from |3> is gamma whatever the branching
    out[EXCITED, :] -= 0.5 * s.gamma * rho[EXCITED, :]
    out[:, EXCITED] -= 0.5 * s.gamma * rho[:, EXCITED]
    out[GROUND_2, GROUND_1] -= s.gamma21 * rho[GROUND_2, GROUND_1]
    out[GROUND_1, GROUND_2] -= s.gamma21 * rho[GROUND_1, GROUND_2]
    return out


def rho_derivative(rho: np.ndarray, t: float, config: Configuration) -> np.ndarray:
    """Right-hand side ``-i[H(t), rho] + D[rho]`` of the master equation."""
    h = hamiltonian(t, config)
    return -1j * (h @ rho - rho @ h) + _dissipator(rho, config)


def rk4_step(rho, t, dt, config: Configuration):
    """One classical RK4 step applied directly to the density matrix."""
    k1 = rho_derivative(rho, t, config)
    k2 = rho_derivative(rho + 0.5 * dt * k1, t + 0.5 * dt, config)
    k3 = rho_derivative(rho + 0.5 * dt * k2, t + 0.5 * dt, config)
    k4 = rho_derivative(rho + dt * k3, t + dt, config)
    return rho + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def _superop(fn):
    """9x9 matrix of a linear map on 3x3 matrices (row-major vectorization)."""
    cols = []
    for k in range(9):
        e = np.zeros(9, complex)
        e[k] = 1
        cols.append(fn(e.reshape(3, 3)).reshape(9))
    return np.array(cols).T


def _generator_parts(config: Configuration):
    h0, hm, hp = _hamiltonian_parts(config)
    l0 = _superop(lambda r: -1j * (h0 @ r - r @ h0) + _dissipator(r, config))
    lm = _superop(lambda r: -1j * (hm @ r - r @ hm))
    lp = _superop(lambda r: -1j * (hp @ r - r @ hp))
    return l0, lm, lp


def max_step(config: Configuration) -> float:
    """Largest admissible step: ``0.01`` over the fastest rate in the problem."""
    d, p = config.drive, config.probe
    rates = [config.scheme.gamma, d.omega_c1, d.omega_c2, abs(p.delta_p),
             abs(average_coupling_detuning(d)), d.delta]
    return 0.01 / max(rates)


def _period(config: Configuration) -> float:
    # a static problem has no natural period; any stroboscope works
    d = config.drive.delta
    return 2 * np.pi / d if d > 0 else 2 * np.pi / config.scheme.gamma


def _step_matrices(config: Configuration, period: float, steps: int):
    l0, lm, lp = _generator_parts(config)
    w = config.drive.delta
    h = period / steps
    t = np.arange(steps) * h

    def gen(times):
        return (l0[None] + lm[None] * np.exp(-1j * w * times)[:, None, None]
                + lp[None] * np.exp(1j * w * times)[:, None, None])

    a0, ah, a1 = gen(t), gen(t + h / 2), gen(t + h)
    eye = np.eye(9)[None]
    k1 = a0
    k2 = ah @ (eye + h / 2 * k1)
    k3 = ah @ (eye + h / 2 * k2)
    k4 = a1 @ (eye + h * k3)
    return eye + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def state_diagnostics(states):
    """Worst trace, Hermiticity and positivity errors over a stack of states."""
    states = np.asarray(states).reshape(-1, 3, 3)
    tr = np.abs(np.trace(states, axis1=1, axis2=2) - 1)
    herm = np.abs(states - np.conj(np.swapaxes(states, 1, 2))).max(axis=(1, 2))
    hermitian_part = 0.5 * (states + np.conj(np.swapaxes(states, 1, 2)))
    eig = np.linalg.eigvalsh(hermitian_part).min()
    return float(tr.max()), float(herm.max()), float(eig)


def integrate_to_periodic_steady_state(
    config: Configuration,
    settings: IntegrationSettings | None = None,
    rho0: np.ndarray | None = None,
) -> Trajectory:
    """Integrate from ``rho0`` (default ``|1><1|``) to the periodic steady state.

    The stroboscopic state is advanced one period at a time until
    ``max |rho(t + T) - rho(t)| < steady_tol``, with at least
    ``settle_periods`` periods and a total time of ``20 / min(gamma,
    gamma21)`` elapsed.  The final period is returned with
    ``samples_per_period`` uniform samples.
    """
    s = settings or IntegrationSettings()
    if s.samples_per_period < 64:
        raise ValueError("samples_per_period must be >= 64")
    period = _period(config)
    limit = max_step(config)
    dt = limit if s.dt is None else s.dt
    if dt > limit * (1 + 1e-12):
        raise ValueError(f"dt={dt:g} exceeds the stability limit {limit:g}")
    m = s.samples_per_period
    steps = m * math.ceil(period / (dt * m) - 1e-9)
    dt = period / steps

    slow = config.scheme.gamma21 if config.scheme.gamma21 > 0 else config.scheme.gamma
    min_time = 20 / min(config.scheme.gamma, slow)
    min_periods = max(s.settle_periods, math.ceil(min_time / period))

    props = _step_matrices(config, period, steps)
    one_period = np.eye(9, dtype=complex)
    for p in props:
        one_period = p @ one_period

    rho = (np.outer(_ket(0), _ket(0)) if rho0 is None else np.asarray(rho0, complex)).reshape(9)
    worst = [0.0, 0.0, 0.0]
    residual = np.inf
    periods = 0
    while True:
        nxt = one_period @ rho
        residual = float(np.abs(nxt - rho).max())
        rho = nxt
        periods += 1
        tr, herm, eig = state_diagnostics(rho.reshape(3, 3))
        worst = [max(worst[0], tr), max(worst[1], herm), min(worst[2], eig)] if periods > 1 \
            else [tr, herm, eig]
        if periods >= min_periods and residual < s.steady_tol:
            break
        if periods >= s.max_periods:
            raise OracleConvergenceError(
                f"no periodic steady state within {s.max_periods} periods", residual)

    stride = steps // m
    samples = np.empty((m, 9), complex)
    for k, p in enumerate(props):
        if k % stride == 0:
            samples[k // stride] = rho
        rho = p @ rho
    states = samples.reshape(m, 3, 3)
    tr, herm, eig = state_diagnostics(states)
    t0 = periods * period
    return Trajectory(
        times=t0 + np.arange(m) * period / m,
        states=states,
        period=period,
        dt=dt,
        periods=periods,
        residual=residual,
        max_trace_error=max(worst[0], tr),
        max_hermiticity_error=max(worst[1], herm),
        min_eigenvalue=min(worst[2], eig),
    )


def extract_harmonic(traj: Trajectory, element, n: int) -> complex:
    """Fourier coefficient ``(1/T) int rho_ij(t) e^{+i n w t} dt`` over one period."""
    m = traj.states.shape[0]
    if abs(n) > m // 2 - 1:
        raise ValueError(f"harmonic {n} exceeds the sampling limit {m // 2 - 1}")
    i, j = element
    phase = np.exp(1j * n * traj.frequency * traj.times)
    return complex(np.mean(traj.states[:, i, j] * phase))


def oracle_a0(config: Configuration, settings: IntegrationSettings | None = None):
    """Zeroth harmonic of ``rho_31`` at the periodic steady state."""
    traj = integrate_to_periodic_steady_state(config, settings)
    return extract_harmonic(traj, (EXCITED, GROUND_1), 0), traj
