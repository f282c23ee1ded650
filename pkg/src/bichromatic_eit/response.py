"""Weak-probe linear response of the bichromatically coupled Lambda system.

With all population in ``|1>`` the probe coherence ``a = rho_31`` and the
ground coherence ``b = rho_21`` obey (rates in units of gamma)::

    da/dt = (i dp - 1/2) a + i Wp/2 + (i/2)(W1 e^{-i d t} + W2 e^{+i d t}) b
    db/dt = (i (dp - dc) - g21) b + (i/2)(W1 e^{+i d t} + W2 e^{-i d t}) a

Writing ``a = sum a_n e^{-i n d t}`` (and likewise ``b``) turns this into the
harmonic recurrence::

    Da(n) a_n = i Wp/2 [n == 0] + (i/2)(W1 b_{n-1} + W2 b_{n+1})
    Db(n) b_n = (i/2)(W1 a_{n+1} + W2 a_{n-1})

    Da(n) = 1/2 - i (dp + n d),   Db(n) = g21 - i (dp - dc + n d)

The source only reaches even ``a_n`` and odd ``b_n``; the complementary
block is homogeneous and vanishes identically.  Two solvers are provided: a
banded linear solve over ``|n| <= n_max`` with ``b_{+-(n_max+1)} = 0``, and a
continued fraction along the source chain ``a_0, b_{+-1}, a_{+-2}, ...``.  The
helpers ending in ``_grid`` evaluate many probe detunings in one call; every
point follows exactly the same truncation sequence as a single-point solve.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .model import Configuration, average_coupling_detuning

__all__ = [
    "SolverError",
    "Recurrence",
    "HarmonicSpectrum",
    "ProbeResponse",
    "build_recurrence",
    "solve_banded",
    "solve_continued_fraction",
    "initial_truncation",
    "probe_response",
    "a0_grid",
    "response_grid",
]

MAX_ORDER = 2 ** 16


class SolverError(RuntimeError):
    """Raised when a steady-state solve fails or does not converge."""


@dataclass(frozen=True)
class Recurrence:
    """Coefficients of the harmonic recurrence at one probe detuning."""

    delta_p: float
    delta: float
    avg_detuning: float
    gamma: float
    gamma21: float
    omega_c1: float
    omega_c2: float
    omega_p: float

    @property
    def source(self) -> complex:
        return 0.5j * self.omega_p

    @property
    def coupling_1(self) -> complex:
        return 0.5j * self.omega_c1

    @property
    def coupling_2(self) -> complex:
        return 0.5j * self.omega_c2

    @property
    def decoupled(self) -> bool:
        return self.omega_c1 == 0 and self.omega_c2 == 0

    def d_a(self, n, delta_p=None):
        dp = self.delta_p if delta_p is None else delta_p
        return self.gamma / 2 - 1j * (dp + np.asarray(n) * self.delta)

    def d_b(self, n, delta_p=None):
        dp = self.delta_p if delta_p is None else delta_p
        return self.gamma21 - 1j * (dp - self.avg_detuning + np.asarray(n) * self.delta)


@dataclass(frozen=True)
class HarmonicSpectrum:
    """Floquet coefficients ``a_n``, ``b_n`` for ``n = -n_max .. n_max``."""

    n_max: int
    a: np.ndarray
    b: np.ndarray
    residual: float = 0.0

    @property
    def orders(self) -> np.ndarray:
        return np.arange(-self.n_max, self.n_max + 1)

    @property
    def a0(self) -> complex:
        return complex(self.a[self.n_max])

    def coefficient(self, kind: str, n: int) -> complex:
        if abs(n) > self.n_max:
            return 0j
        arr = self.a if kind == "a" else self.b
        return complex(arr[n + self.n_max])


@dataclass(frozen=True)
class ProbeResponse:
    """Normalized probe response; the bare two-level resonance has absorption 1."""

    delta_p: float
    absorption: float
    dispersion: float
    a0: complex
    n_max: int


def build_recurrence(config: Configuration, delta_p: float | None = None) -> Recurrence:
    drive = config.drive
    return Recurrence(
        delta_p=float(config.probe.delta_p if delta_p is None else delta_p),
        delta=drive.delta,
        avg_detuning=average_coupling_detuning(drive),
        gamma=config.scheme.gamma,
        gamma21=config.scheme.gamma21,
        omega_c1=drive.omega_c1,
        omega_c2=drive.omega_c2,
        omega_p=config.probe.omega_p,
    )


def _decoupled(rec: Recurrence, n_max: int) -> HarmonicSpectrum:
    a = np.zeros(2 * n_max + 1, complex)
    b = np.zeros(2 * n_max + 1, complex)
    a[n_max] = rec.source / rec.d_a(0)
    return HarmonicSpectrum(n_max, a, b)


def _chain_coefficients(rec: Recurrence, n, delta_p=None):
    """Entries of the tridiagonal chain reached by the source.

    Unknown ``x_n`` is ``a_n`` for even ``n`` and ``b_n`` for odd ``n``.  Row
    ``n`` reads ``diag x_n - lower x_{n-1} - upper x_{n+1} = rhs``.  With an
    array ``delta_p`` of shape ``(P, 1)`` the diagonal has shape ``(P, len(n))``.
    """
    even = n % 2 == 0
    diag = np.where(even, rec.d_a(n, delta_p), rec.d_b(n, delta_p))
    lower = np.where(even, rec.coupling_1, rec.coupling_2)
    upper = np.where(even, rec.coupling_2, rec.coupling_1)
    return diag, lower, upper


def _solve_chains(rec: Recurrence, delta_p, n_max: int):
    """Solve the source chain at every detuning in ``delta_p`` in one call.

    The independent chains are stacked into one block-diagonal tridiagonal
    matrix with zero coupling between blocks.  Returns shape ``(P, 2 n_max + 1)``.
    """
    n = np.arange(-n_max, n_max + 1)
    dp = np.asarray(delta_p, float)[:, None]
    diag, lower, upper = _chain_coefficients(rec, n, dp)
    count, m = diag.shape
    # ab[0, k] holds A[k-1, k]; ab[2, k] holds A[k+1, k]
    sup = np.zeros((count, m), complex)
    sup[:, 1:] = -upper[:-1]
    sub = np.zeros((count, m), complex)
    sub[:, :-1] = -lower[1:]
    ab = np.stack([sup.ravel(), diag.ravel(), sub.ravel()])
    rhs = np.zeros((count, m), complex)
    rhs[:, n_max] = rec.source
    try:
        x = linalg.solve_banded((1, 1), ab, rhs.ravel(), check_finite=False)
    except linalg.LinAlgError as exc:
        raise SolverError(f"singular harmonic system at n_max={n_max}: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise SolverError(f"non-finite harmonic solution at n_max={n_max}")
    return x.reshape(count, m)


def _chain_residual(rec: Recurrence, x, n_max):
    n = np.arange(-n_max, n_max + 1)
    diag, lower, upper = _chain_coefficients(rec, n)
    padded = np.concatenate(([0j], x, [0j]))
    r = diag * x - lower * padded[:-2] - upper * padded[2:]
    r[n_max] -= rec.source
    return float(np.max(np.abs(r)))


def _full_system(rec: Recurrence, n_max: int):
    """Assemble the interleaved ``(4 n_max + 2)`` banded system.

    Unknown order is ``a_{-N}, b_{-N}, a_{-N+1}, b_{-N+1}, ...``; the
    bandwidth is 3 on either side.
    """
    n = np.arange(-n_max, n_max + 1)
    dim = 2 * n.size
    ab = np.zeros((7, dim), complex)
    rhs = np.zeros(dim, complex)

    def put(row, col, value):
        if 0 <= col < dim:
            ab[3 + row - col, col] = value

    for k, order in enumerate(n):
        ia, ib = 2 * k, 2 * k + 1
        put(ia, ia, rec.d_a(order))
        put(ia, ib - 2, -rec.coupling_1)   # b_{n-1}
        put(ia, ib + 2, -rec.coupling_2)   # b_{n+1}
        put(ib, ib, rec.d_b(order))
        put(ib, ia + 2, -rec.coupling_1)   # a_{n+1}
        put(ib, ia - 2, -rec.coupling_2)   # a_{n-1}
    rhs[2 * n_max] = rec.source
    return ab, rhs


def _banded_matvec(ab, x, width):
    dim = ab.shape[1]
    out = np.zeros(dim, complex)
    for i in range(dim):
        for j in range(max(0, i - width), min(dim, i + width + 1)):
            out[i] += ab[width + i - j, j] * x[j]
    return out


def solve_banded(rec: Recurrence, n_max: int, full_system: bool = False) -> HarmonicSpectrum:
    """Solve the truncated harmonic system directly.

    By default only the chain reached by the source is factorized and the
    complementary coefficients are set to zero, which is their exact value
    and avoids the spurious singularity of that block at exact two-photon
    resonance.  ``full_system=True`` solves all ``4 n_max + 2`` equations
    together instead.
    """
    if n_max < 2:
        raise ValueError("n_max must be >= 2")
    if rec.decoupled:
        return _decoupled(rec, n_max)

    if full_system:
        ab, rhs = _full_system(rec, n_max)
        try:
            x = linalg.solve_banded((3, 3), ab, rhs, check_finite=False)
        except linalg.LinAlgError as exc:
            raise SolverError(f"singular harmonic system at n_max={n_max}: {exc}") from exc
        residual = float(np.max(np.abs(_banded_matvec(ab, x, 3) - rhs)))
        return HarmonicSpectrum(n_max, x[0::2].copy(), x[1::2].copy(), residual)

    even = np.arange(-n_max, n_max + 1) % 2 == 0
    x = _solve_chains(rec, [rec.delta_p], n_max)[0]
    return HarmonicSpectrum(n_max, np.where(even, x, 0), np.where(even, 0, x),
                            _chain_residual(rec, x, n_max))


def _cf_a0(rec: Recurrence, delta_p, depth: int):
    """Continued-fraction ``a_0`` at fixed depth for an array of detunings.

    The fraction runs along the source chain ``a_0, b_{+-1}, a_{+-2}, ...``
    out to ``a_{+-2K}`` (``K = depth``).  Taking two levels at a time is the
    same as eliminating ``b`` into the even-``a`` recurrence, but keeping
    ``b_n`` as its own level stays finite when some ``Db(n)`` vanishes
    (``gamma21 = 0`` at an exact two-photon resonance).

    Also returns the ratios ``x_n / x_{n-1}`` (``n > 0``) and ``x_n /
    x_{n+1}`` (``n < 0``) used to rebuild the other coefficients.
    """
    dp = np.asarray(delta_p, float)
    c1, c2 = rec.coupling_1, rec.coupling_2
    top = 2 * depth

    def diag(n):
        return rec.d_a(n, dp) if n % 2 == 0 else rec.d_b(n, dp)

    def lower(n):
        return -c1 if n % 2 == 0 else -c2

    def upper(n):
        return -c2 if n % 2 == 0 else -c1

    zero = np.zeros(dp.shape, complex)
    up = {top + 1: zero}
    for n in range(top, 0, -1):
        up[n] = -lower(n) / (diag(n) + upper(n) * up[n + 1])
    down = {-top - 1: zero}
    for n in range(-top, 0):
        down[n] = -upper(n) / (diag(n) + lower(n) * down[n - 1])
    denom = diag(0) + upper(0) * up[1] + lower(0) * down[-1]
    return rec.source / denom, up, down


def _single_tone_a0(rec: Recurrence, delta_p):
    # one component only: a_0 couples to a single b; closed 2x2 system
    if rec.omega_c2 == 0:
        w, db = rec.omega_c1, rec.d_b(-1, delta_p)
    else:
        w, db = rec.omega_c2, rec.d_b(1, delta_p)
    return rec.source * db / (rec.d_a(0, delta_p) * db + w * w / 4)


def _cf_rebuild(rec: Recurrence, depth: int) -> HarmonicSpectrum:
    a0, up, down = _cf_a0(rec, np.array([rec.delta_p]), depth)
    n_max = 2 * depth
    x = np.zeros(2 * n_max + 1, complex)
    x[n_max] = a0[0]
    for n in range(1, n_max + 1):
        x[n_max + n] = up[n][0] * x[n_max + n - 1]
        x[n_max - n] = down[-n][0] * x[n_max - n + 1]
    even = np.arange(-n_max, n_max + 1) % 2 == 0
    return HarmonicSpectrum(n_max, np.where(even, x, 0), np.where(even, 0, x))


def _cf_converge(rec: Recurrence, delta_p, rel_tol: float, depth: int):
    """Depth doubling over a batch of detunings; each point stops on its own."""
    dp = np.asarray(delta_p, float)
    if rec.decoupled:
        return rec.source / rec.d_a(0, dp), np.full(dp.size, 2)
    if rec.omega_c1 == 0 or rec.omega_c2 == 0:
        return _single_tone_a0(rec, dp), np.full(dp.size, 2)

    out = np.empty(dp.size, complex)
    used = np.empty(dp.size, int)
    todo = np.arange(dp.size)
    with np.errstate(divide="ignore", invalid="ignore"):
        prev = _cf_a0(rec, dp, depth)[0]
        last = prev
        while todo.size:
            if 2 * depth > MAX_ORDER // 2:
                raise SolverError(
                    f"continued fraction did not converge by depth {MAX_ORDER // 2} at "
                    f"delta_p={dp[todo[0]]:g}; last iterates {last[0]!r}, {prev[0]!r}"
                )
            depth *= 2
            cur = _cf_a0(rec, dp[todo], depth)[0]
            if not np.all(np.isfinite(cur)):
                bad = dp[todo[~np.isfinite(cur)][0]]
                raise SolverError(
                    f"continued fraction became singular at delta_p={bad:g}; "
                    f"use the banded solver"
                )
            done = (np.abs(cur - prev) <= rel_tol * np.abs(cur)) | (cur == prev)
            out[todo[done]] = cur[done]
            used[todo[done]] = 2 * depth
            last, prev, todo = prev[~done], cur[~done], todo[~done]
    return out, used


def solve_continued_fraction(rec: Recurrence, rel_tol: float = 1e-10,
                             start_depth: int = 2) -> HarmonicSpectrum:
    """Continued-fraction solution.

    Eliminating ``b_{n +- 1}`` leaves ``Q_k a_k + L_k a_{k-1} + U_k a_{k+1} =
    S [k == 0]`` among the even ``a_{2k}``; the fraction is evaluated one
    chain level at a time (``a`` then ``b``), which is algebraically the same
    and survives a vanishing ``Db``.  Ratios are built from depth ``K``
    inwards and ``K`` is doubled until ``a_0`` changes by less than
    ``rel_tol``.  The truncation at depth ``K`` is identical to
    :func:`solve_banded` with ``n_max = 2K``.
    """
    start_depth = max(1, start_depth)
    if rec.decoupled:
        return _decoupled(rec, max(2, 2 * start_depth))
    if rec.omega_c1 == 0 or rec.omega_c2 == 0:
        n_max = max(2, 2 * start_depth)
        a = np.zeros(2 * n_max + 1, complex)
        b = np.zeros(2 * n_max + 1, complex)
        a0 = complex(_single_tone_a0(rec, rec.delta_p))
        a[n_max] = a0
        # from the a_0 row, valid even at an exact two-photon resonance
        if rec.omega_c2 == 0:
            b[n_max - 1] = (rec.d_a(0) * a0 - rec.source) / rec.coupling_1
        else:
            b[n_max + 1] = (rec.d_a(0) * a0 - rec.source) / rec.coupling_2
        return HarmonicSpectrum(n_max, a, b)
    _, used = _cf_converge(rec, [rec.delta_p], rel_tol, start_depth)
    return _cf_rebuild(rec, int(used[0]) // 2)


def initial_truncation(config: Configuration) -> int:
    """Starting harmonic order for adaptive truncation."""
    d = config.drive
    if d.delta == 0:
        return 4
    return max(4, math.ceil(4 * (1 + (d.omega_c1 + d.omega_c2) / (2 * d.delta))))


def _banded_converge(rec: Recurrence, delta_p, n_start: int, rel_tol: float, adaptive: bool):
    dp = np.asarray(delta_p, float)
    used = np.full(dp.size, n_start)
    if rec.decoupled:
        return rec.source / rec.d_a(0, dp), used
    n = n_start
    prev = _solve_chains(rec, dp, n)[:, n]
    if not adaptive:
        return prev, used
    out = np.empty(dp.size, complex)
    todo = np.arange(dp.size)
    floor = 1e-15 * rec.omega_p
    while todo.size:
        if 2 * n > MAX_ORDER:
            raise SolverError(
                f"harmonic truncation did not converge by n_max={MAX_ORDER} at "
                f"delta_p={dp[todo[0]]:g}"
            )
        n *= 2
        cur = _solve_chains(rec, dp[todo], n)[:, n]
        done = np.abs(cur - prev) <= rel_tol * np.maximum(np.abs(cur), floor)
        out[todo[done]] = cur[done]
        used[todo[done]] = n
        prev, todo = cur[~done], todo[~done]
    return out, used


def a0_grid(config: Configuration, detunings, method: str | None = None):
    """Zeroth harmonic ``a_0`` at each probe detuning.

    Returns ``(a0, n_max_used)``.  Each point converges on its own, so the
    value at a detuning does not depend on which other points share the call.
    """
    dp = np.atleast_1d(np.asarray(detunings, float))
    s = config.settings
    method = method or s.method
    rec = build_recurrence(config, 0.0)
    if method == "banded":
        n0 = initial_truncation(config) if s.adaptive else s.n_max
        return _banded_converge(rec, dp, n0, s.rel_tol, s.adaptive)
    if method == "continued_fraction":
        depth = max(1, math.ceil(initial_truncation(config) / 2))
        return _cf_converge(rec, dp, s.rel_tol, depth)
    raise ValueError(f"unknown method {method!r}")


def response_grid(config: Configuration, detunings, method: str | None = None):
    """Normalized ``(absorption, dispersion)`` arrays over ``detunings``."""
    a0, _ = a0_grid(config, detunings, method)
    norm = config.scheme.gamma / config.probe.omega_p
    return a0.imag * norm, a0.real * norm


def probe_response(config: Configuration) -> ProbeResponse:
    """Steady-state probe response at ``config.probe.delta_p``."""
    a0, used = a0_grid(config, [config.probe.delta_p])
    norm = config.scheme.gamma / config.probe.omega_p
    return ProbeResponse(config.probe.delta_p, float(a0[0].imag * norm),
                         float(a0[0].real * norm), complex(a0[0]), int(used[0]))
