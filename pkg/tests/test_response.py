import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bichromatic_eit.response import (a0_grid, build_recurrence, initial_truncation,
                                      probe_response, response_grid, solve_banded,
                                      solve_continued_fraction)
from bichromatic_eit.spectroscopy import find_peaks, scan

from conftest import lorentzian, make_config

# a_0 at the fig2a point (0.4, 2 delta = 1.4, gamma21 = 0.01,
# Wp = 0.01, dp = 0.35) from the time-domain integrator, frozen
ORACLE_A0_FIG2A = -0.0048330628651572696 + 0.005659990365559465j


def test_diagonal_on_resonance(fig2a):
    rec = build_recurrence(fig2a, 0.0)
    assert rec.d_a(0) == 0.5


def test_diagonal_second_harmonic(fig2a):
    rec = build_recurrence(fig2a, 0.0)
    assert rec.d_a(2) == pytest.approx(0.5 - 1.4j, abs=1e-15)


def test_ground_diagonal_vanishes_at_two_photon_resonance():
    rec = build_recurrence(make_config(0.4, 0.7, gamma21=0.0), 0.0)
    assert rec.d_b(0) == 0


def test_couplings_and_source(fig2a):
    rec = build_recurrence(fig2a, 0.1)
    assert rec.source == pytest.approx(0.005j)
    assert rec.coupling_1 == pytest.approx(0.2j)
    assert rec.coupling_2 == pytest.approx(0.2j)


@pytest.mark.parametrize("dp", [0.0, 0.3, -1.7])
def test_decoupled_banded(dp):
    rec = build_recurrence(make_config(0.0, 0.7), dp)
    h = solve_banded(rec, 4)
    assert h.a0 == pytest.approx((0.005j) / (0.5 - 1j * dp), rel=1e-15)
    assert np.count_nonzero(h.a) == 1 and np.count_nonzero(h.b) == 0


@pytest.mark.parametrize("dp", [0.0, 0.3, -1.7])
def test_decoupled_continued_fraction(dp):
    rec = build_recurrence(make_config(0.0, 0.7), dp)
    assert solve_continued_fraction(rec).a0 == pytest.approx(solve_banded(rec, 4).a0, rel=1e-10)


def test_perfect_eit_monochromatic(mono):
    rec = build_recurrence(mono, 0.0)
    assert solve_banded(rec, 4).a0 == 0
    assert solve_continued_fraction(rec).a0 == 0
    assert probe_response(mono).absorption == 0


def test_fig2a_against_frozen_oracle():
    c = make_config(0.4, 0.7, delta_p=0.35)
    a0 = probe_response(c).a0
    assert abs(a0 - ORACLE_A0_FIG2A) / abs(ORACLE_A0_FIG2A) < 1e-3


def test_cf_matches_banded_fig2a(fig2a):
    rec = build_recurrence(fig2a, 0.0)
    cf = solve_continued_fraction(rec).a0
    b = a0_grid(fig2a, [0.0])[0][0]
    assert abs(cf - b) <= 1e-10 * abs(b)


def test_cf_matches_banded_fig2b(fig2b):
    d = fig2b.drive.delta
    a_b = a0_grid(fig2b, [d], "banded")[0][0]
    a_cf = a0_grid(fig2b, [d], "continued_fraction")[0][0]
    assert abs(a_cf - a_b) <= 1e-10 * abs(a_b)


def test_cf_harmonics_match_banded(fig2b):
    rec = build_recurrence(fig2b, 1.1)
    cf = solve_continued_fraction(rec)
    ban = solve_banded(rec, cf.n_max)
    np.testing.assert_allclose(cf.a, ban.a, atol=1e-13 * np.abs(ban.a).max())
    np.testing.assert_allclose(cf.b, ban.b, atol=1e-13 * np.abs(ban.b).max())


@pytest.mark.parametrize("cfg", ["fig2a", "fig2b"])
def test_parity_exact_in_full_system(cfg, request):
    c = request.getfixturevalue(cfg)
    for dp in (0.0, 0.37, -2.2):
        h = solve_banded(build_recurrence(c, dp), 12, full_system=True)
        odd = h.orders % 2 != 0
        scale = np.abs(h.a).max()
        assert np.abs(h.a[odd]).max() < 1e-14 * scale
        assert np.abs(h.b[~odd]).max() < 1e-14 * scale
        np.testing.assert_allclose(h.a, solve_banded(build_recurrence(c, dp), 12).a,
                                   atol=1e-14 * scale)


def test_residual_small(fig2b):
    rec = build_recurrence(fig2b, 0.9)
    for full in (False, True):
        h = solve_banded(rec, 16, full_system=full)
        assert h.residual < 1e-12 * abs(rec.source)


def test_harmonics_decay_at_converged_truncation(fig2b):
    a0, used = a0_grid(fig2b, [0.4])
    h = solve_banded(build_recurrence(fig2b, 0.4), int(used[0]))
    assert max(abs(h.coefficient("a", h.n_max)), abs(h.coefficient("a", -h.n_max))) < \
        fig2b.settings.rel_tol * np.abs(h.a).max()


def test_truncation_doubling_beyond_stop(fig2b):
    for dp in (0.0, 1.3, 3.35):
        a0, used = a0_grid(fig2b, [dp])
        finer = solve_banded(build_recurrence(fig2b, dp), 2 * int(used[0])).a0
        assert abs(finer - a0[0]) < fig2b.settings.rel_tol * abs(a0[0])


def test_initial_truncation():
    assert initial_truncation(make_config(0.4, 0.7)) == max(4, int(np.ceil(4 * (1 + 0.8 / 1.4))))
    assert initial_truncation(make_config(0.4, 0.0)) == 4


# zero or physically sized values; subnormal Rabi frequencies only probe
# floating-point underflow, not the solvers
rabi = st.one_of(st.just(0.0), st.floats(1e-3, 3.0))
decay = st.one_of(st.just(0.0), st.floats(1e-6, 0.2))

def mono_closed_form(omega, dp, gamma21, dc, wp=0.01):
    if omega == 0:
        return (0.5j * wp) / (0.5 - 1j * dp)
    return (0.5j * wp) / (0.5 - 1j * dp + (omega ** 2 / 4) / (gamma21 - 1j * (dp - dc)))


@settings(max_examples=40, deadline=None)
@given(rabi, decay, st.floats(-2, 2),
       st.lists(st.floats(-5, 5), min_size=1, max_size=20))
def test_monochromatic_closed_form(omega, gamma21, dc, dps):
    c = make_config(omega, 0.0, gamma21, avg=dc)
    dps = np.array(dps)
    with np.errstate(divide="ignore", invalid="ignore"):
        expect = mono_closed_form(omega, dps, gamma21, dc)
    for method in ("banded", "continued_fraction"):
        got = a0_grid(c, dps, method)[0]
        # the closed form is 0/0 only at an exact dark resonance, where a_0 = 0
        mask = np.isfinite(expect)
        np.testing.assert_allclose(got[mask], expect[mask], rtol=1e-12)
        assert np.all(got[~mask] == 0)


random_sets = st.tuples(rabi, rabi, st.floats(0.2, 5.0), st.floats(-3, 3), decay,
                        st.floats(-8, 8))


@settings(max_examples=100, deadline=None)
@given(random_sets)
def test_methods_agree(params):
    w1, w2, delta, dc, g21, dp = params
    c = make_config(w1, delta, g21, avg=dc, omega_c2=w2)
    b = a0_grid(c, [dp], "banded")[0][0]
    cf = a0_grid(c, [dp], "continued_fraction")[0][0]
    assert abs(b - cf) <= 1e-10 * abs(b) + 1e-20


@settings(max_examples=30, deadline=None)
@given(random_sets, st.floats(1e-4, 0.2))
def test_linear_in_probe_amplitude(params, wp):
    w1, w2, delta, dc, g21, dp = params
    one = a0_grid(make_config(w1, delta, g21, avg=dc, omega_c2=w2, omega_p=1e-3), [dp])[0][0]
    other = a0_grid(make_config(w1, delta, g21, avg=dc, omega_c2=w2, omega_p=wp), [dp])[0][0]
    assert abs(other - one * wp / 1e-3) <= 1e-12 * abs(other) + 1e-20


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 3.0), st.floats(0.2, 7.0), st.floats(0.0, 0.2))
def test_symmetry_resonant_equal_amplitudes(omega, delta, g21):
    c = make_config(omega, delta, g21)
    x = np.linspace(0, 3 * delta, 41)
    a_p, d_p = response_grid(c, x)
    a_m, d_m = response_grid(c, -x)
    np.testing.assert_allclose(a_p, a_m, atol=1e-9)
    np.testing.assert_allclose(d_p, -d_m, atol=1e-9)


def test_bare_lorentzian():
    c = make_config(0.0, 0.7)
    x = np.linspace(-3, 3, 61)
    a, d = response_grid(c, x)
    np.testing.assert_allclose(a, lorentzian(x), rtol=1e-13)
    np.testing.assert_allclose(d, -2 * x * lorentzian(x), rtol=1e-13, atol=1e-16)


def test_bare_resonance_normalization():
    r = probe_response(make_config(0.0, 0.7))
    assert r.absorption == pytest.approx(1.0, rel=1e-14)
    assert r.dispersion == 0


def test_fig2a_peaks_at_dressed_transitions(fig2a):
    peaks = find_peaks(scan(fig2a, -2, 2, 801))
    assert len(peaks) == 3
    np.testing.assert_allclose(peaks.positions, [-0.7, 0, 0.7], atol=0.05)


def test_grid_points_independent_of_batch(fig2b):
    x = np.linspace(-8, 8, 97)
    together = a0_grid(fig2b, x)[0]
    alone = np.array([a0_grid(fig2b, [v])[0][0] for v in x])
    shuffled_idx = np.random.default_rng(3).permutation(x.size)
    shuffled = a0_grid(fig2b, x[shuffled_idx])[0]
    assert np.array_equal(together, alone)
    assert np.array_equal(together[shuffled_idx], shuffled)


def test_non_adaptive_uses_fixed_truncation():
    c = make_config(2.0, 3.35, n_max=6, adaptive=False)
    a0, used = a0_grid(c, [0.0])
    assert used[0] == 6
    assert a0[0] == solve_banded(build_recurrence(c, 0.0), 6).a0
