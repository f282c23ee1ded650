import json
from importlib import resources

import numpy as np
import pytest

from bichromatic_eit.cli import (EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_SOLVER, bundled_configs,
                                 load_config, main, parse_config)
from bichromatic_eit.model import ConfigError
from bichromatic_eit.spectroscopy import SpectrumTrace

from conftest import lorentzian


def bundled(name):
    return json.loads(resources.files("bichromatic_eit.configs").joinpath(f"{name}.json").read_text())


def write_config(tmp_path, data, name="cfg"):
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(data))
    return str(path)


def run(*argv):
    return main([str(a) for a in argv])


def test_bundled_configs_all_parse():
    names = bundled_configs()
    assert {"fig2a", "fig2b", "fig2c", "fig4", "fig6a"} <= set(names)
    for n in names:
        load_config(n)


@pytest.mark.parametrize("mutate, match", [
    (lambda d: d.update(units="furlongs"), "units"),
    (lambda d: d.update(colour="red"), "colour"),
    (lambda d: d["drive"].update(omega_c1=-1), "omega_c1"),
    (lambda d: d["scan"].update(points=2), "points"),
    (lambda d: d["solver"].update(method="magic"), "method"),
    (lambda d: d["zeeman"].update(points=4), "points"),
])
def test_config_validation(mutate, match):
    d = bundled("fig2a")
    mutate(d)
    with pytest.raises(ConfigError, match=match):
        parse_config(d)


def test_spectrum_fig2a(tmp_path, capsys):
    assert run("spectrum", "--config", "fig2a", "--out", tmp_path) == EXIT_OK
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["peaks"]["count"] == 3
    assert len(summary["minima"]) == 2
    assert all(s > 0 for s in summary["dispersion_slopes"])
    tr = SpectrumTrace.from_csv(tmp_path / "spectrum.csv")
    assert tr.grid.size == 801


def test_spectrum_single_frequency(tmp_path):
    assert run("spectrum", "--config", "fig2c", "--out", tmp_path) == EXIT_OK
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["minima"] == [pytest.approx(0.0, abs=1e-9)]


def test_zero_coupling_is_lorentzian(tmp_path):
    d = bundled("fig2a")
    d["drive"].update(omega_c1=0.0, omega_c2=0.0)
    assert run("spectrum", "--config", write_config(tmp_path, d), "--out", tmp_path) == EXIT_OK
    tr = SpectrumTrace.from_csv(tmp_path / "spectrum.csv")
    np.testing.assert_allclose(tr.absorption, lorentzian(tr.grid), rtol=1e-12)


def test_units_do_not_change_physics(tmp_path):
    d = bundled("fig2a")
    m = json.loads(json.dumps(d))
    g = d["gamma_mhz"]
    m["units"] = "MHz"
    m["scheme"]["gamma"] = g
    m["scheme"]["gamma21"] *= g
    for k in m["drive"]:
        m["drive"][k] *= g
    m["probe"]["omega_p"] *= g
    for k in ("min", "max"):
        m["scan"][k] *= g
        m["oracle"][k] *= g
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("spectrum", "--config", write_config(tmp_path, d, "g"), "--out", a) == EXIT_OK
    assert run("spectrum", "--config", write_config(tmp_path, m, "m"), "--out", b,
               "--units", "Gamma") == EXIT_OK
    ta = SpectrumTrace.from_csv(a / "spectrum.csv")
    tb = SpectrumTrace.from_csv(b / "spectrum.csv")
    np.testing.assert_allclose(tb.grid, ta.grid, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(tb.absorption, ta.absorption, rtol=1e-9, atol=1e-14)


def test_mhz_output(tmp_path):
    assert run("spectrum", "--config", "fig2a", "--out", tmp_path, "--units", "MHz") == EXIT_OK
    tr = SpectrumTrace.from_csv(tmp_path / "spectrum.csv")
    assert tr.grid[0] == pytest.approx(-12.0)


def test_reruns_are_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert run("spectrum", "--config", "fig2a", "--out", tmp_path / d, "--plot",
                   "--noise", "0.01", "--seed", "3") == EXIT_OK
    for f in ("spectrum.csv", "signal.csv", "summary.json", "spectrum.svg"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f
    assert (tmp_path / "a" / "spectrum.svg").read_text().lstrip().startswith("<?xml")


def test_cf_method_matches_banded(tmp_path):
    assert run("spectrum", "--config", "fig2b", "--out", tmp_path / "b") == EXIT_OK
    assert run("spectrum", "--config", "fig2b", "--out", tmp_path / "c", "--method", "cf") == EXIT_OK
    a = SpectrumTrace.from_csv(tmp_path / "b" / "spectrum.csv")
    c = SpectrumTrace.from_csv(tmp_path / "c" / "spectrum.csv")
    np.testing.assert_allclose(c.absorption, a.absorption, rtol=1e-9, atol=1e-12)


def test_oracle_check_fig2a(tmp_path):
    assert run("oracle-check", "--config", "fig2a", "--out", tmp_path) == EXIT_OK
    rep = json.loads((tmp_path / "oracle.json").read_text())
    assert rep["passed"] and len(rep["points"]) == 5
    assert rep["max_relative_deviation"] < 1e-3


def test_oracle_check_without_repumping(tmp_path, capsys):
    # with no coupling the probe pumps every atom into |2> and the
    # time-domain state never settles on the linear-response branch
    d = bundled("fig2a")
    d["drive"].update(omega_c1=0.0, omega_c2=0.0)
    assert run("oracle-check", "--config", write_config(tmp_path, d), "--out", tmp_path,
               "--points", "1") == EXIT_SOLVER
    assert "steady state" in capsys.readouterr().err


def test_oracle_check_flags_strong_probe(tmp_path):
    d = bundled("fig2a")
    d["probe"]["omega_p"] = 0.2
    code = run("oracle-check", "--config", write_config(tmp_path, d), "--out", tmp_path,
               "--points", "1")
    rep = json.loads((tmp_path / "oracle.json").read_text())
    assert rep["nonlinear_probe"] and "note" in rep
    assert not rep["passed"]
    assert code == EXIT_OK


def test_oracle_point_limit(tmp_path):
    assert run("oracle-check", "--config", "fig2a", "--out", tmp_path, "--points", 33) == EXIT_CONFIG


def small_fig4(tmp_path):
    d = bundled("fig4")
    d["scan"]["points"] = 101
    d["zeeman"] = {"sigma": 2.0, "points": 7}
    return write_config(tmp_path, d, "small")


def test_fit_end_to_end(tmp_path):
    cfg = small_fig4(tmp_path)
    assert run("spectrum", "--config", cfg, "--out", tmp_path / "s") == EXIT_OK
    d = json.loads(open(cfg).read())
    fp = d["fit"]["parameters"]
    fp["omega_c"].update(value=2.1)
    fp["delta_c2"].update(value=43.0)
    fp["zeeman_sigma"].update(value=2.0, fixed=True)
    d["fit"]["settings"] = {"restarts": 1, "max_evaluations": 400, "spread_tol": 1e-7}
    cfg2 = write_config(tmp_path, d, "fit")
    assert run("fit", "--config", cfg2, "--trace", tmp_path / "s" / "signal.csv",
               "--out", tmp_path / "f", "--plot") == EXIT_OK
    res = json.loads((tmp_path / "f" / "fit.json").read_text())
    assert res["parameters"]["omega_c"] == pytest.approx(2.3, rel=0.02)
    assert res["parameters"]["delta_c2"] == pytest.approx(40.0, rel=0.02)
    assert res["residual"] <= res["initial_residual"]
    overlay = (tmp_path / "f" / "overlay.csv").read_text().splitlines()
    assert overlay[0] == "delta_p_mhz,data,model" and len(overlay) == 102
    assert (tmp_path / "f" / "fit.svg").exists()


def test_fit_all_fixed_is_noop(tmp_path):
    cfg = small_fig4(tmp_path)
    assert run("spectrum", "--config", cfg, "--out", tmp_path / "s") == EXIT_OK
    d = json.loads(open(cfg).read())
    for p in d["fit"]["parameters"].values():
        p["fixed"] = True
    cfg2 = write_config(tmp_path, d, "fixed")
    assert run("fit", "--config", cfg2, "--trace", tmp_path / "s" / "signal.csv",
               "--out", tmp_path / "f") == EXIT_OK
    res = json.loads((tmp_path / "f" / "fit.json").read_text())
    assert res["n_evaluations"] == 1
    assert res["parameters"]["omega_c"] == d["fit"]["parameters"]["omega_c"]["value"]


def test_fit_missing_trace(tmp_path):
    assert run("fit", "--config", "fig4", "--trace", tmp_path / "nope.csv",
               "--out", tmp_path) == EXIT_IO


def test_fit_bad_trace(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("# kind: absorption\ndelta_p_mhz,signal\nabc,0.3\n")
    assert run("fit", "--config", "fig4", "--trace", bad, "--out", tmp_path) == EXIT_IO


def test_missing_config(tmp_path):
    assert run("spectrum", "--config", tmp_path / "none.json", "--out", tmp_path) == EXIT_IO


def test_invalid_json(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{")
    assert run("spectrum", "--config", p, "--out", tmp_path) == EXIT_CONFIG


def test_sweep_coupling(tmp_path):
    assert run("sweep", "--config", "fig5a", "--out", tmp_path, "--parameter", "omega_c",
               "--values", 56.4, 40.2, "--plot") == EXIT_OK
    idx = json.loads((tmp_path / "index.json").read_text())
    assert idx["complete"] and len(idx["entries"]) == 2
    assert (tmp_path / "trace_001.csv").exists() and (tmp_path / "sweep.svg").exists()
    assert all(e["peak_count"] >= 1 for e in idx["entries"])


def test_sweep_detuning_asymmetry(tmp_path):
    assert run("sweep", "--config", "fig6a", "--out", tmp_path, "--parameter", "delta_c2",
               "--values", 3.35, 5.7) == EXIT_OK
    idx = json.loads((tmp_path / "index.json").read_text())
    sym, asym = (e["asymmetry"] for e in idx["entries"])
    assert sym < 1e-9 < 0.05 < asym


@pytest.mark.parametrize("extra", [["--parameter", "omega_c"],
                                   ["--parameter", "colour", "--values", "1"],
                                   ["--parameter", "omega_c", "--values", "-1"]])
def test_sweep_rejects(tmp_path, extra):
    assert run("sweep", "--config", "fig2a", "--out", tmp_path, *extra) == EXIT_CONFIG


def test_seed_range(tmp_path):
    assert run("spectrum", "--config", "fig2a", "--out", tmp_path, "--seed", -1) == EXIT_CONFIG
