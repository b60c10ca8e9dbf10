import math

import numpy as np
import pytest

from vmhd.mhd import max_divergence
from vmhd.sim import (COLUMNS, PRESETS, SimConfig, conservation_check, energy_balance_residual,
                      energy_nonincreasing, equilibrium_deviation, fit_decay, format_csv, initial_fields,
                      initial_particles, read_csv, run, step_coupled)


def test_defaults_and_presets_validate():
    SimConfig()
    for name in PRESETS:
        assert SimConfig.from_preset(name).preset == name
    with pytest.raises(ValueError, match="unknown preset"):
        SimConfig.from_preset("nope")


@pytest.mark.parametrize("key,value", [("dt", -1.0), ("n", 7), ("dim", 1), ("cadence", 0), ("mu1", -1.0),
                                       ("particles", "cloud"), ("fields", "vortex"), ("mode", "hot"),
                                       ("t_end", 0.0), ("fit_t1", 0.1)])
def test_range_errors_name_the_key(key, value):
    with pytest.raises(ValueError, match=f"^{key}"):
        SimConfig(**{key: value})


def test_antithetic_needs_even_count():
    with pytest.raises(ValueError, match="n_particles"):
        SimConfig(particles="uniform", n_particles=3, antithetic=True)


@pytest.mark.parametrize("fields", ["shear", "modes", "localized"])
@pytest.mark.parametrize("dim", [2, 3])
def test_initial_fields_are_solenoidal(fields, dim):
    cfg = SimConfig(dim=dim, n=16, fields=fields, amp_u=0.3, amp_b=0.2, b_uniform=(0.0, 0.0, 0.5))
    state = initial_fields(cfg)
    assert max(max_divergence(state)) < 1e-12
    assert np.allclose(state.mean_b(), [0.0, 0.0, 0.5])
    assert np.allclose(state.mean_u(), 0.0)


def test_antithetic_particles_have_zero_momentum():
    ens = initial_particles(SimConfig.from_preset("picard-small"))
    assert ens.n == 2000
    assert np.max(np.abs(ens.momentum())) < 1e-15
    assert ens.mass() == pytest.approx(0.1 * (2 * math.pi) ** 2)


def test_record_count_and_final_partial_step():
    cfg = SimConfig(dim=2, n=8, fields="shear", amp_u=0.1, dt=0.03, t_end=0.1, cadence=2)
    result = run(cfg)
    steps = [r["step"] for r in result.rows]
    assert steps == [0, 2, 4]
    assert result.rows[-1]["t"] == pytest.approx(0.1, abs=1e-15)
    single = run(SimConfig(dim=2, n=8, dt=0.1, t_end=0.1))
    assert len(single.rows) == 2


def test_run_outputs_and_manifest(tmp_path):
    cfg = SimConfig.from_preset("picard-small", t_end=0.1)
    result = run(cfg, output_dir=tmp_path)
    assert result.ok
    for p in result.paths.values():
        assert p.exists()
    manifest = (tmp_path / "manifest.txt").read_text()
    assert "status = completed" in manifest and "config.dt = 0.01" in manifest
    assert "first_wrap_time" in manifest and "build = " in manifest
    data = read_csv(tmp_path / "series.csv")
    assert tuple(data) == COLUMNS
    assert np.array_equal(data["total_energy"], result.series["total_energy"])


def test_aborted_run_records_status(tmp_path):
    cfg = SimConfig(dim=2, n=8, fields="modes", amp_u=1e100, amp_b=1e100, dt=1.0, t_end=3.0, mu1=0.0, mu2=0.0)
    with pytest.warns(RuntimeWarning):
        result = run(cfg, output_dir=tmp_path)
    assert result.status == "aborted"
    assert "non-finite" in result.error
    assert "status = aborted" in (tmp_path / "manifest.txt").read_text()
    assert not (tmp_path / "fluid.bin").exists()


def test_zero_preset_stays_zero():
    result = run(SimConfig.from_preset("zero"))
    s = result.series
    assert np.all(s["total_energy"] == 0.0) and np.all(s["ub_l2"] == 0.0)


def test_coupled_step_conserves_mass_and_mean_b():
    cfg = SimConfig.from_preset("picard-small")
    fluid, ens = initial_fields(cfg), initial_particles(cfg)
    mean_b = fluid.mean_b()
    for _ in range(5):
        ens, fluid = step_coupled(ens, fluid, 0.01, cfg.params())
    assert np.allclose(fluid.mean_b(), mean_b, atol=1e-16)
    with pytest.raises(ValueError):
        step_coupled(ens, fluid, 0.0)


def test_fit_decay_exact_laws():
    t = np.linspace(0.0, 5.0, 51)
    e = fit_decay(t, 3.0 * np.exp(-0.7 * t), "exponential")
    assert e.rate == pytest.approx(0.7) and e.coefficient == pytest.approx(3.0) and e.r2 == pytest.approx(1.0)
    a = fit_decay(t, 2.0 * (1 + t) ** -1.25, "algebraic", (1.0, 5.0))
    assert a.slope == pytest.approx(-1.25) and a.n_samples == 41


def test_fit_decay_errors():
    t = np.linspace(0.0, 1.0, 20)
    with pytest.raises(ValueError, match="model"):
        fit_decay(t, np.ones(20), "linear")
    with pytest.raises(ValueError, match="samples"):
        fit_decay(t, np.ones(20), window=(0.0, 0.1))
    y = np.ones(20)
    y[5] = 0.0
    with pytest.raises(ValueError, match="nonpositive"):
        fit_decay(t, y)


def test_energy_checks():
    s = {"total_energy": np.array([2.0, 1.5, 1.0]), "dissipated": np.array([0.0, 0.5, 1.0])}
    assert energy_balance_residual(s) == 0.0
    assert energy_nonincreasing(s)
    s["total_energy"] = np.array([2.0, 2.1, 1.0])
    assert not energy_nonincreasing(s)


def test_conservation_and_equilibrium_reports():
    n = 4
    s = {c: np.zeros(n) for c in COLUMNS}
    s["t"] = np.linspace(0.0, 1.0, n)
    s["mass"] = np.full(n, 2.0)
    s["momentum_scale"] = np.ones(n)
    s["momentum_x"] = np.array([0.0, 0.0, 0.0, 0.01])
    rep = conservation_check(s)
    assert rep.mass_drift == 0.0 and rep.momentum_drift == pytest.approx(0.01) and rep.mean_b_drift == 0.0
    s["j_l2"] = np.full(n, 0.5)
    s["sup_b"] = np.full(n, 0.2)
    eq = equilibrium_deviation(s, 100)
    assert eq.u_floor == pytest.approx(0.1) and eq.statistical_floor == pytest.approx(0.5)


def test_csv_round_trip_and_errors(tmp_path):
    rows = run(SimConfig.from_preset("zero")).rows
    path = tmp_path / "s.csv"
    path.write_text(format_csv(rows))
    data = read_csv(path)
    assert np.array_equal(data["t"], [r["t"] for r in rows])
    path.write_text("")
    with pytest.raises(ValueError, match="empty"):
        read_csv(path)
    path.write_text("t,x\n")
    with pytest.raises(ValueError, match="no data"):
        read_csv(path)
