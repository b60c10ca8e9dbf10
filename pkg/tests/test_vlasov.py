import math

import numpy as np
import pytest

from vmhd.core import Grid, NumericalError
from vmhd.mhd import FluidState
from vmhd.vlasov import (HistogramSpec, ParticleEnsemble, current_noise_floor, deposit_moments, maxwellian,
                         maxwellian_background_force, maxwellian_cell_average, perturbation_norm,
                         phase_space_histogram, push_fields, push_particles, rk4_push, sample_maxwellian,
                         support_bound_check, support_radii, velocity_bound)


def uniform_b_fluid(grid, bz=1.0):
    b = np.zeros((3,) + grid.shape)
    b[2] = bz
    return FluidState.from_physical(grid, np.zeros_like(b), b)


def test_maxwellian_normalisation():
    assert maxwellian(np.zeros(3)) == pytest.approx((2 * math.pi) ** -1.5)
    assert maxwellian_cell_average(HistogramSpec(1, 16, 8.0)).sum() * (16.0 / 16) ** 3 == pytest.approx(1.0, abs=1e-12)


def test_background_force_vanishes_without_flow():
    grid = Grid.cube(2, 8)
    z = np.zeros((3,) + grid.shape)
    b = np.ones_like(z)
    assert np.all(maxwellian_background_force(z, b) == 0.0)


def test_gyration_matches_analytic_orbit():
    grid = Grid.cube(2, 16)
    fluid = uniform_b_fluid(grid)
    ens = ParticleEnsemble([[3.0, 3.0, 0.0]], [[1.0, 0.0, 0.0]], [1.0])
    dt, n = 1e-3, 1000
    for _ in range(n):
        ens = push_particles(ens, fluid, dt)
    t = n * dt
    assert np.allclose(ens.V[0], [math.cos(t), -math.sin(t), 0.0], atol=1e-12)
    assert np.allclose(ens.X[0, :2], [3.0 + math.sin(t), 3.0 + math.cos(t) - 1.0], atol=1e-12)


def test_rk4_is_fourth_order():
    grid = Grid.cube(2, 16)
    fields = push_fields(np.zeros((3,) + grid.shape), uniform_b_fluid(grid).b)
    errs = []
    for dt in (0.2, 0.1):
        X, V = np.array([[3.0, 3.0, 0.0]]), np.array([[1.0, 0.0, 0.0]])
        for _ in range(int(round(2.0 / dt))):
            X, V, _ = rk4_push(grid, X, V, dt, fields)
        errs.append(np.max(np.abs(V[0] - [math.cos(2.0), -math.sin(2.0), 0.0])))
    assert 3.8 < math.log2(errs[0] / errs[1]) < 4.2


def test_wrap_flag_and_periodicity():
    grid = Grid.cube(2, 16)
    fields = np.zeros((6,) + grid.shape)
    X, V, wrapped = rk4_push(grid, [[6.2, 1.0, 0.0]], [[1.0, 0.0, 0.0]], 0.5, fields)
    assert wrapped
    assert X[0, 0] == pytest.approx(6.7 - 2 * math.pi)
    _, _, wrapped = rk4_push(grid, [[1.0, 1.0, 0.0]], [[1.0, 0.0, 0.0]], 0.5, fields)
    assert not wrapped


def test_push_rejects_bad_dt_and_nan():
    grid = Grid.cube(2, 8)
    fluid = uniform_b_fluid(grid)
    ens = ParticleEnsemble([[1.0, 1.0, 0.0]], [[np.nan, 0.0, 0.0]], [1.0])
    with pytest.raises(ValueError):
        push_particles(ens, fluid, 0.0)
    with pytest.raises(NumericalError):
        push_particles(ens, fluid, 0.1)


def test_deposit_conserves_mass_and_momentum():
    grid = Grid.cube(2, 16)
    ens = sample_maxwellian(5000, grid, seed=1, density=0.5)
    rho, j = deposit_moments(ens, grid)
    assert np.sum(rho) * grid.cell_volume == pytest.approx(ens.mass(), rel=1e-12)
    assert np.allclose(np.sum(j, axis=(1, 2)) * grid.cell_volume, ens.momentum(), atol=1e-12)
    assert ens.mass() == pytest.approx(0.5 * grid.volume)


def test_sampling_is_seeded_and_bounded():
    grid = Grid.cube(3, 8)
    a = sample_maxwellian(2000, grid, seed=7, profile="ball", radius=1.5, v_max=3.0)
    b = sample_maxwellian(2000, grid, seed=7, profile="ball", radius=1.5, v_max=3.0)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.V, b.V)
    r_x, r_v = support_radii(a, grid)
    assert r_x <= 1.5 + 1e-12 and r_v <= 3.0
    with pytest.raises(ValueError):
        sample_maxwellian(10, grid, seed=0, profile="cone")


def test_support_radii_empty_ensemble():
    with pytest.raises(ValueError):
        support_radii(ParticleEnsemble.empty(), Grid.cube(2, 8))


def test_velocity_bound_limits():
    assert velocity_bound(2.0, 1.5, 0.0, 0.5) == pytest.approx(2.5)
    assert velocity_bound(0.0, 1.5, 2.0, 3.0) == pytest.approx(1.5)


def test_support_bound_check_detects_violation():
    series = {"t": np.array([0.0, 1.0]), "r_v": np.array([1.0, 1.0])}
    assert support_bound_check(series, 0.0, 0.0) == 0.0
    series["r_v"] = np.array([1.0, 1.1])
    assert support_bound_check(series, 0.0, 0.0) < 0.0


def test_histogram_conserves_mass():
    grid = Grid.cube(2, 16)
    ens = sample_maxwellian(4000, grid, seed=3, v_max=5.0)
    spec = HistogramSpec(4, 6, 6.0)
    for kernel in ("ngp", "cic"):
        hist, overflow = phase_space_histogram(ens, grid, spec, kernel)
        assert hist.sum() * spec.cell_volume(grid) + overflow == pytest.approx(ens.mass(), rel=1e-12)
    assert perturbation_norm(ParticleEnsemble.empty(), grid, spec) == 0.0


def test_maxwellian_perturbation_shrinks_with_samples():
    grid = Grid.cube(2, 16)
    spec = HistogramSpec(2, 6, 6.0)
    small = perturbation_norm(sample_maxwellian(2000, grid, 0), grid, spec, "maxwellian")
    large = perturbation_norm(sample_maxwellian(200000, grid, 0), grid, spec, "maxwellian")
    assert large < 0.3 * small


def test_noise_floor_scales_like_inverse_sqrt_n():
    grid = Grid.cube(2, 16)
    a = current_noise_floor(sample_maxwellian(1000, grid, 0), grid)
    b = current_noise_floor(sample_maxwellian(4000, grid, 0), grid)
    assert b / a == pytest.approx(0.5, rel=0.05)


def test_ensemble_checkpoint_round_trip(tmp_path):
    ens = sample_maxwellian(100, Grid.cube(2, 8), seed=2)
    ens.save(tmp_path / "p.bin")
    back = ParticleEnsemble.load(tmp_path / "p.bin")
    assert np.array_equal(back.X, ens.X) and np.array_equal(back.V, ens.V) and np.array_equal(back.w, ens.w)


def test_ensemble_rejects_negative_weights():
    with pytest.raises(ValueError):
        ParticleEnsemble([[0, 0, 0]], [[0, 0, 0]], [-1.0])
