import math

import numpy as np
import pytest

from vmhd.core import Grid, NumericalError, random_field, spectral_derivative
from vmhd.mhd import (CouplingSource, FluidState, MHDParams, dissipation_rates, energies, max_divergence,
                      mhd_rhs, nonlinear_terms, pressure, step_mhd)


def shear_state(grid, amp=1.0):
    u = np.zeros((3,) + grid.shape)
    u[0] = amp * np.sin(grid.mesh()[1])
    return FluidState.from_physical(grid, u, np.zeros_like(u))


def random_state(grid, seed, amp=0.3):
    rng = np.random.default_rng(seed)
    u = random_field(grid, rng, solenoidal=True, kmax=3, amplitude=amp)
    b = random_field(grid, rng, solenoidal=True, kmax=3, amplitude=amp)
    return FluidState.from_physical(grid, u, b)


def test_shear_mode_decays_at_unit_rate():
    grid = Grid.cube(2, 16)
    state = shear_state(grid)
    for _ in range(100):
        state = step_mhd(state, None, 0.01)
    u0 = shear_state(grid).u
    assert np.allclose(state.u, u0 * math.exp(-1.0), atol=1e-12)


def test_shear_dissipation_rate():
    grid = Grid.cube(3, 16)
    eps_u, eps_b = dissipation_rates(shear_state(grid))
    assert eps_u == pytest.approx(0.5 * (2 * math.pi) ** 3, rel=1e-12)
    assert eps_b == 0.0
    assert energies(shear_state(grid))[0] == pytest.approx(0.25 * (2 * math.pi) ** 3, rel=1e-12)


def test_magnetic_heat_mode():
    grid = Grid.cube(2, 16)
    x, y = grid.mesh()
    b = np.zeros((3,) + grid.shape)
    b[0] = 0.01 * np.sin(2 * y)
    state = FluidState.from_physical(grid, np.zeros_like(b), b)
    for _ in range(20):
        state = step_mhd(state, None, 0.05, MHDParams(mu2=0.5))
    assert np.allclose(state.b[0], 0.01 * np.sin(2 * y) * math.exp(-0.5 * 4 * 1.0), atol=1e-14)
    assert np.max(np.abs(state.u)) < 1e-16


def test_gradient_source_is_projected_out():
    grid = Grid.cube(2, 16)
    state = random_state(grid, 1)
    x, y = grid.mesh()
    phi = np.sin(x + 2 * y) + np.cos(3 * x)
    grad = np.zeros((3,) + grid.shape)
    grad[0] = spectral_derivative(grid, phi, 0)
    grad[1] = spectral_derivative(grid, phi, 1)
    du0, db0 = mhd_rhs(state)
    du1, db1 = mhd_rhs(state, grad)
    assert np.allclose(du0, du1, atol=1e-12)
    assert np.array_equal(db0, db1)


@pytest.mark.parametrize("dim", [2, 3])
def test_nonlinear_forms_agree(dim):
    grid = Grid.cube(dim, 16)
    s = random_state(grid, dim)
    ref = nonlinear_terms(grid, s.u_hat, s.b_hat, params=MHDParams())
    for form, lorentz in (("advective", "gradient"), ("advective", "curl"), ("flux", "curl")):
        nu, nb = nonlinear_terms(grid, s.u_hat, s.b_hat, params=MHDParams(nonlinear_form=form, lorentz_form=lorentz))
        scale = np.max(np.abs(ref[0])) + np.max(np.abs(ref[1]))
        assert np.max(np.abs(nu - ref[0])) < 1e-10 * scale
        assert np.max(np.abs(nb - ref[1])) < 1e-10 * scale


def test_mean_b_and_divergence_preserved():
    grid = Grid.cube(3, 16)
    s = random_state(grid, 4)
    b_mean = np.array([0.2, -0.1, 0.3])
    s = FluidState.from_physical(grid, s.u, s.b + b_mean[:, None, None, None])
    b_mean = s.mean_b()
    for _ in range(10):
        s = step_mhd(s, None, 0.01)
    assert np.allclose(s.mean_b(), b_mean, atol=1e-15)
    assert max(max_divergence(s)) < 1e-12


def test_inviscid_energy_nearly_conserved():
    grid = Grid.cube(2, 16)
    s = random_state(grid, 5, amp=0.1)
    e0 = sum(energies(s))
    params = MHDParams(mu1=0.0, mu2=0.0)
    for _ in range(20):
        s = step_mhd(s, None, 0.005, params)
    assert abs(sum(energies(s)) - e0) < 1e-6 * e0


def test_coupling_source_does_no_work_for_comoving_particles():
    # j = rho u gives S = (u rho - rho u) x B = 0
    grid = Grid.cube(2, 16)
    s = random_state(grid, 6)
    rho = np.full(grid.shape, 0.7)
    src = CouplingSource(rho, rho * s.u)
    assert np.allclose(src.evaluate(s.u, s.b), 0.0, atol=1e-15)


def test_pressure_of_shear_flow_is_zero():
    grid = Grid.cube(2, 16)
    assert np.max(np.abs(pressure(shear_state(grid)))) < 1e-12


def test_step_errors():
    grid = Grid.cube(2, 16)
    s = shear_state(grid)
    with pytest.raises(ValueError):
        step_mhd(s, None, -0.1)
    with pytest.warns(RuntimeWarning):
        with pytest.raises(NumericalError):
            bad = FluidState(grid, s.u_hat * 1e300, s.b_hat, 0.0)
            step_mhd(bad, None, 1.0)
    with pytest.raises(ValueError):
        MHDParams(lorentz_form="other")
    with pytest.raises(ValueError):
        MHDParams(mu1=-1)


def test_fluid_checkpoint_round_trip(tmp_path):
    grid = Grid(2, (16, 8), (2 * math.pi, 3.0))
    s = random_state(grid, 7)
    s.save(tmp_path / "f.bin")
    back = FluidState.load(tmp_path / "f.bin")
    assert back.grid == grid
    assert np.allclose(back.u, s.u, rtol=0, atol=1e-15) and np.allclose(back.b, s.b, rtol=0, atol=1e-15)
    assert (tmp_path / "f.bin").stat().st_size == 8 + 8 + 2 * 4 + 2 * 8 + 2 * 3 * 128 * 8
