"""Property-based checks of the core invariants."""
import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from vmhd import _kernels
from vmhd.cli import format_config, parse_config_text
from vmhd.core import Grid, divergence, leray_project, random_field
from vmhd.linear import ModeState, decay_exponent, semigroup_apply
from vmhd.sim import SimConfig

seeds = st.integers(min_value=0, max_value=2**32 - 1)
sizes = st.sampled_from([8, 12, 16])
times = st.floats(min_value=0.0, max_value=3.0, allow_nan=False)


@settings(max_examples=25, deadline=None)
@given(seed=seeds, n=sizes, dim=st.sampled_from([2, 3]))
def test_leray_idempotent_and_solenoidal(seed, n, dim):
    grid = Grid.cube(dim, n)
    v = random_field(grid, np.random.default_rng(seed))
    p = leray_project(grid, v)
    assert np.max(np.abs(divergence(grid, p))) < 1e-11
    assert np.allclose(leray_project(grid, p), p, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(seed=seeds, s=times, t=times)
def test_semigroup_composition(seed, s, t):
    rng = np.random.default_rng(seed)
    k = rng.integers(-4, 5, size=(6, 3)).astype(float)
    state = ModeState(k, rng.standard_normal((6, 3)), rng.standard_normal((6, 3)))
    a = semigroup_apply(semigroup_apply(state, s), t)
    b = semigroup_apply(state, s + t)
    assert np.allclose(a.u_hat, b.u_hat, rtol=1e-12, atol=1e-300)
    assert np.all(a.mode_energy() <= state.mode_energy() * (1 + 1e-12))


@given(q=st.floats(min_value=1.0, max_value=2.0), m=st.integers(min_value=0, max_value=5))
def test_decay_exponent_is_affine(q, m):
    expected = -1.5 * (1 / q - 0.5) - 0.5 * m
    assert math.isclose(decay_exponent(q, m), expected, abs_tol=1e-15)
    assert math.isclose(decay_exponent(q, m + 1) - decay_exponent(q, m), -0.5)


@settings(max_examples=30, deadline=None)
@given(seed=seeds, dim=st.sampled_from([2, 3]), npart=st.integers(min_value=1, max_value=200))
def test_cic_deposit_and_gather_are_adjoint(seed, dim, npart):
    grid = Grid(dim, (8,) * dim, tuple(np.random.default_rng(seed).uniform(1.0, 10.0, dim)))
    rng = np.random.default_rng(seed + 1)
    X = np.zeros((npart, 3))
    X[:, :dim] = rng.uniform(0.0, 1.0, (npart, dim)) * np.array(grid.lengths)
    q = rng.standard_normal((npart, 1))
    field = rng.standard_normal((1,) + grid.shape)
    dep = _kernels.scatter(grid, q, X)
    assert math.isclose(dep.sum(), q.sum(), rel_tol=1e-12, abs_tol=1e-12)
    got = _kernels.gather(grid, field, X)
    assert math.isclose(float(np.sum(dep * field)), float(np.sum(q * got)), rel_tol=1e-10, abs_tol=1e-10)
    const = np.full((1,) + grid.shape, 2.5)
    assert np.allclose(_kernels.gather(grid, const, X), 2.5)


@settings(max_examples=40, deadline=None)
@given(dt=st.floats(min_value=1e-6, max_value=0.5), mu=st.floats(min_value=0.0, max_value=10.0),
       seed=st.integers(min_value=0, max_value=10**6), anti=st.booleans(),
       bu=st.tuples(*[st.floats(min_value=-5, max_value=5, allow_nan=False)] * 3))
def test_config_echo_is_a_fixpoint(dt, mu, seed, anti, bu):
    cfg = SimConfig(dt=dt, t_end=max(1.0, dt), mu1=mu, seed=seed, antithetic=anti, b_uniform=bu,
                    particles="uniform", n_particles=10)
    assert parse_config_text(format_config(cfg)) == cfg
