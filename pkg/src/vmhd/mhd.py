"""Pseudo-spectral incompressible MHD with a particle coupling source.

    du/dt = P[-u.grad u + B.grad B - grad(|B|^2)/2 + S] + mu1 lap u
    dB/dt = -u.grad B + B.grad u + mu2 lap B

``P`` is the Leray projector and ``S = (u rho_f - j_f) x B``.  Diffusion is
integrated exactly per mode, the rest with a two-stage integrating-factor
Heun rule.  All products are dealiased with the 2/3 rule.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property, lru_cache
from pathlib import Path

import numpy as np

from .core import (Grid, NumericalError, check_finite, cross, curl_hat, divergence_hat, dot,
                   gradient_hat, l2_norm_hat, sobolev_norm_hat, advect_hat)
from ._kernels import (flux_divergence, flux_products, heun_correct, heun_predict, max_magnitude,
                       project_inplace)
from .io import atomic_write_bytes, pack_fields, unpack_fields


@dataclass(frozen=True)
class FluidState:
    """Velocity and magnetic field held as spectral coefficients."""

    grid: Grid
    u_hat: np.ndarray
    b_hat: np.ndarray
    t: float = 0.0

    @classmethod
    def from_physical(cls, grid: Grid, u, b, t: float = 0.0) -> "FluidState":
        u = np.broadcast_to(np.asarray(u, dtype=float), (3,) + grid.shape)
        b = np.broadcast_to(np.asarray(b, dtype=float), (3,) + grid.shape)
        check_finite(u, b)
        return cls(grid, grid.forward(u), grid.forward(b), float(t))

    @classmethod
    def zeros(cls, grid: Grid) -> "FluidState":
        z = np.zeros((3,) + grid.spectral_shape, dtype=complex)
        return cls(grid, z, z.copy(), 0.0)

    @cached_property
    def u(self) -> np.ndarray:
        return self.grid.backward(self.u_hat)

    @cached_property
    def b(self) -> np.ndarray:
        if not np.any(self.b_hat):
            return np.zeros((3,) + self.grid.shape)
        return self.grid.backward(self.b_hat)

    def mean_u(self) -> np.ndarray:
        return np.real(self.u_hat[(slice(None),) + (0,) * self.grid.dim]) / self.grid.size

    def mean_b(self) -> np.ndarray:
        return np.real(self.b_hat[(slice(None),) + (0,) * self.grid.dim]) / self.grid.size

    def save(self, path) -> Path:
        return atomic_write_bytes(path, pack_fields(self.grid.n, self.grid.lengths, self.u, self.b))

    @classmethod
    def load(cls, path, t: float = 0.0) -> "FluidState":
        n, lengths, u, b = unpack_fields(Path(path).read_bytes())
        return cls.from_physical(Grid(len(n), n, lengths), u, b, t)


@dataclass
class CouplingSource:
    """Particle moments frozen over a field step.

    ``S = (u rho - j) x B`` is re-evaluated from the stage fields, so the
    source is time-centered within the Heun step while the particles are held.
    """

    rho: np.ndarray
    j: np.ndarray

    def evaluate(self, u: np.ndarray, b: np.ndarray) -> np.ndarray:
        return self.rho * cross(u, b) - cross(self.j, b)


@dataclass
class MHDParams:
    mu1: float = 1.0
    mu2: float = 1.0
    lorentz_form: str = "gradient"  # or "curl": (curl B) x B
    nonlinear_form: str = "flux"  # or "advective": products of gradients as written

    def __post_init__(self):
        if self.lorentz_form not in ("gradient", "curl"):
            raise ValueError(f"lorentz_form must be 'gradient' or 'curl', got {self.lorentz_form!r}")
        if self.nonlinear_form not in ("flux", "advective"):
            raise ValueError(f"nonlinear_form must be 'flux' or 'advective', got {self.nonlinear_form!r}")
        if self.mu1 < 0 or self.mu2 < 0:
            raise ValueError("diffusivities must be nonnegative")


def _source_field(source, u, b):
    if source is None:
        return None
    if isinstance(source, CouplingSource):
        return source.evaluate(u, b)
    return np.asarray(source, dtype=float)


def _flux_terms(grid: Grid, u, b, with_b_stress: bool, b_zero: bool = False):
    """``(-d_j T_ij, -d_j A_ij)`` with ``T = uu - BB + |B|^2/2 I`` and ``A_ij = u_j B_i - B_j u_i``.

    Equal to the advective forms for solenoidal ``u`` and ``B``.  With ``b_zero``
    the induction fluxes are known to vanish and are not transformed.
    """
    m = grid.size
    prod = np.empty((9,) + grid.shape)
    flux_products(u.reshape(3, m), b.reshape(3, m), with_b_stress, prod.reshape(9, m))
    if b_zero:
        ph = np.zeros((9,) + grid.spectral_shape, dtype=complex)
        ph[:6] = grid.forward(prod[:6])
    else:
        ph = grid.forward(prod)
    spec = (3,) + grid.spectral_shape
    nu = np.empty(spec, dtype=complex)
    nb = np.empty(spec, dtype=complex)
    k = grid.k_dealiased_flat
    flux_divergence(ph.reshape(9, -1), k[0], k[1], k[2], nu.reshape(3, -1), nb.reshape(3, -1))
    return nu, nb


def nonlinear_terms(grid: Grid, u_hat, b_hat, source=None, params: MHDParams | None = None,
                    u=None, b=None):
    """Dealiased spectral nonlinear tendencies ``(N_u, N_b)``, ``N_u`` projected."""
    params = params or MHDParams()
    b_zero = not np.any(b_hat)
    u = grid.backward(u_hat) if u is None else u
    if b is None:
        b = np.zeros((3,) + grid.shape) if b_zero else grid.backward(b_hat)
    curl_form = params.lorentz_form == "curl"
    if params.nonlinear_form == "flux":
        nu, nb = _flux_terms(grid, u, b, not curl_form, b_zero)
    else:
        nu = -advect_hat(grid, u, u_hat)
        if not curl_form:
            nu += advect_hat(grid, b, b_hat)
            nu -= 0.5 * gradient_hat(grid, grid.dealias(grid.forward(dot(b, b))))
        nb = -advect_hat(grid, u, b_hat) + advect_hat(grid, b, u_hat)
    if curl_form:
        jb = cross(grid.backward(curl_hat(grid, b_hat)), b)
        nu += grid.dealias(grid.forward(jb))
    # the coupling source is linear in B
    s = None if b_zero and isinstance(source, CouplingSource) else _source_field(source, u, b)
    if s is not None:
        nu += grid.dealias(grid.forward(s))
    nu = np.ascontiguousarray(nu)
    k = grid.k_dealiased_flat
    # every term of nu is dealiased, so the masked wavenumbers project it exactly
    project_inplace(nu.reshape(3, -1), k[0], k[1], k[2])
    # the induction nonlinearity is an exact divergence: the mean of B never moves
    nb[(slice(None),) + (0,) * grid.dim] = 0.0
    return nu, nb


def mhd_rhs(state: FluidState, source=None, params: MHDParams | None = None):
    """Physical-space tendencies ``(du/dt, dB/dt)`` including diffusion."""
    params = params or MHDParams()
    grid = state.grid
    check_finite(state.u, state.b)
    if source is not None and not isinstance(source, CouplingSource):
        check_finite(source)
    nu, nb = nonlinear_terms(grid, state.u_hat, state.b_hat, source, params, state.u, state.b)
    du = grid.backward(nu - params.mu1 * grid.k2 * state.u_hat)
    db = grid.backward(nb - params.mu2 * grid.k2 * state.b_hat)
    return du, db


@lru_cache(maxsize=16)
def _decay_factor(grid: Grid, mu: float, dt: float) -> np.ndarray:
    """Flattened per-mode factor ``exp(-mu |k|^2 dt)``."""
    e = np.exp(-mu * grid.k2 * dt).reshape(-1)
    e.flags.writeable = False
    return e


def step_mhd(state: FluidState, source, dt: float, params: MHDParams | None = None,
             step: int | None = None) -> FluidState:
    """One integrating-factor Heun step; ``source`` is frozen over the step.

    ``source`` may be ``None``, a fixed array ``S``, or a :class:`CouplingSource`.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    params = params or MHDParams()
    grid = state.grid
    umax = float(max_magnitude(np.ascontiguousarray(state.u).reshape(3, -1)))
    cfl = dt * umax * max(n / L for n, L in zip(grid.n, grid.lengths))
    if cfl > 1.0:
        warnings.warn(f"advective CFL number {cfl:.3g} exceeds 1", RuntimeWarning, stacklevel=2)
    eu = _decay_factor(grid, params.mu1, dt)
    eb = _decay_factor(grid, params.mu2, dt)
    n0u, n0b = nonlinear_terms(grid, state.u_hat, state.b_hat, source, params, state.u, state.b)
    shape = state.u_hat.shape
    flat = (3, -1)
    us, bs = np.empty(shape, dtype=complex), np.empty(shape, dtype=complex)
    heun_predict(state.u_hat.reshape(flat), n0u.reshape(flat), eu, dt, us.reshape(flat))
    heun_predict(state.b_hat.reshape(flat), n0b.reshape(flat), eb, dt, bs.reshape(flat))
    n1u, n1b = nonlinear_terms(grid, us, bs, source, params)
    u_new, b_new = np.empty(shape, dtype=complex), np.empty(shape, dtype=complex)
    heun_correct(state.u_hat.reshape(flat), n0u.reshape(flat), n1u.reshape(flat), eu, dt, u_new.reshape(flat))
    heun_correct(state.b_hat.reshape(flat), n0b.reshape(flat), n1b.reshape(flat), eb, dt, b_new.reshape(flat))
    if not (np.isfinite(u_new.sum()) and np.isfinite(b_new.sum())):
        raise NumericalError("non-finite fluid state", phase="field", step=step)
    return FluidState(grid, u_new, b_new, state.t + dt)


def pressure(state: FluidState, source=None, params: MHDParams | None = None) -> np.ndarray:
    """Diagnostic pressure solving ``lap P = div N`` for the unprojected tendency ``N``."""
    params = params or MHDParams()
    grid = state.grid
    u, b = state.u, state.b
    nu = -advect_hat(grid, u, state.u_hat)
    if params.lorentz_form == "curl":
        nu += grid.dealias(grid.forward(cross(grid.backward(curl_hat(grid, state.b_hat)), b)))
    else:
        nu += advect_hat(grid, b, state.b_hat)
        nu -= 0.5 * gradient_hat(grid, grid.dealias(grid.forward(dot(b, b))))
    s = _source_field(source, u, b)
    if s is not None:
        nu += grid.dealias(grid.forward(s))
    ph = -divergence_hat(grid, nu) / grid.k2_safe
    ph[(0,) * grid.dim] = 0.0
    return grid.backward(ph)


def dissipation_rates(state: FluidState, params: MHDParams | None = None) -> tuple[float, float]:
    """``(mu1 ||grad u||^2, mu2 ||grad B||^2)`` from spectral sums."""
    params = params or MHDParams()
    grid = state.grid
    gu = sobolev_norm_hat(grid, state.u_hat, 1, min_order=1) ** 2
    gb = sobolev_norm_hat(grid, state.b_hat, 1, min_order=1) ** 2
    return params.mu1 * gu, params.mu2 * gb


def energies(state: FluidState) -> tuple[float, float]:
    """``(||u||^2 / 2, ||B||^2 / 2)``."""
    grid = state.grid
    return 0.5 * l2_norm_hat(grid, state.u_hat) ** 2, 0.5 * l2_norm_hat(grid, state.b_hat) ** 2


def max_divergence(state: FluidState) -> tuple[float, float]:
    """Relative max-norm spectral divergence of ``u`` and ``B``."""
    grid = state.grid
    out = []
    for fh, f in ((state.u_hat, state.u), (state.b_hat, state.b)):
        scale = float(np.max(np.abs(f)))
        div = float(np.max(np.abs(grid.backward(divergence_hat(grid, fh)))))
        out.append(div / scale if scale > 0 else div)
    return out[0], out[1]
