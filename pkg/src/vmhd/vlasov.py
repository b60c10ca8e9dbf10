"""Particle representation of the distribution function.

Each particle carries a position, a velocity and a phase-space weight
(its share of ``int f dx dv``).  Particles move along the characteristics

    dX/ds = V,    dV/ds = (V - u(X)) x B(X),

with ``u`` and ``B`` frozen over a step.  The force is evaluated as
``V x B(X) + E(X)`` with the motional field ``E = -u x B`` formed on the grid
and interpolated with the same cloud-in-cell kernel used for deposition, so
the momentum and energy handed to the fluid balance the particle side exactly
at frozen fields.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from . import _kernels
from .core import Grid, NumericalError, cross
from .io import atomic_write_bytes, pack_ensemble, unpack_ensemble

MAXWELLIAN_NORM = (2.0 * np.pi) ** -1.5


@dataclass
class ParticleEnsemble:
    X: np.ndarray  # (Np, 3), wrapped into the box
    V: np.ndarray  # (Np, 3)
    w: np.ndarray  # (Np,), never modified by the pusher

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float).reshape(-1, 3)
        self.V = np.asarray(self.V, dtype=float).reshape(-1, 3)
        self.w = np.asarray(self.w, dtype=float).reshape(-1)
        if not (self.X.shape[0] == self.V.shape[0] == self.w.shape[0]):
            raise ValueError("X, V and w must describe the same number of particles")
        if np.any(self.w < 0):
            raise ValueError("particle weights must be nonnegative")

    @classmethod
    def empty(cls) -> "ParticleEnsemble":
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0))

    @property
    def n(self) -> int:
        return self.w.shape[0]

    def mass(self) -> float:
        return float(np.sum(self.w))

    def momentum(self) -> np.ndarray:
        return np.sum(self.w[:, None] * self.V, axis=0)

    def kinetic_energy(self) -> float:
        return 0.5 * float(np.sum(self.w * np.einsum("ij,ij->i", self.V, self.V)))

    def save(self, path) -> Path:
        return atomic_write_bytes(path, pack_ensemble(self.X, self.V, self.w))

    @classmethod
    def load(cls, path) -> "ParticleEnsemble":
        return cls(*unpack_ensemble(Path(path).read_bytes()))


def maxwellian(v: np.ndarray) -> np.ndarray:
    """Global Maxwellian ``(2 pi)^(-3/2) exp(-|v|^2 / 2)``; ``v`` has shape (..., 3)."""
    v = np.asarray(v, dtype=float)
    return MAXWELLIAN_NORM * np.exp(-0.5 * np.sum(v * v, axis=-1))


def maxwellian_background_force(u: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``int ((u - v) x B) M dv = u x B`` since ``int M = 1`` and ``int v M = 0``."""
    return cross(u, b)


def lorentz_acceleration(v, u_loc, b_loc) -> np.ndarray:
    """``(v - u) x B`` for single vectors or stacks of shape (..., 3)."""
    rel = np.asarray(v, dtype=float) - np.asarray(u_loc, dtype=float)
    return np.cross(rel, np.asarray(b_loc, dtype=float))


def push_fields(u: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Stack ``(B, -u x B)`` into the 6-component array the pusher gathers."""
    return np.concatenate([b, -cross(u, b)])


def rk4_push(grid: Grid, X, V, dt: float, f_start, f_mid=None, f_end=None):
    """One classical RK4 step of the characteristics.

    ``f_start``, ``f_mid`` and ``f_end`` are the 6-component push fields at the
    beginning, middle and end of the step (all equal for frozen fields).
    Returns ``(X, V, wrapped)`` where ``wrapped`` flags any particle that left
    the box along a resolved axis before the periodic wrap.
    """
    f_start = np.ascontiguousarray(f_start, dtype=np.float64)
    f_mid = f_start if f_mid is None else np.ascontiguousarray(f_mid, dtype=np.float64)
    f_end = f_start if f_end is None else np.ascontiguousarray(f_end, dtype=np.float64)
    X = np.ascontiguousarray(X, dtype=np.float64)
    V = np.ascontiguousarray(V, dtype=np.float64)
    h = np.ones(3)
    h[: grid.dim] = grid.spacing
    kernel = _kernels.rk4_push2d if grid.dim == 2 else _kernels.rk4_push3d
    return kernel(f_start, f_mid, f_end, X, V, float(dt), h, grid.lengths3)


def push_particles(ens: ParticleEnsemble, fluid, dt: float, step: int | None = None) -> ParticleEnsemble:
    """Advance every particle by one RK4 step with ``fluid``'s fields frozen."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if ens.n == 0:
        return ens
    fields = push_fields(fluid.u, fluid.b)
    X, V, _ = rk4_push(fluid.grid, ens.X, ens.V, dt, fields)
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(V))):
        raise NumericalError("NaN in particle push", phase="push", step=step)
    return ParticleEnsemble(X, V, ens.w)


def support_radii(ens: ParticleEnsemble, grid: Grid) -> tuple[float, float]:
    """``(R_x, R_v)``: max distance from the box center and max speed."""
    if ens.n == 0:
        raise ValueError("support radii of an empty ensemble are undefined")
    dx = ens.X[:, : grid.dim] - grid.center
    r_x = float(np.sqrt(np.max(np.einsum("ij,ij->i", dx, dx))))
    r_v = float(np.sqrt(np.max(np.einsum("ij,ij->i", ens.V, ens.V))))
    return r_x, r_v


def velocity_bound(t, r_v0: float, beta: float, gamma: float) -> np.ndarray:
    """Gronwall envelope ``e^(beta t) R_v(0) + gamma/beta (e^(beta t) - 1)``."""
    t = np.asarray(t, dtype=float)
    if beta == 0.0:
        return r_v0 + gamma * t
    growth = np.expm1(beta * t)
    return r_v0 + r_v0 * growth + (gamma / beta) * growth


def support_bound_check(series, beta: float, gamma: float) -> float:
    """Smallest ``bound - R_v(t)`` over the samples after the first.

    ``series`` maps ``"t"`` and ``"r_v"`` to arrays; ``beta = sup ||B||_inf``
    and ``gamma = sup ||u||_inf ||B||_inf`` come from the same run.
    """
    if beta < 0 or gamma < 0:
        raise ValueError("beta and gamma must be nonnegative")
    t = np.asarray(series["t"], dtype=float)
    r_v = np.asarray(series["r_v"], dtype=float)
    if t.size < 2:
        return 0.0
    t = t - t[0]
    slack = velocity_bound(t, r_v[0], beta, gamma) - r_v
    return float(np.min(slack[1:]))


def position_bound_slack(series, beta: float, gamma: float, t_stop: float | None = None) -> float:
    """Slack of ``R_x(t) <= R_x(0) + int_0^t bound_v``, checked before ``t_stop``."""
    t = np.asarray(series["t"], dtype=float) - float(series["t"][0])
    r_x = np.asarray(series["r_x"], dtype=float)
    r_v0 = float(series["r_v"][0])
    if beta == 0.0:
        travel = r_v0 * t + 0.5 * gamma * t**2
    else:
        e = np.expm1(beta * t)
        travel = (r_v0 + gamma / beta) * e / beta - (gamma / beta) * t
    slack = r_x[0] + travel - r_x
    keep = np.ones_like(t, dtype=bool)
    keep[0] = False
    if t_stop is not None:
        keep &= t <= t_stop - float(series["t"][0])
    return float(np.min(slack[keep])) if np.any(keep) else 0.0


def deposit_moments(ens: ParticleEnsemble, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Cloud-in-cell density ``rho = int f dv`` and current ``j = int v f dv``."""
    if ens.n == 0:
        return np.zeros(grid.shape), np.zeros((3,) + grid.shape)
    q = np.empty((ens.n, 4))
    q[:, 0] = ens.w
    q[:, 1:] = ens.w[:, None] * ens.V
    out = _kernels.scatter(grid, q, ens.X) / grid.cell_volume
    return out[0], out[1:]


def current_noise_floor(ens: ParticleEnsemble, grid: Grid) -> float:
    """Upper estimate of the L2 norm of the sampling noise in ``j``.

    For independent particles ``E ||j - <j>||^2 <= sum w^2 |V|^2 / cell_volume``
    (the CIC weights satisfy ``sum_n W^2 <= 1``).
    """
    if ens.n == 0:
        return 0.0
    s = np.sum(ens.w**2 * np.einsum("ij,ij->i", ens.V, ens.V))
    return float(np.sqrt(s / grid.cell_volume))


def sample_maxwellian(n: int, grid: Grid, seed: int, profile: str = "uniform", density: float = 1.0,
                      v_max: float | None = 6.0, radius: float = 1.0, v_scale: float = 1.0) -> ParticleEnsemble:
    """Draw ``n`` particles from ``density * profile(x) * M(v)``.

    Positions: ``"uniform"`` over the box, or ``"ball"`` (uniform in a ball of
    ``radius`` about the box center, by rejection from the enclosing cube).
    Velocities: ``v_scale`` times standard normals from numpy's PCG64
    generator (ziggurat transform), redrawn while ``|v| > v_max``.
    Weights are equal and sum to ``density`` times the occupied volume.
    """
    if n < 1:
        raise ValueError("need at least one particle")
    rng = np.random.default_rng(seed)
    d = grid.dim
    L = grid.lengths3
    X = np.empty((n, 3))
    if profile == "uniform":
        X[:] = rng.uniform(0.0, 1.0, size=(n, 3)) * L
        region = grid.volume
    elif profile == "ball":
        filled = 0
        while filled < n:
            cand = rng.uniform(-radius, radius, size=(2 * (n - filled) + 16, d))
            cand = cand[np.einsum("ij,ij->i", cand, cand) <= radius**2][: n - filled]
            X[filled:filled + len(cand), :d] = grid.center + cand
            filled += len(cand)
        if d == 2:
            X[:, 2] = rng.uniform(0.0, L[2], size=n)
        region = np.pi * radius**2 if d == 2 else 4.0 / 3.0 * np.pi * radius**3
    else:
        raise ValueError(f"unknown spatial profile {profile!r}")
    V = rng.standard_normal((n, 3)) * v_scale
    if v_max is not None:
        bad = np.einsum("ij,ij->i", V, V) > v_max**2
        while np.any(bad):
            V[bad] = rng.standard_normal((int(bad.sum()), 3)) * v_scale
            bad = np.einsum("ij,ij->i", V, V) > v_max**2
    X = np.mod(X, L)
    w = np.full(n, density * region / n)
    return ParticleEnsemble(X, V, w)


# phase-space histograms --------------------------------------------------------


@dataclass(frozen=True)
class HistogramSpec:
    nx: int = 8
    nv: int = 8
    vmax: float = 6.0

    def cell_volume(self, grid: Grid) -> float:
        dx = np.prod(np.array(grid.lengths) / self.nx)
        return float(dx * (2.0 * self.vmax / self.nv) ** 3)

    def shape(self, grid: Grid) -> tuple[int, ...]:
        return (self.nx,) * grid.dim + (self.nv,) * 3


def phase_space_histogram(ens: ParticleEnsemble, grid: Grid, spec: HistogramSpec, kernel: str = "ngp"):
    """Coarse phase-space density: weight per cell divided by cell volume.

    Returns ``(hist, overflow)`` where ``overflow`` is the weight that fell
    outside the velocity window ``[-vmax, vmax)^3``.  ``kernel="cic"`` spreads
    each particle multilinearly over neighbouring cell centers (periodic in x).
    """
    shape = spec.shape(grid)
    cv = spec.cell_volume(grid)
    if ens.n == 0:
        return np.zeros(shape), 0.0
    d = grid.dim
    hx = np.array(grid.lengths) / spec.nx
    hv = 2.0 * spec.vmax / spec.nv
    coords = np.concatenate([ens.X[:, :d] / hx, (ens.V + spec.vmax) / hv], axis=1)
    periodic = [True] * d + [False] * 3
    dims = np.array(shape)
    if kernel == "ngp":
        idx = np.floor(coords).astype(np.int64)
        for a in range(d):
            idx[:, a] %= dims[a]
        inside = np.all((idx >= 0) & (idx < dims), axis=1)
        flat = np.ravel_multi_index(tuple(idx[inside].T), shape)
        hist = np.bincount(flat, weights=ens.w[inside], minlength=int(np.prod(shape)))
        overflow = float(np.sum(ens.w[~inside]))
        return hist.reshape(shape) / cv, overflow
    if kernel != "cic":
        raise ValueError(f"unknown kernel {kernel!r}")
    s = coords - 0.5
    base = np.floor(s).astype(np.int64)
    frac = s - base
    total = np.zeros(int(np.prod(shape)))
    deposited = 0.0
    ndim = len(shape)
    for corner in range(2**ndim):
        offs = np.array([(corner >> a) & 1 for a in range(ndim)])
        idx = base + offs
        wgt = ens.w * np.prod(np.where(offs == 1, frac, 1.0 - frac), axis=1)
        ok = np.ones(ens.n, dtype=bool)
        for a in range(ndim):
            if periodic[a]:
                idx[:, a] %= dims[a]
            else:
                ok &= (idx[:, a] >= 0) & (idx[:, a] < dims[a])
        flat = np.ravel_multi_index(tuple(idx[ok].T), shape)
        total += np.bincount(flat, weights=wgt[ok], minlength=total.size)
        deposited += float(np.sum(wgt[ok]))
    return total.reshape(shape) / cv, max(ens.mass() - deposited, 0.0)


def maxwellian_cell_average(spec: HistogramSpec) -> np.ndarray:
    """Exact average of ``M`` over each velocity cell, shape ``(nv, nv, nv)``."""
    edges = np.linspace(-spec.vmax, spec.vmax, spec.nv + 1)
    hv = edges[1] - edges[0]
    m1 = (ndtr(edges[1:]) - ndtr(edges[:-1])) / hv
    return m1[:, None, None] * m1[None, :, None] * m1[None, None, :]


def perturbation_norm(ens: ParticleEnsemble, grid: Grid, spec: HistogramSpec, mode: str = "vacuum",
                      density: float = 1.0, kernel: str = "ngp") -> float:
    """Discrete L2(x, v) norm of ``f`` (vacuum) or ``f - density * M`` (maxwellian)."""
    hist, _ = phase_space_histogram(ens, grid, spec, kernel=kernel)
    if mode == "maxwellian":
        m = maxwellian_cell_average(spec)
        hist = hist - density * m.reshape((1,) * grid.dim + m.shape)
    elif mode != "vacuum":
        raise ValueError(f"mode must be 'vacuum' or 'maxwellian', got {mode!r}")
    return float(np.sqrt(np.sum(hist**2) * spec.cell_volume(grid)))
