"""Fourier-side linear theory: heat semigroup, decay exponents, Duhamel, Picard.

The linearized field equations decouple per wavevector into
``d/dt (u_hat, B_hat) = -|k|^2 (u_hat, B_hat)`` (unit diffusivities), so the
solution operator is multiplication by ``exp(-|k|^2 t)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import gammaln

from .core import Grid, sobolev_norm_hat
from .mhd import FluidState, _decay_factor
from ._kernels import heun_correct, heun_predict, project_inplace
from .vlasov import HistogramSpec, ParticleEnsemble, deposit_moments, phase_space_histogram, push_fields, rk4_push


@dataclass(frozen=True)
class ModeState:
    """Amplitudes ``u_hat``, ``B_hat`` (shape ``(M, 3)``) on wavevectors ``k`` (shape ``(M, 3)``)."""

    k: np.ndarray
    u_hat: np.ndarray
    b_hat: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        k = np.atleast_2d(np.asarray(self.k, dtype=float))
        object.__setattr__(self, "k", k)
        for name in ("u_hat", "b_hat"):
            a = np.asarray(getattr(self, name), dtype=complex).reshape(k.shape)
            object.__setattr__(self, name, a)

    @classmethod
    def from_fluid(cls, state: FluidState) -> "ModeState":
        """Every stored rfft mode of a grid state."""
        grid = state.grid
        k = np.stack([np.broadcast_to(kj, grid.spectral_shape).ravel() for kj in grid.k], axis=1)
        return cls(k, state.u_hat.reshape(3, -1).T, state.b_hat.reshape(3, -1).T, state.t)

    def to_fluid(self, grid: Grid) -> FluidState:
        shape = (3,) + grid.spectral_shape
        return FluidState(grid, self.u_hat.T.reshape(shape).copy(), self.b_hat.T.reshape(shape).copy(), self.t)

    @property
    def k2(self) -> np.ndarray:
        return np.sum(self.k**2, axis=1)

    def mode_energy(self) -> np.ndarray:
        """``|u_hat|^2 + |B_hat|^2`` per mode."""
        return np.sum(np.abs(self.u_hat) ** 2 + np.abs(self.b_hat) ** 2, axis=1)

    def incompressibility_residual(self) -> float:
        """``max |k . u_hat| + |k . B_hat|`` relative to ``max |k| |amplitude|``."""
        ku = np.abs(np.sum(self.k * self.u_hat, axis=1))
        kb = np.abs(np.sum(self.k * self.b_hat, axis=1))
        kn = np.sqrt(self.k2)
        scale = float(np.max(kn * (np.linalg.norm(self.u_hat, axis=1) + np.linalg.norm(self.b_hat, axis=1))))
        return float(np.max(ku + kb)) / scale if scale > 0 else 0.0


def semigroup_apply(state: ModeState, t: float, mu1: float = 1.0, mu2: float = 1.0) -> ModeState:
    """Exact linear evolution by ``t``: each amplitude times ``exp(-mu |k|^2 t)``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    k2 = state.k2[:, None]
    return replace(state, u_hat=state.u_hat * np.exp(-mu1 * k2 * t),
                   b_hat=state.b_hat * np.exp(-mu2 * k2 * t), t=state.t + t)


def decay_exponent(q: float, m: int) -> float:
    """Algebraic rate ``-(3/2)(1/q - 1/2) - m/2`` of ``||grad^m e^(t lap) u_0||_2`` for ``u_0`` in ``L^q``."""
    if not 1.0 <= q <= 2.0:
        raise ValueError(f"q must lie in [1, 2], got {q}")
    if m < 0 or int(m) != m:
        raise ValueError("m must be a nonnegative integer")
    return -1.5 * (1.0 / q - 0.5) - 0.5 * m


# radial quadrature for isotropic data on R^3 ------------------------------------


@dataclass(frozen=True)
class RadialProfile:
    """Gauss-Legendre rule on ``[0, r_max]`` for ``int_{R^3} F(|k|) dk = 4 pi int F(r) r^2 dr``."""

    nodes: np.ndarray
    weights: np.ndarray
    values: np.ndarray | None = None

    @classmethod
    def gauss_legendre(cls, n: int, r_max: float) -> "RadialProfile":
        x, w = leggauss(n)
        return cls(0.5 * r_max * (x + 1.0), 0.5 * r_max * w)

    def with_values(self, fn) -> "RadialProfile":
        return replace(self, values=np.asarray(fn(self.nodes), dtype=float))

    def integrate(self, fn=None) -> float:
        vals = self.values if fn is None else np.asarray(fn(self.nodes), dtype=float)
        return float(4.0 * np.pi * np.sum(self.weights * vals * self.nodes**2))


# Gaussian data u_0 = P[exp(-|x|^2 / (2 sigma^2)) e_1]: the Leray projection keeps
# 2/3 of the spectral power on every sphere, so
#   |u_0_hat(k)|^2 averaged over directions = (2/3) (2 pi sigma^2)^3 exp(-sigma^2 |k|^2)
# and, with ||f||^2 = (2 pi)^-3 int |f_hat|^2 dk,
#   ||grad^m e^(t lap) u_0||^2 = (2/3) sigma^6 4 pi int_0^inf r^(2m+2) exp(-(sigma^2 + 2t) r^2) dr.

_PROJECTED_POWER = 2.0 / 3.0


def _gaussian_prefactor(sigma2: float) -> float:
    """Directional power over ``(2 pi)^3``; multiplies ``int |k|^(2m) e^(-2|k|^2 t - sigma^2 |k|^2) dk``."""
    return _PROJECTED_POWER * sigma2**3


def gaussian_decay_closed_form(t, m: int, sigma2: float = 2.0) -> np.ndarray:
    """Exact ``||grad^m e^(t lap) u_0||_2`` for the projected Gaussian ``u_0``."""
    t = np.asarray(t, dtype=float)
    a = sigma2 + 2.0 * t
    # int_0^inf r^(2m+2) e^(-a r^2) dr = Gamma(m + 3/2) / (2 a^(m + 3/2))
    log_int = gammaln(m + 1.5) - math.log(2.0) - (m + 1.5) * np.log(a)
    return np.sqrt(_gaussian_prefactor(sigma2) * 4.0 * np.pi * np.exp(log_int))


def gaussian_decay_curve(t, m: int, sigma2: float = 2.0, tol: float = 1e-8, n0: int = 32,
                         n_max: int = 8192) -> np.ndarray:
    """``||grad^m e^(t lap) u_0||_2`` by radial quadrature, doubling nodes until converged.

    The integrand ``r^(2m) exp(-(sigma^2 + 2t) r^2)`` is cut at the radius where
    the Gaussian factor falls below ``e^-80``.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    out = np.empty_like(t)
    pref = _gaussian_prefactor(sigma2)
    for i, ti in enumerate(t):
        a = sigma2 + 2.0 * ti
        r_max = math.sqrt(80.0 / a)

        def integrand(r, a=a):
            return r ** (2 * m) * np.exp(-a * r * r)

        n = n0
        prev = RadialProfile.gauss_legendre(n, r_max).integrate(integrand)
        while True:
            n *= 2
            if n > n_max:
                raise ArithmeticError(f"radial quadrature did not converge at t={ti}")
            cur = RadialProfile.gauss_legendre(n, r_max).integrate(integrand)
            if abs(cur - prev) <= tol * abs(cur):
                break
            prev = cur
        out[i] = math.sqrt(pref * cur)
    return out


# Duhamel --------------------------------------------------------------------------


def duhamel_reconstruct(u0: ModeState, forcing, t: float, mu1: float = 1.0, mu2: float = 1.0) -> ModeState:
    """``U(t) = A(t) U_0 + int_0^t A(t - s) G(s) ds`` with the trapezoid rule in ``s``.

    ``forcing`` is a sequence of :class:`ModeState` samples ``G(s_i)`` on a
    uniform grid ``s_i = i t / (n - 1)`` (their ``u_hat``/``b_hat`` hold the
    forcing of each field).
    """
    forcing = list(forcing)
    out = semigroup_apply(u0, t, mu1, mu2)
    if not forcing:
        return out
    if len(forcing) < 2:
        raise ValueError("forcing needs at least two samples covering [0, t]")
    s = np.linspace(0.0, t, len(forcing))
    ds = s[1] - s[0]
    k2 = u0.k2[:, None]
    wu = np.exp(-mu1 * k2 * (t - s[:, None, None]))
    wb = np.exp(-mu2 * k2 * (t - s[:, None, None]))
    trap = np.full(len(forcing), ds)
    trap[0] = trap[-1] = 0.5 * ds
    gu = np.stack([g.u_hat for g in forcing])
    gb = np.stack([g.b_hat for g in forcing])
    du = np.einsum("s,smc->mc", trap, wu * gu)
    db = np.einsum("s,smc->mc", trap, wb * gb)
    return replace(out, u_hat=out.u_hat + du, b_hat=out.b_hat + db)


# Picard iteration ------------------------------------------------------------------


class PicardDivergence(ArithmeticError):
    pass


@dataclass(frozen=True)
class PicardResult:
    """``deltas[n-1] = Delta_n`` with its three surrogate-norm parts.

    The H1 part is ``max_t ||.||_{H^1}`` of the grid fields; the f part is
    ``max_t`` of the L2 norm of the cloud-in-cell phase-space histogram.
    """

    deltas: np.ndarray
    du: np.ndarray
    db: np.ndarray
    df: np.ndarray

    def contracting(self) -> bool:
        return bool(np.all(np.diff(self.deltas) < 0))


@dataclass
class _Iterate:
    u_hat: list
    b_hat: list
    hist: list


def _frozen_fields(grid: Grid, it: _Iterate, k: int) -> np.ndarray:
    return push_fields(grid.backward(it.u_hat[k]), grid.backward(it.b_hat[k]))


def _linear_rhs(grid: Grid, uh, bh, un, bn, rho, j):
    """Spectral RHS of the frozen-coefficient system, without diffusion.

    du/dt = P[-un.grad u + Bn.grad B - 1/2 sum_i Bn_i grad B_i + rho u x Bn - j x B]
    dB/dt = -un.grad B + Bn.grad u
    """
    u = grid.backward(uh)
    b = grid.backward(bh)
    ik = grid.ik_dealiased
    d = grid.dim
    nu = np.zeros((3,) + grid.spectral_shape, dtype=complex)
    nb = np.zeros_like(nu)
    du = [[grid.backward(ik[a] * uh[i]) if a < d else None for a in range(3)] for i in range(3)]
    db = [[grid.backward(ik[a] * bh[i]) if a < d else None for a in range(3)] for i in range(3)]
    phys_u = np.zeros((3,) + grid.shape)
    phys_b = np.zeros((3,) + grid.shape)
    for i in range(3):
        for a in range(d):
            phys_u[i] += -un[a] * du[i][a] + bn[a] * db[i][a]
            phys_b[i] += -un[a] * db[i][a] + bn[a] * du[i][a]
    for a in range(d):
        phys_u[a] -= 0.5 * sum(bn[i] * db[i][a] for i in range(3))
    rxb = np.cross(u, bn, axis=0)
    jxb = np.cross(j, b, axis=0)
    phys_u += rho * rxb - jxb
    nu = grid.dealias(grid.forward(phys_u))
    nb = grid.dealias(grid.forward(phys_b))
    nu = np.ascontiguousarray(nu)
    kf = grid.k_dealiased_flat
    project_inplace(nu.reshape(3, -1), kf[0], kf[1], kf[2])
    nb[(slice(None),) + (0,) * grid.dim] = 0.0
    return nu, nb


def _solve_iterate(grid: Grid, prev: _Iterate, u0h, b0h, ens0: ParticleEnsemble, dt: float, n_steps: int,
                   spec: HistogramSpec) -> _Iterate:
    # particles of f^(n+1) follow the characteristics of the frozen (u^n, B^n)
    X, V, w = ens0.X, ens0.V, ens0.w
    moments = []
    hists = []
    for k in range(n_steps + 1):
        ens = ParticleEnsemble(X, V, w)
        moments.append(deposit_moments(ens, grid))
        hists.append(phase_space_histogram(ens, grid, spec, kernel="cic")[0])
        if k == n_steps or ens.n == 0:
            continue
        f0 = _frozen_fields(grid, prev, k)
        f1 = _frozen_fields(grid, prev, k + 1)
        um = grid.backward(0.5 * (prev.u_hat[k] + prev.u_hat[k + 1]))
        bm = grid.backward(0.5 * (prev.b_hat[k] + prev.b_hat[k + 1]))
        X, V, _ = rk4_push(grid, X, V, dt, f0, push_fields(um, bm), f1)
    if ens0.n == 0:
        hists = [hists[0]] * (n_steps + 1)
        moments = [moments[0]] * (n_steps + 1)
    eu = _decay_factor(grid, 1.0, dt)
    uh, bh = u0h.copy(), b0h.copy()
    us, bs = [uh], [bh]
    flat = (3, -1)
    shape = uh.shape
    for k in range(n_steps):
        coeff0 = (grid.backward(prev.u_hat[k]), grid.backward(prev.b_hat[k])) + moments[k]
        coeff1 = (grid.backward(prev.u_hat[k + 1]), grid.backward(prev.b_hat[k + 1])) + moments[k + 1]
        n0u, n0b = _linear_rhs(grid, uh, bh, *coeff0)
        ups, bps = np.empty(shape, complex), np.empty(shape, complex)
        heun_predict(uh.reshape(flat), n0u.reshape(flat), eu, dt, ups.reshape(flat))
        heun_predict(bh.reshape(flat), n0b.reshape(flat), eu, dt, bps.reshape(flat))
        n1u, n1b = _linear_rhs(grid, ups, bps, *coeff1)
        un, bn = np.empty(shape, complex), np.empty(shape, complex)
        heun_correct(uh.reshape(flat), n0u.reshape(flat), n1u.reshape(flat), eu, dt, un.reshape(flat))
        heun_correct(bh.reshape(flat), n0b.reshape(flat), n1b.reshape(flat), eu, dt, bn.reshape(flat))
        uh, bh = un, bn
        us.append(uh)
        bs.append(bh)
    return _Iterate(us, bs, hists)


def picard_iterate(config, n_iters: int = 4, check_divergence: bool = True) -> PicardResult:
    """Run the frozen-coefficient approximation sequence and measure successive differences.

    Iterate 0 is the initial data held constant in time; iterate ``n + 1``
    moves ``f`` along characteristics of ``(u^n, B^n)`` and then solves the
    linear field system with coefficients ``(u^n, B^n)`` and moments of
    ``f^(n+1)``.  Returns ``Delta_n`` for ``n = 1 .. n_iters``, each the
    distance between iterates ``n + 1`` and ``n``.
    """
    from .sim import initial_fields, initial_particles

    if n_iters < 3:
        raise ValueError("n_iters must be at least 3")
    if config.mu1 != 1.0 or config.mu2 != 1.0:
        raise ValueError("the Picard experiment uses unit diffusivities")
    grid = config.grid()
    fluid = initial_fields(config, grid)
    ens0 = initial_particles(config, grid)
    n_steps = config.n_steps()
    dt = config.t_end / n_steps
    spec = config.histogram()
    hist0 = phase_space_histogram(ens0, grid, spec, kernel="cic")[0]
    it = _Iterate([fluid.u_hat] * (n_steps + 1), [fluid.b_hat] * (n_steps + 1), [hist0] * (n_steps + 1))
    hv = spec.cell_volume(grid)
    iterates = [it]
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(n_iters + 1):
            iterates.append(_solve_iterate(grid, iterates[-1], fluid.u_hat, fluid.b_hat, ens0, dt, n_steps, spec))
        du, db, df = [], [], []
        for n in range(1, n_iters + 1):
            a, b = iterates[n + 1], iterates[n]
            du.append(max(sobolev_norm_hat(grid, x - y, 1) for x, y in zip(a.u_hat, b.u_hat)))
            db.append(max(sobolev_norm_hat(grid, x - y, 1) for x, y in zip(a.b_hat, b.b_hat)))
            df.append(max(math.sqrt(float(np.sum((x - y) ** 2)) * hv) for x, y in zip(a.hist, b.hist)))
        deltas = np.array(du) + np.array(db) + np.array(df)
    if check_divergence:
        if not np.all(np.isfinite(deltas)):
            raise PicardDivergence("iteration diverged: data not small (non-finite iterate)")
        for n in range(len(deltas) - 1):
            if deltas[n + 1] > 10.0 * deltas[n]:
                raise PicardDivergence(f"iteration diverged: data not small (Delta_{n + 2} = {deltas[n + 1]:.3e} "
                                       f"> 10 x Delta_{n + 1} = {deltas[n]:.3e})")
    return PicardResult(deltas, np.array(du), np.array(db), np.array(df))
