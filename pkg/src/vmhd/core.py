"""Periodic grids and pseudo-spectral calculus.

Fields live on a uniform periodic grid in ``d`` = 2 or 3 dimensions.  Vector
fields always carry three components (shape ``(3, *grid.shape)``); when
``d == 2`` they depend on ``x1, x2`` only and derivatives along ``x3``
vanish.  Spectral coefficients use the ``rfftn`` layout over the last ``d``
axes, unnormalised, so the mean of a field is ``coeff[..., 0, ..., 0] / size``.
"""
from __future__ import annotations

import itertools
from functools import cached_property, lru_cache
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from ._kernels import weighted_power

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid with cached spectral tables."""

    dim: int
    n: tuple[int, ...]
    lengths: tuple[float, ...]

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"spatial dimension must be 2 or 3, got {self.dim}")
        if len(self.n) != self.dim or len(self.lengths) != self.dim:
            raise ValueError("n and lengths need one entry per dimension")
        for nj in self.n:
            if nj < 8 or nj % 2:
                raise ValueError(f"points per dimension must be even and >= 8, got {nj}")
        for lj in self.lengths:
            if not (np.isfinite(lj) and lj > 0):
                raise ValueError(f"box lengths must be positive, got {lj}")

    @classmethod
    def cube(cls, dim: int, n: int, length: float = TWO_PI) -> "Grid":
        return cls(dim, (int(n),) * dim, (float(length),) * dim)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n

    @property
    def size(self) -> int:
        return int(np.prod(self.n))

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.dim, 0))

    @cached_property
    def spacing(self) -> np.ndarray:
        return np.array(self.lengths) / np.array(self.n)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    @cached_property
    def lengths3(self) -> np.ndarray:
        """Box lengths padded to three axes (nominal 2*pi for an ignorable x3)."""
        out = np.full(3, TWO_PI)
        out[: self.dim] = self.lengths
        return out

    @cached_property
    def center(self) -> np.ndarray:
        return 0.5 * np.array(self.lengths)

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Broadcastable node coordinates ``x_j = i * h_j``."""
        out = []
        for j in range(self.dim):
            x = np.arange(self.n[j]) * self.spacing[j]
            shp = [1] * self.dim
            shp[j] = self.n[j]
            out.append(x.reshape(shp))
        return tuple(out)

    def mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.broadcast_to(c, self.shape) for c in self.coords)

    # spectral tables ------------------------------------------------------

    @cached_property
    def spectral_shape(self) -> tuple[int, ...]:
        return self.n[:-1] + (self.n[-1] // 2 + 1,)

    @cached_property
    def mode_index(self) -> tuple[np.ndarray, ...]:
        """Integer mode numbers per axis, broadcastable to ``spectral_shape``."""
        out = []
        for j in range(self.dim):
            nj = self.n[j]
            if j == self.dim - 1:
                m = np.arange(nj // 2 + 1)
            else:
                m = np.fft.fftfreq(nj, 1.0 / nj).round().astype(int)
            shp = [1] * self.dim
            shp[j] = m.size
            out.append(m.reshape(shp))
        return tuple(out)

    @cached_property
    def k(self) -> tuple[np.ndarray, ...]:
        """Three wavenumber components; the x3 entry is zero when ``d == 2``."""
        ks = [self.mode_index[j] * (TWO_PI / self.lengths[j]) for j in range(self.dim)]
        while len(ks) < 3:
            ks.append(np.zeros([1] * self.dim))
        return tuple(ks)

    @cached_property
    def k2(self) -> np.ndarray:
        return np.broadcast_to(sum(kj**2 for kj in self.k[: self.dim]), self.spectral_shape).copy()

    @cached_property
    def k2_safe(self) -> np.ndarray:
        out = self.k2.copy()
        out.flat[0] = 1.0
        return out

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """False on any Nyquist plane."""
        mask = np.ones(self.spectral_shape, dtype=bool)
        for j in range(self.dim):
            mask &= np.abs(self.mode_index[j]) != self.n[j] // 2
        return mask

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3-rule truncation: keep ``|m_j| < N_j / 3`` on every axis."""
        mask = np.ones(self.spectral_shape, dtype=bool)
        for j in range(self.dim):
            mask &= 3 * np.abs(self.mode_index[j]) < self.n[j]
        return mask

    @cached_property
    def ik_dealiased(self) -> tuple[np.ndarray, ...]:
        """``i k_j`` times the dealiasing mask, one full-shape array per resolved axis."""
        return tuple(1j * np.broadcast_to(self.k[j], self.spectral_shape) * self.dealias_mask
                     for j in range(self.dim))

    @cached_property
    def k_dealiased_flat(self) -> np.ndarray:
        """Real ``k_j`` times the dealiasing mask, shape ``(3, n_modes)``; zero rows for unresolved axes."""
        out = np.zeros((3, int(np.prod(self.spectral_shape))))
        for j in range(self.dim):
            out[j] = (np.broadcast_to(self.k[j], self.spectral_shape) * self.dealias_mask).ravel()
        return out

    @cached_property
    def hermitian_weight(self) -> np.ndarray:
        """Multiplicity of each stored rfft mode in the full spectrum."""
        w = np.full(self.spectral_shape, 2.0)
        m_last = self.mode_index[-1]
        w[..., (m_last == 0).ravel()] = 1.0
        w[..., (m_last == self.n[-1] // 2).ravel()] = 1.0
        return w

    # transforms -----------------------------------------------------------

    def forward(self, f: np.ndarray) -> np.ndarray:
        return sfft.rfftn(f, axes=self.axes)

    def backward(self, fh: np.ndarray) -> np.ndarray:
        return sfft.irfftn(fh, s=self.n, axes=self.axes)

    def dealias(self, fh: np.ndarray) -> np.ndarray:
        return fh * self.dealias_mask


def check_finite(*fields: np.ndarray) -> None:
    for f in fields:
        if not np.all(np.isfinite(f)):
            raise ValueError("non-finite field")


def _ik(grid: Grid, axis: int) -> np.ndarray:
    return 1j * grid.k[axis] * grid.nyquist_mask


def spectral_derivative(grid: Grid, f: np.ndarray, axis: int, order: int = 1) -> np.ndarray:
    """Exact derivative of a band-limited field along ``axis`` (0-based)."""
    if order < 1:
        raise ValueError("order must be >= 1")
    if not 0 <= axis < grid.dim:
        raise ValueError(f"axis must be in [0, {grid.dim})")
    check_finite(f)
    fh = grid.forward(f)
    return grid.backward(fh * (1j * grid.k[axis]) ** order * grid.nyquist_mask)


def gradient_hat(grid: Grid, fh: np.ndarray) -> np.ndarray:
    """Spectral gradient of scalar coefficients, shape ``(3, *spectral_shape)``."""
    return np.stack([_ik(grid, j) * fh for j in range(3)])


def divergence_hat(grid: Grid, vh: np.ndarray) -> np.ndarray:
    return sum(_ik(grid, j) * vh[j] for j in range(grid.dim))


def curl_hat(grid: Grid, vh: np.ndarray) -> np.ndarray:
    ik = [_ik(grid, j) for j in range(3)]
    return np.stack([
        ik[1] * vh[2] - ik[2] * vh[1],
        ik[2] * vh[0] - ik[0] * vh[2],
        ik[0] * vh[1] - ik[1] * vh[0],
    ])


def divergence(grid: Grid, v: np.ndarray) -> np.ndarray:
    return grid.backward(divergence_hat(grid, grid.forward(v)))


def curl(grid: Grid, v: np.ndarray) -> np.ndarray:
    return grid.backward(curl_hat(grid, grid.forward(v)))


def cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pointwise cross product over the leading component axis."""
    return np.stack([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])


def dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def leray_project_hat(grid: Grid, vh: np.ndarray) -> np.ndarray:
    kdotv = sum(grid.k[j] * vh[j] for j in range(grid.dim))
    out = vh.copy()
    for j in range(grid.dim):
        out[j] -= grid.k[j] * kdotv / grid.k2_safe
    return out


def leray_project(grid: Grid, v: np.ndarray) -> np.ndarray:
    """Orthogonal projection onto divergence-free fields; the mean is kept."""
    check_finite(v)
    return grid.backward(leray_project_hat(grid, grid.forward(v)))


def advect_hat(grid: Grid, a: np.ndarray, bh: np.ndarray) -> np.ndarray:
    """Dealiased spectral coefficients of ``(a . grad) b`` for physical ``a``."""
    out = np.empty((3,) + grid.spectral_shape, dtype=complex)
    for i in range(3):
        dbi = grid.backward(gradient_hat(grid, bh[i])[: grid.dim])
        out[i] = grid.forward(sum(a[j] * dbi[j] for j in range(grid.dim)))
    return grid.dealias(out)


# norms -----------------------------------------------------------------------


def _spectral_sum(grid: Grid, weight, fh: np.ndarray) -> float:
    """``int |f|^2 * weight(k) dx`` from unnormalised coefficients."""
    w = grid.hermitian_weight if np.isscalar(weight) and weight == 1.0 else _combined_weight(grid, weight)
    fh = np.ascontiguousarray(fh, dtype=complex).reshape((-1, w.size))
    return float(weighted_power(fh, w.reshape(-1)) * grid.volume / grid.size**2)


def _combined_weight(grid: Grid, weight) -> np.ndarray:
    return np.ascontiguousarray(np.broadcast_to(grid.hermitian_weight * weight, grid.spectral_shape))


def l2_norm_hat(grid: Grid, fh: np.ndarray) -> float:
    return np.sqrt(_spectral_sum(grid, 1.0, fh))


def l2_norm(grid: Grid, f: np.ndarray) -> float:
    """Grid-quadrature L2 norm (equals the spectral norm by Parseval)."""
    return float(np.sqrt(np.sum(f**2) * grid.cell_volume))


@lru_cache(maxsize=64)
def sobolev_weight(grid: Grid, s: int, min_order: int = 0) -> np.ndarray:
    """``sum_{min_order <= |alpha| <= s} prod_j k_j^(2 alpha_j)`` per mode (cached, read-only)."""
    k2 = [np.broadcast_to(grid.k[j] ** 2, grid.spectral_shape) for j in range(grid.dim)]
    w = np.zeros(grid.spectral_shape)
    for alpha in itertools.product(range(s + 1), repeat=grid.dim):
        order = sum(alpha)
        if min_order <= order <= s:
            term = np.ones(grid.spectral_shape)
            for j, a in enumerate(alpha):
                if a:
                    term = term * k2[j] ** a
            w += term
    w.flags.writeable = False
    return w


@lru_cache(maxsize=64)
def _sobolev_power_weight(grid: Grid, s: int, min_order: int) -> np.ndarray:
    w = _combined_weight(grid, sobolev_weight(grid, s, min_order)).reshape(-1)
    w.flags.writeable = False
    return w


def sobolev_norm_hat(grid: Grid, vh: np.ndarray, s: int, min_order: int = 0) -> float:
    w = _sobolev_power_weight(grid, s, min_order)
    vh = np.ascontiguousarray(vh, dtype=complex).reshape((-1, w.size))
    return float(np.sqrt(weighted_power(vh, w) * grid.volume / grid.size**2))


def sobolev_norm(grid: Grid, v: np.ndarray, s: int) -> float:
    """``(sum_{|alpha|<=s} ||d^alpha v||_2^2)^(1/2)`` for ``s`` in 0..3."""
    if s not in (0, 1, 2, 3):
        raise ValueError("s must be one of 0, 1, 2, 3")
    return sobolev_norm_hat(grid, grid.forward(v), s)


# identities ------------------------------------------------------------------


def _relative_residual(lhs: np.ndarray, rhs: np.ndarray, *terms: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(t))) for t in (lhs, rhs) + terms)
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(lhs - rhs))) / scale


def identity_residuals(grid: Grid, u: np.ndarray, b: np.ndarray) -> tuple[float, float, float]:
    """Relative max-norm residuals of the three vector identities.

    1. ``(curl B) x B = B.grad B - grad(|B|^2)/2``
    2. ``curl(u x B) = u div B - u.grad B + B.grad u - B div u``
    3. ``u . (u x B) = 0`` pointwise

    Products are dealiased, so inputs should be band-limited to the 2/3 range.
    """
    uh, bh = grid.forward(u), grid.forward(b)

    jxb = grid.dealias(grid.forward(cross(grid.backward(curl_hat(grid, bh)), b)))
    b_grad_b = advect_hat(grid, b, bh)
    grad_b2 = 0.5 * gradient_hat(grid, grid.dealias(grid.forward(dot(b, b))))
    r1 = _relative_residual(grid.backward(jxb), grid.backward(b_grad_b - grad_b2),
                            grid.backward(b_grad_b), grid.backward(grad_b2))

    curl_uxb = curl_hat(grid, grid.dealias(grid.forward(cross(u, b))))
    div_u = grid.backward(divergence_hat(grid, uh))
    div_b = grid.backward(divergence_hat(grid, bh))
    u_div_b = grid.dealias(grid.forward(u * div_b))
    b_div_u = grid.dealias(grid.forward(b * div_u))
    u_grad_b = advect_hat(grid, u, bh)
    b_grad_u = advect_hat(grid, b, uh)
    parts = [u_div_b, u_grad_b, b_grad_u, b_div_u]
    r2 = _relative_residual(grid.backward(curl_uxb),
                            grid.backward(u_div_b - u_grad_b + b_grad_u - b_div_u),
                            *(grid.backward(p) for p in parts))

    triple = dot(u, cross(u, b))
    scale = float(np.max(dot(u, u) * np.sqrt(dot(b, b))))
    r3 = float(np.max(np.abs(triple))) / scale if scale > 0 else 0.0
    return r1, r2, r3


def random_field(grid: Grid, rng: np.random.Generator, solenoidal: bool = False,
                 kmax: float | None = None, amplitude: float = 1.0) -> np.ndarray:
    """Random real band-limited vector field inside the dealiasing band."""
    shape = (3,) + grid.spectral_shape
    fh = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    mask = grid.dealias_mask.copy()
    if kmax is not None:
        mask &= grid.k2 <= kmax**2
    fh *= mask
    v = grid.backward(fh)
    if solenoidal:
        v = leray_project(grid, v)
    v *= amplitude / max(float(np.max(np.abs(v))), 1e-300)
    return v


class NumericalError(FloatingPointError):
    """Non-finite values produced during a run, tagged with phase and step."""

    def __init__(self, message: str, phase: str = "", step: int | None = None):
        self.phase = phase
        self.step = step
        where = f" (phase={phase}, step={step})" if phase or step is not None else ""
        super().__init__(message + where)
