"""Cloud-in-cell gather/scatter kernels.

Node ``i`` of axis ``j`` sits at ``i * h_j``.  A particle at ``x`` touches
nodes ``floor(x/h)`` and ``floor(x/h) + 1`` (mod N) with weights
``1 - frac`` and ``frac``.  Gather and scatter use the same weights.
Loops are serial, so results are bit-reproducible.
"""
import numba
import numpy as np


@numba.njit(cache=True)
def _cell(x, h, n):
    s = x / h
    i = np.floor(s)
    frac = s - i
    i0 = int(i) % n
    if frac >= 1.0:
        frac = 0.0
        i0 = (i0 + 1) % n
    return i0, frac


@numba.njit(cache=True)
def gather2d(fields, X, h0, h1):
    nc, n0, n1 = fields.shape
    npart = X.shape[0]
    out = np.empty((npart, nc))
    for p in range(npart):
        i0, f0 = _cell(X[p, 0], h0, n0)
        j0, f1 = _cell(X[p, 1], h1, n1)
        i1 = (i0 + 1) % n0
        j1 = (j0 + 1) % n1
        w00 = (1.0 - f0) * (1.0 - f1)
        w01 = (1.0 - f0) * f1
        w10 = f0 * (1.0 - f1)
        w11 = f0 * f1
        for c in range(nc):
            out[p, c] = (w00 * fields[c, i0, j0] + w01 * fields[c, i0, j1]
                         + w10 * fields[c, i1, j0] + w11 * fields[c, i1, j1])
    return out


@numba.njit(cache=True)
def gather3d(fields, X, h0, h1, h2):
    nc, n0, n1, n2 = fields.shape
    npart = X.shape[0]
    out = np.zeros((npart, nc))
    for p in range(npart):
        i0, f0 = _cell(X[p, 0], h0, n0)
        j0, f1 = _cell(X[p, 1], h1, n1)
        k0, f2 = _cell(X[p, 2], h2, n2)
        ii = (i0, (i0 + 1) % n0)
        jj = (j0, (j0 + 1) % n1)
        kk = (k0, (k0 + 1) % n2)
        wi = (1.0 - f0, f0)
        wj = (1.0 - f1, f1)
        wk = (1.0 - f2, f2)
        for a in range(2):
            for b in range(2):
                for c3 in range(2):
                    w = wi[a] * wj[b] * wk[c3]
                    for c in range(nc):
                        out[p, c] += w * fields[c, ii[a], jj[b], kk[c3]]
    return out


@numba.njit(cache=True)
def scatter2d(q, X, h0, h1, n0, n1):
    npart, nq = q.shape
    out = np.zeros((nq, n0, n1))
    for p in range(npart):
        i0, f0 = _cell(X[p, 0], h0, n0)
        j0, f1 = _cell(X[p, 1], h1, n1)
        i1 = (i0 + 1) % n0
        j1 = (j0 + 1) % n1
        w00 = (1.0 - f0) * (1.0 - f1)
        w01 = (1.0 - f0) * f1
        w10 = f0 * (1.0 - f1)
        w11 = f0 * f1
        for c in range(nq):
            out[c, i0, j0] += w00 * q[p, c]
            out[c, i0, j1] += w01 * q[p, c]
            out[c, i1, j0] += w10 * q[p, c]
            out[c, i1, j1] += w11 * q[p, c]
    return out


@numba.njit(cache=True)
def scatter3d(q, X, h0, h1, h2, n0, n1, n2):
    npart, nq = q.shape
    out = np.zeros((nq, n0, n1, n2))
    for p in range(npart):
        i0, f0 = _cell(X[p, 0], h0, n0)
        j0, f1 = _cell(X[p, 1], h1, n1)
        k0, f2 = _cell(X[p, 2], h2, n2)
        ii = (i0, (i0 + 1) % n0)
        jj = (j0, (j0 + 1) % n1)
        kk = (k0, (k0 + 1) % n2)
        wi = (1.0 - f0, f0)
        wj = (1.0 - f1, f1)
        wk = (1.0 - f2, f2)
        for a in range(2):
            for b in range(2):
                for c3 in range(2):
                    w = wi[a] * wj[b] * wk[c3]
                    for c in range(nq):
                        out[c, ii[a], jj[b], kk[c3]] += w * q[p, c]
    return out


def gather(grid, fields: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Interpolate ``fields`` (shape ``(C, *grid.shape)``) to positions, -> ``(Np, C)``."""
    fields = np.ascontiguousarray(fields, dtype=np.float64)
    X = np.ascontiguousarray(X, dtype=np.float64)
    h = grid.spacing
    if grid.dim == 2:
        return gather2d(fields, X, h[0], h[1])
    return gather3d(fields, X, h[0], h[1], h[2])


def scatter(grid, q: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Deposit per-particle quantities ``q`` (shape ``(Np, Q)``) onto nodes."""
    q = np.ascontiguousarray(q, dtype=np.float64)
    X = np.ascontiguousarray(X, dtype=np.float64)
    h = grid.spacing
    if grid.dim == 2:
        return scatter2d(q, X, h[0], h[1], *grid.n)
    return scatter3d(q, X, h[0], h[1], h[2], *grid.n)


@numba.njit(cache=True)
def flux_products(u, b, with_b_stress, out):
    """Fill ``out`` (9, M) with the six symmetric stress and three induction flux products."""
    m = u.shape[1]
    for p in range(m):
        u0, u1, u2 = u[0, p], u[1, p], u[2, p]
        b0, b1, b2 = b[0, p], b[1, p], b[2, p]
        out[0, p] = u0 * u0
        out[1, p] = u0 * u1
        out[2, p] = u0 * u2
        out[3, p] = u1 * u1
        out[4, p] = u1 * u2
        out[5, p] = u2 * u2
        if with_b_stress:
            hb = 0.5 * (b0 * b0 + b1 * b1 + b2 * b2)
            out[0, p] += hb - b0 * b0
            out[1, p] -= b0 * b1
            out[2, p] -= b0 * b2
            out[3, p] += hb - b1 * b1
            out[4, p] -= b1 * b2
            out[5, p] += hb - b2 * b2
        out[6, p] = u1 * b0 - b1 * u0
        out[7, p] = u2 * b0 - b2 * u0
        out[8, p] = u2 * b1 - b2 * u1


@numba.njit(cache=True)
def flux_divergence(ph, k0, k1, k2, nu, nb):
    """``nu_i = -i k_j T_ij``, ``nb_i = -i k_j A_ij`` with ``ph`` ordered as in :func:`flux_products`."""
    m = ph.shape[1]
    for p in range(m):
        a = 1j * k0[p]
        c = 1j * k1[p]
        e = 1j * k2[p]
        t00, t01, t02, t11, t12, t22 = ph[0, p], ph[1, p], ph[2, p], ph[3, p], ph[4, p], ph[5, p]
        a01, a02, a12 = ph[6, p], ph[7, p], ph[8, p]
        nu[0, p] = -(a * t00 + c * t01 + e * t02)
        nu[1, p] = -(a * t01 + c * t11 + e * t12)
        nu[2, p] = -(a * t02 + c * t12 + e * t22)
        nb[0, p] = -(c * a01 + e * a02)
        nb[1, p] = -(-a * a01 + e * a12)
        nb[2, p] = -(-a * a02 - c * a12)


@numba.njit(cache=True)
def project_inplace(v, k0, k1, k2):
    """Remove the ``k``-parallel part of spectral vector data ``v`` (3, M); ``k = 0`` is left alone."""
    m = v.shape[1]
    for p in range(m):
        kk = k0[p] * k0[p] + k1[p] * k1[p] + k2[p] * k2[p]
        if kk > 0.0:
            s = (k0[p] * v[0, p] + k1[p] * v[1, p] + k2[p] * v[2, p]) / kk
            v[0, p] -= k0[p] * s
            v[1, p] -= k1[p] * s
            v[2, p] -= k2[p] * s


@numba.njit(cache=True)
def _accel2d(fields, xs, vs, h, out, s):
    """``V x B + E`` at one position; ``fields`` holds ``(B, E)`` as six components."""
    nc, n0, n1 = fields.shape
    i0, f0 = _cell(xs[0], h[0], n0)
    j0, f1 = _cell(xs[1], h[1], n1)
    i1 = (i0 + 1) % n0
    j1 = (j0 + 1) % n1
    w00 = (1.0 - f0) * (1.0 - f1)
    w01 = (1.0 - f0) * f1
    w10 = f0 * (1.0 - f1)
    w11 = f0 * f1
    g0 = w00 * fields[0, i0, j0] + w01 * fields[0, i0, j1] + w10 * fields[0, i1, j0] + w11 * fields[0, i1, j1]
    g1 = w00 * fields[1, i0, j0] + w01 * fields[1, i0, j1] + w10 * fields[1, i1, j0] + w11 * fields[1, i1, j1]
    g2 = w00 * fields[2, i0, j0] + w01 * fields[2, i0, j1] + w10 * fields[2, i1, j0] + w11 * fields[2, i1, j1]
    g3 = w00 * fields[3, i0, j0] + w01 * fields[3, i0, j1] + w10 * fields[3, i1, j0] + w11 * fields[3, i1, j1]
    g4 = w00 * fields[4, i0, j0] + w01 * fields[4, i0, j1] + w10 * fields[4, i1, j0] + w11 * fields[4, i1, j1]
    g5 = w00 * fields[5, i0, j0] + w01 * fields[5, i0, j1] + w10 * fields[5, i1, j0] + w11 * fields[5, i1, j1]
    out[s, 0] = vs[1] * g2 - vs[2] * g1 + g3
    out[s, 1] = vs[2] * g0 - vs[0] * g2 + g4
    out[s, 2] = vs[0] * g1 - vs[1] * g0 + g5


@numba.njit(cache=True)
def _accel3d(fields, xs, vs, h, out, s):
    nc, n0, n1, n2 = fields.shape
    i0, f0 = _cell(xs[0], h[0], n0)
    j0, f1 = _cell(xs[1], h[1], n1)
    k0, f2 = _cell(xs[2], h[2], n2)
    ii = (i0, (i0 + 1) % n0)
    jj = (j0, (j0 + 1) % n1)
    kk = (k0, (k0 + 1) % n2)
    wi = (1.0 - f0, f0)
    wj = (1.0 - f1, f1)
    wk = (1.0 - f2, f2)
    g0 = g1 = g2 = g3 = g4 = g5 = 0.0
    for a in range(2):
        for b in range(2):
            for c3 in range(2):
                w = wi[a] * wj[b] * wk[c3]
                i, j, k = ii[a], jj[b], kk[c3]
                g0 += w * fields[0, i, j, k]
                g1 += w * fields[1, i, j, k]
                g2 += w * fields[2, i, j, k]
                g3 += w * fields[3, i, j, k]
                g4 += w * fields[4, i, j, k]
                g5 += w * fields[5, i, j, k]
    out[s, 0] = vs[1] * g2 - vs[2] * g1 + g3
    out[s, 1] = vs[2] * g0 - vs[0] * g2 + g4
    out[s, 2] = vs[0] * g1 - vs[1] * g0 + g5


@numba.njit(cache=True)
def _stage(X, V, kx, kv, p, s, dt, xs, vs):
    c0 = 0.5 * dt if s < 3 else dt
    for c in range(3):
        if s == 0:
            xs[c] = X[p, c]
            vs[c] = V[p, c]
        else:
            xs[c] = X[p, c] + c0 * kx[s - 1, c]
            vs[c] = V[p, c] + c0 * kv[s - 1, c]
        kx[s, c] = vs[c]


@numba.njit(cache=True)
def _finish(X, V, kx, kv, p, dt, L, dim, Xn, Vn):
    wrapped = False
    for c in range(3):
        x = X[p, c] + (dt / 6.0) * (kx[0, c] + 2.0 * kx[1, c] + 2.0 * kx[2, c] + kx[3, c])
        Vn[p, c] = V[p, c] + (dt / 6.0) * (kv[0, c] + 2.0 * kv[1, c] + 2.0 * kv[2, c] + kv[3, c])
        if c < dim and (x < 0.0 or x >= L[c]):
            wrapped = True
        x = x % L[c]
        if x >= L[c]:
            x = 0.0
        Xn[p, c] = x
    return wrapped


@numba.njit(cache=True)
def rk4_push2d(f_start, f_mid, f_end, X, V, dt, h, L):
    """Classical RK4 for ``dX = V``, ``dV = V x B(X) + E(X)`` with per-stage fields.

    Returns wrapped positions, velocities and whether any particle crossed a
    resolved box face.
    """
    Xn = np.empty_like(X)
    Vn = np.empty_like(V)
    kx = np.empty((4, 3))
    kv = np.empty((4, 3))
    xs = np.empty(3)
    vs = np.empty(3)
    wrapped = False
    for p in range(X.shape[0]):
        for s in range(4):
            _stage(X, V, kx, kv, p, s, dt, xs, vs)
            f = f_mid
            if s == 0:
                f = f_start
            elif s == 3:
                f = f_end
            _accel2d(f, xs, vs, h, kv, s)
        wrapped |= _finish(X, V, kx, kv, p, dt, L, 2, Xn, Vn)
    return Xn, Vn, wrapped


@numba.njit(cache=True)
def rk4_push3d(f_start, f_mid, f_end, X, V, dt, h, L):
    Xn = np.empty_like(X)
    Vn = np.empty_like(V)
    kx = np.empty((4, 3))
    kv = np.empty((4, 3))
    xs = np.empty(3)
    vs = np.empty(3)
    wrapped = False
    for p in range(X.shape[0]):
        for s in range(4):
            _stage(X, V, kx, kv, p, s, dt, xs, vs)
            f = f_mid
            if s == 0:
                f = f_start
            elif s == 3:
                f = f_end
            _accel3d(f, xs, vs, h, kv, s)
        wrapped |= _finish(X, V, kx, kv, p, dt, L, 3, Xn, Vn)
    return Xn, Vn, wrapped


@numba.njit(cache=True)
def max_magnitude(v):
    """``max |v|`` over grid points for a (3, M) array."""
    best = 0.0
    for p in range(v.shape[1]):
        s = v[0, p] * v[0, p] + v[1, p] * v[1, p] + v[2, p] * v[2, p]
        if s > best:
            best = s
    return np.sqrt(best)


@numba.njit(cache=True)
def weighted_power(fh, weight):
    """``sum_c sum_m weight[m] |fh[c, m]|^2`` for complex (C, M) data."""
    total = 0.0
    for c in range(fh.shape[0]):
        for m in range(fh.shape[1]):
            z = fh[c, m]
            total += weight[m] * (z.real * z.real + z.imag * z.imag)
    return total


@numba.njit(cache=True)
def heun_predict(x, n0, e, dt, out):
    """``out = e (x + dt n0)`` over (C, M) arrays with a per-mode factor ``e``."""
    for c in range(x.shape[0]):
        for m in range(x.shape[1]):
            out[c, m] = e[m] * (x[c, m] + dt * n0[c, m])


@numba.njit(cache=True)
def heun_correct(x, n0, n1, e, dt, out):
    """``out = e (x + dt/2 n0) + dt/2 n1``."""
    h = 0.5 * dt
    for c in range(x.shape[0]):
        for m in range(x.shape[1]):
            out[c, m] = e[m] * (x[c, m] + h * n0[c, m]) + h * n1[c, m]
